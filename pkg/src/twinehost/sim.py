"""Simulated enclave boundary, secure-memory and EPC paging costs.

All charges are accumulated as integer picoseconds so that identical
workloads give bit-identical reports and separate runs add up exactly.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

log = logging.getLogger(__name__)

PAGE_SIZE = 4096
MiB = 1 << 20

CROSSING_CYCLES = 13_100
CPU_GHZ = 3.8
EPC_USABLE = 93 * MiB

BUCKETS = ("boundary", "clear", "secure_write", "paging", "untrusted_read", "app")


@dataclass(frozen=True)
class CostModel:
    """Per-event simulated costs, in nanoseconds.

    ``untrusted_io_cost`` is charged per byte moved by the untrusted side of a
    file operation and lands in the ``untrusted_read`` bucket;
    ``app_op_cost`` is charged per application-level record operation.
    """
    crossing_cost: float = CROSSING_CYCLES / CPU_GHZ
    secure_write_cost: float = 2.75
    clear_cost: float = 2.0
    epc_limit: int = EPC_USABLE
    page_fault_cost: float = 12_000.0
    untrusted_io_cost: float = 1.25
    app_op_cost: float = 1_900.0
    enabled: bool = True

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "enabled" and v < 0:
                raise ValueError(f"{f.name} must be >= 0")

    @classmethod
    def disabled(cls) -> "CostModel":
        return cls(enabled=False)


def load_profile(name_or_path: str) -> CostModel:
    """Load a named profile shipped with the package, or a key=value file.

    ``off`` yields a disabled model.
    """
    if name_or_path == "off":
        return CostModel.disabled()
    p = Path(name_or_path)
    if p.suffix == ".ini" and p.exists():
        text = p.read_text()
    else:
        try:
            text = resources.files("twinehost.profiles").joinpath(f"{name_or_path}.ini").read_text()
        except FileNotFoundError:
            raise ValueError(f"unknown cost profile {name_or_path!r}") from None
    parser = configparser.ConfigParser()
    parser.read_string(text)
    section = parser["cost_model"]
    kwargs = {}
    types = {f.name: f.type for f in fields(CostModel)}
    for key, raw in section.items():
        if key not in types:
            raise ValueError(f"unknown cost model key {key!r}")
        if key == "enabled":
            kwargs[key] = section.getboolean(key)
        elif key == "epc_limit":
            kwargs[key] = parse_size(raw)
        else:
            kwargs[key] = float(raw)
    return CostModel(**kwargs)


def profile_names() -> list[str]:
    files = resources.files("twinehost.profiles").iterdir()
    return sorted(f.name[:-4] for f in files if f.name.endswith(".ini")) + ["off"]


def parse_size(text: str) -> int:
    text = text.strip()
    units = {"KiB": 1 << 10, "MiB": 1 << 20, "GiB": 1 << 30, "K": 1 << 10, "M": 1 << 20, "G": 1 << 30}
    for suffix, mult in units.items():
        if text.endswith(suffix):
            return int(float(text[: -len(suffix)]) * mult)
    return int(text)


@dataclass
class Accounting:
    crossings: int = 0
    passthrough_crossings: int = 0
    page_faults: int = 0
    simulated_ns: dict[str, float] = field(default_factory=lambda: dict.fromkeys(BUCKETS, 0.0))
    resident_bytes: int = 0
    peak_resident: int = 0

    @property
    def total_ns(self) -> float:
        return sum(self.simulated_ns.values())

    def shares(self) -> dict[str, float]:
        total = self.total_ns
        if total == 0:
            return dict.fromkeys(BUCKETS, 0.0)
        return {k: v / total for k, v in self.simulated_ns.items()}

    def to_json(self) -> str:
        d = asdict(self)
        d["total_ns"] = self.total_ns
        return json.dumps(d, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k in ("crossings", "passthrough_crossings", "page_faults", "resident_bytes", "peak_resident"):
            w.writerow([k, getattr(self, k)])
        for k in BUCKETS:
            w.writerow([f"{k}_ns", repr(self.simulated_ns[k])])
        return buf.getvalue()


def _ps(ns: float) -> int:
    return round(ns * 1000)


class BoundarySim:
    """Charges simulated time for boundary crossings and secure-memory use."""

    def __init__(self, model: CostModel | None = None):
        self.configure(model or CostModel())

    def configure(self, model: CostModel) -> None:
        self.model = model
        on = model.enabled
        self._crossing_ps = _ps(model.crossing_cost) if on else 0
        self._clear_ps = _ps(model.clear_cost) if on else 0
        self._secure_ps = _ps(model.secure_write_cost) if on else 0
        self._fault_ps = _ps(model.page_fault_cost) if on else 0
        self._io_ps = _ps(model.untrusted_io_cost) if on else 0
        self._app_ps = _ps(model.app_op_cost) if on else 0
        self._epc_pages = model.epc_limit // PAGE_SIZE
        self.reset()

    def reset(self) -> None:
        self.crossings = 0
        self.passthrough_crossings = 0
        self.page_faults = 0
        self._buckets = dict.fromkeys(BUCKETS, 0)
        self.resident_bytes = 0
        self.peak_resident = 0
        self._epc: OrderedDict = OrderedDict()
        self._known: set = set()
        self._anon: list[int] = []
        self._anon_next = 0

    # -- charges -----------------------------------------------------------

    def crossing(self, direction: str = "ocall", passthrough: bool = False) -> None:
        if direction not in ("ocall", "ecall"):
            raise ValueError(f"bad crossing direction {direction!r}")
        self.crossings += 1
        if passthrough:
            self.passthrough_crossings += 1
        self._buckets["boundary"] += 2 * self._crossing_ps

    def mem(self, bytes_cleared: int = 0, bytes_secure_written: int = 0, resident_delta: int = 0) -> None:
        self._buckets["clear"] += self._clear_ps * bytes_cleared
        self._buckets["secure_write"] += self._secure_ps * bytes_secure_written
        if resident_delta:
            self._resize(resident_delta)

    def untrusted_io(self, nbytes: int) -> None:
        self._buckets["untrusted_read"] += self._io_ps * nbytes

    def app(self, ops: int = 1) -> None:
        self._buckets["app"] += self._app_ps * ops

    def touch(self, key) -> None:
        """Access one named secure-memory page; first access makes it resident."""
        if key not in self._known:
            self._known.add(key)
            self._set_resident(self.resident_bytes + PAGE_SIZE)
            self._insert(key)
        elif key in self._epc:
            self._epc.move_to_end(key)
        else:
            self._insert(key)

    # -- paging internals --------------------------------------------------

    def _set_resident(self, value: int) -> None:
        self.resident_bytes = value
        self.peak_resident = max(self.peak_resident, value)

    def _insert(self, key) -> None:
        # a page entering a full EPC costs one fault (evicting the LRU page)
        if len(self._epc) >= self._epc_pages:
            self.page_faults += 1
            self._buckets["paging"] += self._fault_ps
            if self._epc:
                self._epc.popitem(last=False)
        if self._epc_pages > 0:
            self._epc[key] = None

    def _resize(self, delta: int) -> None:
        before = self.resident_bytes
        after = before + delta
        if after < 0:
            log.warning("resident bytes would go negative (%d); clamping to 0", after)
            after = 0
        self._set_resident(after)
        old_pages = -(-before // PAGE_SIZE)
        new_pages = -(-after // PAGE_SIZE)
        for _ in range(new_pages - old_pages):
            key = ("anon", self._anon_next)
            self._anon_next += 1
            self._anon.append(key[1])
            self._insert(key)
        for _ in range(old_pages - new_pages):
            if not self._anon:
                break
            self._epc.pop(("anon", self._anon.pop()), None)

    # -- reporting ---------------------------------------------------------

    def report(self) -> Accounting:
        return Accounting(
            crossings=self.crossings,
            passthrough_crossings=self.passthrough_crossings,
            page_faults=self.page_faults,
            simulated_ns={k: v / 1000 for k, v in self._buckets.items()},
            resident_bytes=self.resident_bytes,
            peak_resident=self.peak_resident,
        )

    @property
    def total_ps(self) -> int:
        return sum(self._buckets.values())

    def with_epc(self, epc_limit: int) -> "BoundarySim":
        return BoundarySim(replace(self.model, epc_limit=epc_limit))


NULL_SIM = None  # store/bridge accept ``sim=None`` to skip accounting
