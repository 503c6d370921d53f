"""Record-store micro-benchmarks: insert, sequential read, random read.

Records are fixed 1032-byte slots (``id`` as u64 little-endian followed by a
1024-byte blob) stored at offset ``id * 1032``.  Sweeps grow the store from
``start_records`` to ``max_records`` in ``step`` increments and emit one sample
per (records, op) point.

Sample semantics:

* ``insert`` samples are cumulative: the cost of building a store of
  ``records`` slots from empty (so the series is non-decreasing).
* ``seq_read`` and ``rand_read`` samples cover one cold pass of ``records``
  slot reads (or ``draws`` reads when set) against a store of that size.

Record blobs
------------
Blob bytes are portable across implementations.  All arithmetic is mod 2**64::

    splitmix64(z):
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
        return z ^ (z >> 31)

    state = splitmix64(seed + 0x9E3779B97F4A7C15 * (id + 1))
    if state == 0: state = 0x9E3779B97F4A7C15
    repeat 128 times (xorshift64*):
        state ^= state >> 12
        state ^= state << 25
        state ^= state >> 27
        emit u64 LE of state * 0x2545F4914F6CDD1D

Random-read ids come from one xorshift64* stream seeded the same way with
``id = 2**63 + records`` and mapped to ``[0, records)`` by ``(x * records) >> 64``.
"""
from __future__ import annotations

import configparser
import csv
import enum
import io
import os
import struct
import tempfile
import time
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .sim import BUCKETS, BoundarySim, CostModel, load_profile, parse_size
from .store import (DEFAULT_CACHE_CAPACITY, HostFile, KeyPolicy, ProtectedFile, StoreCounters,
                    Variant)

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
XS_MULT = 0x2545F4914F6CDD1D

BLOB_SIZE = 1024
ID_SIZE = 8
SLOT_SIZE = ID_SIZE + BLOB_SIZE
PAGE = 4096

COUNTER_FIELDS = tuple(f.name for f in fields(StoreCounters))
CSV_HEADER = ("records", "op", "backend", "wall_ns", "simulated_ns") + COUNTER_FIELDS

# fixed benchmark key: the store content is synthetic and the key is not a secret
BENCH_POLICY = KeyPolicy.derived(bytes(32))


class Backend(str, enum.Enum):
    PLAIN_FILE = "plain_file"
    PROTECTED_BASELINE = "protected_baseline"
    PROTECTED_OPTIMIZED = "protected_optimized"
    IN_MEMORY = "in_memory"


class Op(str, enum.Enum):
    INSERT = "insert"
    SEQ_READ = "seq_read"
    RAND_READ = "rand_read"


class DataCorruption(Exception):
    """A record read back does not match what was inserted."""


# -- PRNG --------------------------------------------------------------------

def splitmix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


class XorShift64Star:
    def __init__(self, seed: int, stream: int):
        s = splitmix64(seed + GOLDEN * (stream + 1))
        self.state = s or GOLDEN

    def next(self) -> int:
        s = self.state
        s ^= s >> 12
        s ^= (s << 25) & MASK
        s ^= s >> 27
        self.state = s
        return (s * XS_MULT) & MASK

    def below(self, n: int) -> int:
        return (self.next() * n) >> 64


_BLOB_FMT = struct.Struct(f"<{BLOB_SIZE // 8}Q")


def record_blob(seed: int, rid: int) -> bytes:
    rng = XorShift64Star(seed, rid)
    nxt = rng.next
    return _BLOB_FMT.pack(*[nxt() for _ in range(BLOB_SIZE // 8)])


def make_slot(seed: int, rid: int) -> bytes:
    return struct.pack("<Q", rid) + record_blob(seed, rid)


def rand_ids(seed: int, records: int, draws: int) -> list[int]:
    rng = XorShift64Star(seed, (1 << 63) + records)
    return [rng.below(records) for _ in range(draws)]


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class WorkloadSpec:
    record_blob_size: int = BLOB_SIZE
    start_records: int = 1000
    step: int = 1000
    max_records: int = 16_000
    seed: int = 0
    backend: Backend = Backend.PROTECTED_BASELINE
    cost_profile: str = "paper"
    epc_limit: int | None = None
    draws: int | None = None
    cache_capacity: int = DEFAULT_CACHE_CAPACITY
    workdir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend(self.backend))
        if self.record_blob_size != BLOB_SIZE:
            raise ValueError(f"record_blob_size is fixed at {BLOB_SIZE}")
        if self.start_records < 1 or self.step < 1:
            raise ValueError("start_records and step must be positive")
        if self.max_records < self.start_records:
            raise ValueError("max_records must be >= start_records")
        if not 0 <= self.seed <= MASK:
            raise ValueError("seed must fit in u64")
        if self.draws is not None and self.draws < 1:
            raise ValueError("draws must be positive")

    def points(self) -> list[int]:
        return list(range(self.start_records, self.max_records + 1, self.step))

    def cost_model(self) -> CostModel:
        model = load_profile(self.cost_profile)
        if self.epc_limit is not None:
            model = replace(model, epc_limit=self.epc_limit)
        return model

    @classmethod
    def from_file(cls, path, **overrides) -> "WorkloadSpec":
        """Read a ``[workload]`` section of key = value pairs."""
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)
        section = parser["workload"]
        kw = {}
        for key, raw in section.items():
            if key in ("backend", "cost_profile", "workdir"):
                kw[key] = raw
            elif key == "epc_limit":
                kw[key] = parse_size(raw)
            elif key in {f.name for f in fields(cls)}:
                kw[key] = int(raw)
            else:
                raise ValueError(f"unknown workload key {key!r}")
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)


@dataclass
class BenchSample:
    records: int
    op: Op
    backend: Backend
    wall_ns: int
    simulated_ns: int
    counters: StoreCounters = field(default_factory=StoreCounters)

    def row(self) -> list:
        c = self.counters.as_dict()
        return [self.records, self.op.value, self.backend.value, self.wall_ns, self.simulated_ns,
                *(c[k] for k in COUNTER_FIELDS)]


# -- record stores -----------------------------------------------------------

class _WallClock:
    """Accumulates wall time spent in untrusted host I/O."""

    def __init__(self):
        self.io_ns = 0


class _TimedFile:
    def __init__(self, inner: HostFile, clock: _WallClock):
        self._inner = inner
        self._clock = clock

    def pread(self, n, offset):
        t = time.perf_counter_ns()
        try:
            return self._inner.pread(n, offset)
        finally:
            self._clock.io_ns += time.perf_counter_ns() - t

    def pwrite(self, data, offset):
        t = time.perf_counter_ns()
        try:
            return self._inner.pwrite(data, offset)
        finally:
            self._clock.io_ns += time.perf_counter_ns() - t

    def size(self):
        return self._inner.size()

    def close(self):
        self._inner.close()


class RecordStore:
    counters: StoreCounters

    def write_slot(self, rid: int, slot: bytes) -> None:
        raise NotImplementedError

    def read_slot(self, rid: int) -> bytes:
        raise NotImplementedError

    def flush(self) -> None:
        pass

    def reopen(self) -> None:
        """Drop any cached state so the next reads start cold."""

    def close(self) -> None:
        pass


class InMemoryStore(RecordStore):
    """Slots held in secure memory; each access touches the pages it spans."""

    def __init__(self, sim: BoundarySim):
        self.sim = sim
        self.buf = bytearray()
        self.counters = StoreCounters()

    def _touch(self, rid: int) -> None:
        off = rid * SLOT_SIZE
        for page in range(off // PAGE, (off + SLOT_SIZE - 1) // PAGE + 1):
            self.sim.touch(("rec", page))

    def write_slot(self, rid, slot):
        off = rid * SLOT_SIZE
        if len(self.buf) < off + SLOT_SIZE:
            self.buf.extend(bytes(off + SLOT_SIZE - len(self.buf)))
        self.buf[off:off + SLOT_SIZE] = slot
        self._touch(rid)

    def read_slot(self, rid):
        self._touch(rid)
        off = rid * SLOT_SIZE
        return bytes(self.buf[off:off + SLOT_SIZE])


class PlainFileStore(RecordStore):
    """Unprotected host file; every slot access is one boundary crossing."""

    def __init__(self, path, sim: BoundarySim, clock: _WallClock):
        self.sim = sim
        self.file = _TimedFile(HostFile.open(path, create=True, force=True), clock)
        self.counters = StoreCounters()

    def write_slot(self, rid, slot):
        self.file.pwrite(slot, rid * SLOT_SIZE)
        self.counters.boundary_writes += 1
        self.sim.crossing("ocall")
        self.sim.untrusted_io(SLOT_SIZE)

    def read_slot(self, rid):
        data = self.file.pread(SLOT_SIZE, rid * SLOT_SIZE)
        self.counters.boundary_reads += 1
        self.sim.crossing("ocall")
        self.sim.untrusted_io(SLOT_SIZE)
        self.sim.mem(0, SLOT_SIZE, 0)
        return data

    def close(self):
        self.file.close()


class ProtectedStore(RecordStore):
    def __init__(self, path, variant: Variant, sim: BoundarySim, clock: _WallClock,
                 cache_capacity: int):
        self.path = path
        self.variant = variant
        self.sim = sim
        self.clock = clock
        self.cache_capacity = cache_capacity
        self.counters = StoreCounters()
        self.pf = ProtectedFile.create(path, BENCH_POLICY, variant, cache_capacity, force=True,
                                       sim=sim, opener=self._opener)

    def _opener(self, path, create=False, force=False):
        return _TimedFile(HostFile.open(path, create=create, force=force), self.clock)

    def write_slot(self, rid, slot):
        self.pf.seek(rid * SLOT_SIZE)
        self.pf.write(slot)

    def read_slot(self, rid):
        self.pf.seek(rid * SLOT_SIZE)
        return self.pf.read(SLOT_SIZE)

    def flush(self):
        self.pf.flush()

    def reopen(self):
        self._retire()
        self.pf = ProtectedFile.open(self.path, BENCH_POLICY, self.variant, self.cache_capacity,
                                     sim=self.sim, opener=self._opener)

    def _retire(self):
        self.pf.close()
        _add(self.counters, self.pf.counters)

    def live_counters(self) -> StoreCounters:
        total = self.counters.snapshot()
        _add(total, self.pf.counters)
        return total

    def close(self):
        self._retire()


def _add(acc: StoreCounters, other: StoreCounters) -> None:
    for k in COUNTER_FIELDS:
        setattr(acc, k, getattr(acc, k) + getattr(other, k))


def _diff(a: StoreCounters, b: StoreCounters) -> StoreCounters:
    return StoreCounters(**{k: getattr(a, k) - getattr(b, k) for k in COUNTER_FIELDS})


def _counters(store: RecordStore) -> StoreCounters:
    if isinstance(store, ProtectedStore):
        return store.live_counters()
    return store.counters.snapshot()


# -- harness -----------------------------------------------------------------

class Harness:
    """One store plus one simulator for the duration of a sweep."""

    def __init__(self, spec: WorkloadSpec, sim: BoundarySim | None = None):
        self.spec = spec
        self.sim = sim or BoundarySim(spec.cost_model())
        self.clock = _WallClock()
        self._tmp = None
        workdir = spec.workdir
        if workdir is None and spec.backend is not Backend.IN_MEMORY:
            self._tmp = tempfile.TemporaryDirectory(prefix="twinehost-bench-")
            workdir = self._tmp.name
        self.path = os.path.join(workdir, f"records-{spec.backend.value}.db") if workdir else None
        self.store = self._make_store()
        self.inserted = 0
        self.crc: list[int] = []
        self.insert_wall = 0
        self.insert_ps = 0
        self.insert_counters = StoreCounters()

    def _make_store(self) -> RecordStore:
        b = self.spec.backend
        if b is Backend.IN_MEMORY:
            return InMemoryStore(self.sim)
        if b is Backend.PLAIN_FILE:
            return PlainFileStore(self.path, self.sim, self.clock)
        variant = Variant.BASELINE if b is Backend.PROTECTED_BASELINE else Variant.OPTIMIZED
        return ProtectedStore(self.path, variant, self.sim, self.clock, self.spec.cache_capacity)

    def close(self) -> None:
        self.store.close()
        if self._tmp is not None:
            self._tmp.cleanup()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _measure(self, fn):
        c0 = _counters(self.store)
        ps0 = self.sim.total_ps
        t0 = time.perf_counter_ns()
        fn()
        wall = time.perf_counter_ns() - t0
        return wall, self.sim.total_ps - ps0, _diff(_counters(self.store), c0)

    def grow_to(self, records: int) -> BenchSample:
        seed = self.spec.seed

        def work():
            for rid in range(self.inserted, records):
                slot = make_slot(seed, rid)
                self.crc.append(zlib.crc32(slot))
                self.sim.app()
                self.store.write_slot(rid, slot)
            self.store.flush()

        wall, ps, c = self._measure(work)
        self.inserted = max(self.inserted, records)
        self.insert_wall += wall
        self.insert_ps += ps
        _add(self.insert_counters, c)
        return BenchSample(records, Op.INSERT, self.spec.backend, self.insert_wall,
                           self.insert_ps // 1000, self.insert_counters.snapshot())

    def _check(self, rid: int, data: bytes) -> None:
        if len(data) != SLOT_SIZE or zlib.crc32(data) != self.crc[rid] \
                or struct.unpack_from("<Q", data)[0] != rid:
            raise DataCorruption(f"record {rid} failed its checksum")

    def read_pass(self, records: int, op: Op) -> BenchSample:
        if op is Op.SEQ_READ:
            n = self.spec.draws or records
            ids = [i % records for i in range(n)]
        else:
            ids = rand_ids(self.spec.seed, records, self.spec.draws or records)

        def work():
            self.store.reopen()
            for rid in ids:
                self.sim.app()
                self._check(rid, self.store.read_slot(rid))

        wall, ps, c = self._measure(work)
        return BenchSample(records, op, self.spec.backend, wall, ps // 1000, c)

    def wall_io_ns(self) -> int:
        return self.clock.io_ns


def run_sweep(spec: WorkloadSpec, ops=(Op.INSERT, Op.SEQ_READ, Op.RAND_READ)) -> list[BenchSample]:
    ops = [Op(o) for o in ops]
    samples = []
    with Harness(spec) as h:
        for n in spec.points():
            s = h.grow_to(n)
            if Op.INSERT in ops:
                samples.append(s)
            for op in (Op.SEQ_READ, Op.RAND_READ):
                if op in ops:
                    samples.append(h.read_pass(n, op))
    return samples


def bench_insert(spec: WorkloadSpec) -> list[BenchSample]:
    return run_sweep(spec, [Op.INSERT])


def bench_seq_read(spec: WorkloadSpec) -> list[BenchSample]:
    return run_sweep(spec, [Op.SEQ_READ])


def bench_rand_read(spec: WorkloadSpec) -> list[BenchSample]:
    return run_sweep(spec, [Op.RAND_READ])


def per_op_ns(samples: list[BenchSample], op: Op = Op.RAND_READ, draws: int | None = None) -> dict[int, float]:
    return {s.records: s.simulated_ns / (draws or s.records) for s in samples if s.op is op}


@dataclass
class Breakdown:
    backend: Backend
    records: int
    draws: int
    simulated_ns: dict[str, float]
    shares: dict[str, float]
    wall_ns: int
    wall_shares: dict[str, float]
    crossings: int
    page_faults: int
    counters: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "backend": self.backend.value, "records": self.records, "draws": self.draws,
            "simulated_ns": self.simulated_ns, "shares": self.shares, "wall_ns": self.wall_ns,
            "wall_shares": self.wall_shares, "crossings": self.crossings,
            "page_faults": self.page_faults, "counters": self.counters,
        }


PROFILE_BUCKETS = ("clear", "boundary", "untrusted_read", "paging", "app")


def bench_profile(spec: WorkloadSpec) -> Breakdown:
    """Bucket breakdown of one cold random-read pass at ``max_records``.

    The copy of ciphertext into secure memory happens as part of the
    boundary transfer, so the ``secure_write`` bucket is reported inside
    ``boundary``.  Wall shares split measured time into host I/O, store work
    and everything else.
    """
    with Harness(spec) as h:
        h.grow_to(spec.max_records)
        before = h.sim.report()
        io0 = h.wall_io_ns()
        sample = h.read_pass(spec.max_records, Op.RAND_READ)
        after = h.sim.report()
        io_ns = h.wall_io_ns() - io0
    raw = {k: after.simulated_ns[k] - before.simulated_ns[k] for k in BUCKETS}
    folded = {
        "clear": raw["clear"],
        "boundary": raw["boundary"] + raw["secure_write"],
        "untrusted_read": raw["untrusted_read"],
        "paging": raw["paging"],
        "app": raw["app"],
    }
    total = sum(folded.values())
    shares = {k: (v / total if total else 0.0) for k, v in folded.items()}
    wall = max(sample.wall_ns, 1)
    wall_shares = {"untrusted_io": io_ns / wall, "enclave": 1 - io_ns / wall}
    return Breakdown(spec.backend, spec.max_records, spec.draws or spec.max_records, folded, shares,
                     sample.wall_ns, wall_shares, after.crossings - before.crossings,
                     after.page_faults - before.page_faults, sample.counters.as_dict())


# -- CSV ---------------------------------------------------------------------

def format_csv(samples: list[BenchSample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in samples:
        w.writerow(s.row())
    return buf.getvalue()


def emit_csv(samples: list[BenchSample], path) -> None:
    Path(path).write_bytes(format_csv(samples).encode("ascii"))


def parse_csv(text: str) -> list[BenchSample]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    out = []
    for r in rows[1:]:
        counters = StoreCounters(**{k: int(v) for k, v in zip(COUNTER_FIELDS, r[5:])})
        out.append(BenchSample(int(r[0]), Op(r[1]), Backend(r[2]), int(r[3]), int(r[4]), counters))
    return out


def load_csv(path) -> list[BenchSample]:
    return parse_csv(Path(path).read_text(encoding="ascii"))
