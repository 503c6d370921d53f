"""Engine-neutral surface: memory policies, modules, instances."""
from __future__ import annotations

import abc
import enum
from dataclasses import dataclass

WASM_PAGE = 65536
TRAP_STATUS = 134


class EngineError(Exception):
    pass


class ValidationError(EngineError):
    pass


class LinkError(EngineError):
    pass


class UsageError(EngineError):
    pass


class Trap(EngineError):
    pass


class MemoryMode(enum.Enum):
    SYSTEM = "system_allocator"
    CUSTOM = "custom_allocator"
    PREALLOCATED = "preallocated_buffer"


@dataclass(frozen=True)
class MemoryPolicy:
    mode: MemoryMode = MemoryMode.SYSTEM
    buffer_size: int = 0

    def __post_init__(self):
        if self.mode is MemoryMode.PREALLOCATED and self.buffer_size <= 0:
            raise ValueError("preallocated_buffer mode needs buffer_size > 0")

    @classmethod
    def parse(cls, text: str) -> "MemoryPolicy":
        """``system``, ``custom`` or ``prealloc:<bytes>``."""
        if text == "system":
            return cls(MemoryMode.SYSTEM)
        if text == "custom":
            return cls(MemoryMode.CUSTOM)
        if text.startswith("prealloc:"):
            from ..sim import parse_size
            return cls(MemoryMode.PREALLOCATED, parse_size(text.split(":", 1)[1]))
        raise ValueError(f"bad memory mode {text!r}")


class LinearMemory:
    """Wasm linear memory whose backing store follows a :class:`MemoryPolicy`.

    ``host_allocations`` counts requests to the host allocator; in
    preallocated mode it stays at 1 for the instance's lifetime.
    """

    def __init__(self, policy: MemoryPolicy, min_pages: int, max_pages: int | None = None):
        self.policy = policy
        self.max_pages = max_pages
        self.pages = min_pages
        self.host_allocations = 0
        need = min_pages * WASM_PAGE
        if policy.mode is MemoryMode.PREALLOCATED:
            if policy.buffer_size < need:
                raise LinkError(
                    f"preallocated buffer of {policy.buffer_size} bytes is smaller than the "
                    f"module minimum of {min_pages} pages ({need} bytes)")
            self.data = self._alloc(policy.buffer_size)
        else:
            self.data = self._alloc(need)

    def _alloc(self, n: int) -> bytearray:
        self.host_allocations += 1
        return bytearray(n)

    @property
    def size(self) -> int:
        return self.pages * WASM_PAGE

    def view(self) -> memoryview:
        return memoryview(self.data)[: self.size]

    def grow(self, delta: int) -> int:
        old = self.pages
        new = old + delta
        if self.max_pages is not None and new > self.max_pages or new > 65536:
            return -1
        need = new * WASM_PAGE
        mode = self.policy.mode
        if mode is MemoryMode.PREALLOCATED:
            if need > len(self.data):
                return -1
        elif need > len(self.data):
            cap = need if mode is MemoryMode.SYSTEM else max(need, 2 * len(self.data))
            fresh = self._alloc(cap)
            fresh[: len(self.data)] = self.data
            self.data = fresh
        self.pages = new
        return old


class Module(abc.ABC):
    exports: list[str]
    imports: list[tuple[str, str]]
    min_pages: int


class Instance(abc.ABC):
    exit_code: int | None = None
    trap_message: str | None = None

    @abc.abstractmethod
    def run_start(self) -> int:
        """Invoke ``_start`` once; returns the exit status."""


class Engine(abc.ABC):
    name: str

    @abc.abstractmethod
    def load_module(self, data: bytes) -> Module:
        ...

    @abc.abstractmethod
    def instantiate(self, module: Module, ctx, memory: MemoryPolicy = MemoryPolicy()) -> Instance:
        ...


def get_engine(name: str = "stub") -> Engine:
    if name == "stub":
        from .stub import StubEngine
        return StubEngine()
    if name == "wasmtime":
        from .wasmtime_engine import WasmtimeEngine
        return WasmtimeEngine()
    raise ValueError(f"unknown engine {name!r}")
