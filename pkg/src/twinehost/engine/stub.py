"""Built-in interpreter for small, straight-line WASI command modules.

It understands the module sections a WASI command needs (types, imports,
functions, one memory, exports, code, active data) and a handful of
instructions: constants, locals, calls, drop, simple i32/i64 arithmetic and
loads/stores, memory.size/grow, unreachable and return.  Anything else is
rejected at load time, so a module either runs faithfully or not at all.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..wasi.abi import IMPORTS, GuestMemory, WasiAbi
from ..wasi.context import ProcExit
from . import leb
from .base import (TRAP_STATUS, Engine, Instance, LinearMemory, LinkError, MemoryPolicy, Module,
                   Trap, UsageError, ValidationError)

MAGIC = b"\x00asm\x01\x00\x00\x00"
VALTYPES = {0x7F: "i32", 0x7E: "i64"}
WASI_MODULE = "wasi_snapshot_preview1"
MAX_DEPTH = 512
M32, M64 = (1 << 32) - 1, (1 << 64) - 1

# opcode -> immediate kind
OPS = {
    0x00: None, 0x01: None, 0x0F: None, 0x1A: None,
    0x10: "u32", 0x20: "u32", 0x21: "u32", 0x22: "u32",
    0x28: "mem", 0x29: "mem", 0x36: "mem", 0x37: "mem",
    0x41: "s32", 0x42: "s64",
    0x3F: "zero", 0x40: "zero",
    0x45: None, 0x6A: None, 0x6B: None, 0x7C: None, 0x7D: None,
}


@dataclass
class FuncType:
    params: tuple[str, ...]
    results: tuple[str, ...]


@dataclass
class Function:
    type: FuncType
    locals: list[str]
    code: list[tuple[int, object]]


@dataclass
class StubModule(Module):
    types: list[FuncType] = field(default_factory=list)
    imports: list[tuple[str, str]] = field(default_factory=list)
    import_types: list[FuncType] = field(default_factory=list)
    functions: list[Function] = field(default_factory=list)
    min_pages: int = 0
    max_pages: int | None = None
    has_memory: bool = False
    export_map: dict[str, tuple[int, int]] = field(default_factory=dict)
    data: list[tuple[int, bytes]] = field(default_factory=list)

    @property
    def exports(self):
        return list(self.export_map)


class _Reader:
    def __init__(self, buf, pos=0, end=None):
        self.buf = buf
        self.pos = pos
        self.end = len(buf) if end is None else end

    def byte(self):
        if self.pos >= self.end:
            raise ValidationError("unexpected end of section")
        b = self.buf[self.pos]
        self.pos += 1
        return b

    def u32(self):
        v, self.pos = leb.read_u(self.buf, self.pos)
        if self.pos > self.end:
            raise ValidationError("unexpected end of section")
        return v

    def s(self, bits):
        v, self.pos = leb.read_s(self.buf, self.pos, bits)
        return v

    def bytes(self, n):
        if self.pos + n > self.end:
            raise ValidationError("unexpected end of section")
        out = bytes(self.buf[self.pos:self.pos + n])
        self.pos += n
        return out

    def name(self):
        try:
            return self.bytes(self.u32()).decode()
        except UnicodeDecodeError:
            raise ValidationError("malformed utf-8 name") from None

    def valtype(self):
        t = self.byte()
        if t not in VALTYPES:
            raise ValidationError(f"unsupported value type 0x{t:02x}")
        return VALTYPES[t]


def _decode_code(r: _Reader) -> list[tuple[int, object]]:
    code = []
    while True:
        op = r.byte()
        if op == 0x0B:
            if r.pos != r.end:
                raise ValidationError("trailing bytes after function end")
            return code
        if op not in OPS:
            raise ValidationError(f"opcode 0x{op:02x} not supported by the stub engine")
        kind = OPS[op]
        if kind == "u32":
            arg = r.u32()
        elif kind == "mem":
            r.u32()
            arg = r.u32()
        elif kind == "s32":
            arg = r.s(32) & M32
        elif kind == "s64":
            arg = r.s(64) & M64
        elif kind == "zero":
            if r.byte() != 0:
                raise ValidationError("memory index must be 0")
            arg = None
        else:
            arg = None
        code.append((op, arg))


def parse_module(data: bytes) -> StubModule:
    if len(data) < 8 or data[:8] != MAGIC:
        raise ValidationError("not a wasm binary (bad magic or version)")
    m = StubModule()
    func_types: list[int] = []
    bodies = None
    r = _Reader(data, 8)
    last_id = 0
    try:
        while r.pos < len(data):
            sid = r.byte()
            size = r.u32()
            end = r.pos + size
            if end > len(data):
                raise ValidationError("section extends past end of module")
            s = _Reader(data, r.pos, end)
            if sid != 0:
                if sid <= last_id:
                    raise ValidationError("sections out of order")
                last_id = sid
            if sid == 0:
                pass
            elif sid == 1:
                for _ in range(s.u32()):
                    if s.byte() != 0x60:
                        raise ValidationError("bad function type")
                    params = tuple(s.valtype() for _ in range(s.u32()))
                    results = tuple(s.valtype() for _ in range(s.u32()))
                    m.types.append(FuncType(params, results))
            elif sid == 2:
                for _ in range(s.u32()):
                    mod, name, kind = s.name(), s.name(), s.byte()
                    if kind != 0:
                        raise ValidationError("only function imports are supported")
                    m.imports.append((mod, name))
                    m.import_types.append(m.types[s.u32()])
            elif sid == 3:
                func_types = [s.u32() for _ in range(s.u32())]
            elif sid == 5:
                if s.u32() != 1:
                    raise ValidationError("exactly one memory expected")
                flag = s.byte()
                m.min_pages = s.u32()
                m.max_pages = s.u32() if flag & 1 else None
                m.has_memory = True
            elif sid == 7:
                for _ in range(s.u32()):
                    name, kind, idx = s.name(), s.byte(), s.u32()
                    m.export_map[name] = (kind, idx)
            elif sid == 10:
                bodies = []
                for _ in range(s.u32()):
                    size = s.u32()
                    body = _Reader(data, s.pos, s.pos + size)
                    locals_ = []
                    for _ in range(body.u32()):
                        n = body.u32()
                        locals_ += [body.valtype()] * n
                    bodies.append((locals_, _decode_code(body)))
                    s.pos += size
            elif sid == 11:
                for _ in range(s.u32()):
                    if s.u32() != 0:
                        raise ValidationError("only active data segments are supported")
                    if s.byte() != 0x41:
                        raise ValidationError("data offset must be i32.const")
                    off = s.s(32)
                    if s.byte() != 0x0B:
                        raise ValidationError("bad data offset expression")
                    m.data.append((off, s.bytes(s.u32())))
            else:
                raise ValidationError(f"section id {sid} not supported by the stub engine")
            if sid != 0 and s.pos != end:
                raise ValidationError(f"section {sid} size mismatch")
            r.pos = end
    except (IndexError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError(f"malformed module: {e}") from None
    if bodies is None and func_types:
        raise ValidationError("function section without code section")
    if len(bodies or []) != len(func_types):
        raise ValidationError("function and code section counts differ")
    for t, (locals_, code) in zip(func_types, bodies or []):
        m.functions.append(Function(m.types[t], locals_, code))
    start = m.export_map.get("_start")
    if start is None or start[0] != 0:
        raise ValidationError("module does not export a _start function")
    idx = start[1] - len(m.imports)
    if not 0 <= idx < len(m.functions) or m.functions[idx].type.params or m.functions[idx].type.results:
        raise ValidationError("_start must be a local function of type [] -> []")
    if not m.has_memory:
        raise ValidationError("module has no linear memory")
    n_funcs = len(m.imports) + len(m.functions)
    for fn in m.functions:
        for op, arg in fn.code:
            if op == 0x10 and arg >= n_funcs:
                raise ValidationError(f"call to unknown function {arg}")
    return m


class StubInstance(Instance):
    def __init__(self, module: StubModule, ctx, memory: LinearMemory):
        self.module = module
        self.ctx = ctx
        self.memory = memory
        self.abi = WasiAbi(ctx, GuestMemory(memory.view))
        self.started = False
        self.exit_code = None
        self.trap_message = None
        for off, blob in module.data:
            if off < 0 or off + len(blob) > memory.size:
                raise LinkError("data segment does not fit in memory")
            memory.data[off:off + len(blob)] = blob

    def run_start(self) -> int:
        if self.started:
            raise UsageError("_start already invoked on this instance")
        self.started = True
        _, idx = self.module.export_map["_start"]
        try:
            self._invoke(idx, [], 0)
            self.exit_code = 0
        except ProcExit as e:
            self.exit_code = e.code
        except Trap as e:
            self.trap_message = str(e)
            self.exit_code = TRAP_STATUS
        except RecursionError:
            self.trap_message = "call stack exhausted"
            self.exit_code = TRAP_STATUS
        finally:
            self.ctx.close_all()
        return self.exit_code

    def _invoke(self, idx: int, args: list[int], depth: int) -> list[int]:
        n_imp = len(self.module.imports)
        if idx < n_imp:
            name = self.module.imports[idx][1]
            res = self.abi.call(name, *args)
            return [] if res is None or not self.module.import_types[idx].results else [int(res)]
        if depth > MAX_DEPTH:
            raise Trap("call stack exhausted")
        fn = self.module.functions[idx - n_imp]
        locals_ = list(args) + [0] * len(fn.locals)
        stack: list[int] = []
        mem = self.memory
        for op, arg in fn.code:
            if op == 0x41 or op == 0x42:
                stack.append(arg)
            elif op == 0x10:
                ftype = self._type_of(arg)
                n = len(ftype.params)
                if len(stack) < n:
                    raise Trap("value stack underflow")
                call_args = stack[len(stack) - n:] if n else []
                del stack[len(stack) - n:]
                stack += self._invoke(arg, call_args, depth + 1)
            elif op == 0x1A:
                self._pop(stack)
            elif op == 0x20:
                stack.append(locals_[arg])
            elif op == 0x21:
                locals_[arg] = self._pop(stack)
            elif op == 0x22:
                locals_[arg] = stack[-1] if stack else self._pop(stack)
            elif op == 0x00:
                raise Trap("unreachable executed")
            elif op == 0x01:
                pass
            elif op == 0x0F:
                break
            elif op in (0x28, 0x29):
                width = 4 if op == 0x28 else 8
                addr = self._pop(stack) + arg
                if addr + width > mem.size:
                    raise Trap("out of bounds memory access")
                stack.append(int.from_bytes(mem.data[addr:addr + width], "little"))
            elif op in (0x36, 0x37):
                width = 4 if op == 0x36 else 8
                value = self._pop(stack)
                addr = self._pop(stack) + arg
                if addr + width > mem.size:
                    raise Trap("out of bounds memory access")
                mem.data[addr:addr + width] = value.to_bytes(width, "little")
            elif op == 0x3F:
                stack.append(mem.pages)
            elif op == 0x40:
                stack.append(mem.grow(self._pop(stack)) & M32)
            elif op == 0x45:
                stack.append(int(self._pop(stack) == 0))
            elif op == 0x6A:
                b, a = self._pop(stack), self._pop(stack)
                stack.append((a + b) & M32)
            elif op == 0x6B:
                b, a = self._pop(stack), self._pop(stack)
                stack.append((a - b) & M32)
            elif op == 0x7C:
                b, a = self._pop(stack), self._pop(stack)
                stack.append((a + b) & M64)
            elif op == 0x7D:
                b, a = self._pop(stack), self._pop(stack)
                stack.append((a - b) & M64)
        n = len(fn.type.results)
        if len(stack) < n:
            raise Trap("value stack underflow at function end")
        return stack[len(stack) - n:] if n else []

    def _type_of(self, idx: int):
        n_imp = len(self.module.imports)
        if idx < n_imp:
            return self.module.import_types[idx]
        return self.module.functions[idx - n_imp].type

    @staticmethod
    def _pop(stack):
        if not stack:
            raise Trap("value stack underflow")
        return stack.pop()


class StubEngine(Engine):
    name = "stub"

    def load_module(self, data: bytes) -> StubModule:
        return parse_module(bytes(data))

    def instantiate(self, module: StubModule, ctx, memory: MemoryPolicy = MemoryPolicy()) -> StubInstance:
        for (mod, name), ftype in zip(module.imports, module.import_types):
            if mod != WASI_MODULE or name not in IMPORTS:
                raise LinkError(f"unsupported import {mod}.{name}")
            params, results = IMPORTS[name]
            if ftype.params != params or ftype.results != results:
                raise LinkError(f"import {mod}.{name} has the wrong signature")
        mem = LinearMemory(memory, module.min_pages, module.max_pages)
        return StubInstance(module, ctx, mem)
