"""Tiny assembler for WASI command modules (used to produce test fixtures)."""
from __future__ import annotations

import struct

from ..wasi.abi import IMPORTS
from . import leb

_VT = {"i32": 0x7F, "i64": 0x7E}


def _vec(items: list[bytes]) -> bytes:
    return leb.u(len(items)) + b"".join(items)


def _name(s: str) -> bytes:
    b = s.encode()
    return leb.u(len(b)) + b


def _section(sid: int, payload: bytes) -> bytes:
    return bytes([sid]) + leb.u(len(payload)) + payload


# instruction encoders
def i32_const(v: int) -> bytes:
    if v >= 1 << 31:
        v -= 1 << 32
    return b"\x41" + leb.s(v)


def i64_const(v: int) -> bytes:
    if v >= 1 << 63:
        v -= 1 << 64
    return b"\x42" + leb.s(v)


def call(idx: int) -> bytes:
    return b"\x10" + leb.u(idx)


def i32_store(offset: int = 0) -> bytes:
    return b"\x36\x02" + leb.u(offset)


def i32_load(offset: int = 0) -> bytes:
    return b"\x28\x02" + leb.u(offset)


DROP = b"\x1a"
UNREACHABLE = b"\x00"
RETURN = b"\x0f"
NOP = b"\x01"
MEMORY_GROW = b"\x40\x00"


class ModuleBuilder:
    def __init__(self, min_pages: int = 1, max_pages: int | None = None):
        self.min_pages = min_pages
        self.max_pages = max_pages
        self.types: list[bytes] = []
        self.imports: list[bytes] = []
        self.data: list[tuple[int, bytes]] = []
        self.body = bytearray()
        self._import_index: dict[str, int] = {}

    def _type(self, params, results) -> int:
        enc = b"\x60" + _vec([bytes([_VT[p]]) for p in params]) + _vec([bytes([_VT[r]]) for r in results])
        if enc not in self.types:
            self.types.append(enc)
        return self.types.index(enc)

    def wasi(self, name: str, module: str = "wasi_snapshot_preview1", sig=None) -> int:
        """Import a WASI function (signature from the ABI table) and return its index."""
        key = f"{module}.{name}"
        if key not in self._import_index:
            params, results = sig or IMPORTS[name]
            t = self._type(params, results)
            self.imports.append(_name(module) + _name(name) + b"\x00" + leb.u(t))
            self._import_index[key] = len(self.imports) - 1
        return self._import_index[key]

    def put(self, offset: int, blob: bytes) -> int:
        self.data.append((offset, blob))
        return offset

    def emit(self, *code: bytes) -> "ModuleBuilder":
        for c in code:
            self.body += c
        return self

    def call(self, name: str, *args: int, drop: bool = True) -> "ModuleBuilder":
        """Emit a WASI call with constant arguments; discards the errno by default."""
        params, results = IMPORTS[name]
        idx = self.wasi(name)
        for p, a in zip(params, args):
            self.body += i32_const(a) if p == "i32" else i64_const(a)
        self.body += call(idx)
        if drop and results:
            self.body += DROP
        return self

    def build(self) -> bytes:
        start_type = self._type((), ())
        n_imports = len(self.imports)
        out = b"\x00asm\x01\x00\x00\x00"
        out += _section(1, _vec(self.types))
        if self.imports:
            out += _section(2, _vec(self.imports))
        out += _section(3, _vec([leb.u(start_type)]))
        limits = b"\x00" + leb.u(self.min_pages) if self.max_pages is None else \
            b"\x01" + leb.u(self.min_pages) + leb.u(self.max_pages)
        out += _section(5, _vec([limits]))
        out += _section(7, _vec([_name("memory") + b"\x02" + leb.u(0),
                                 _name("_start") + b"\x00" + leb.u(n_imports)]))
        body = b"\x00" + bytes(self.body) + b"\x0b"
        out += _section(10, _vec([leb.u(len(body)) + body]))
        if self.data:
            segs = [b"\x00" + i32_const(off) + b"\x0b" + leb.u(len(blob)) + blob for off, blob in self.data]
            out += _section(11, _vec(segs))
        return out


def iovec(buf: int, length: int) -> bytes:
    return struct.pack("<II", buf, length)
