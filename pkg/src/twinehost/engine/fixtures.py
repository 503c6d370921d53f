"""Canonical fixture modules: straight-line WASI call sequences."""
from __future__ import annotations

from .builder import DROP, UNREACHABLE, ModuleBuilder, call, i32_const, i32_load, i32_store, i64_const, iovec

# guest memory map used by the fixtures
IOV = 0       # iovec array
NOUT = 64     # result slot (nwritten / fd / errno scratch)
FDSLOT = 96
STR = 128     # string data


def hello(text: bytes = b"hello\n") -> bytes:
    """Write ``text`` to stdout and return normally (exit 0)."""
    b = ModuleBuilder()
    b.put(IOV, iovec(STR, len(text)))
    b.put(STR, text)
    b.call("fd_write", 1, IOV, 1, NOUT)
    return b.build()


def exit_with(code: int) -> bytes:
    b = ModuleBuilder()
    b.call("proc_exit", code)
    return b.build()


def trap() -> bytes:
    b = ModuleBuilder()
    b.emit(UNREACHABLE)
    return b.build()


def needs_passthrough(dirfd: int = 3, name: bytes = b"newdir") -> bytes:
    """Create a directory (host-only call); exit status is the call's errno."""
    b = ModuleBuilder()
    b.put(STR, name)
    b.emit(i32_const(dirfd), i32_const(STR), i32_const(len(name)),
           call(b.wasi("path_create_directory")), call(b.wasi("proc_exit")))
    return b.build()


def trusted_only() -> bytes:
    """Clock, random bytes and a stdout line: no passthrough needed."""
    b = ModuleBuilder()
    text = b"trusted\n"
    b.put(IOV, iovec(STR, len(text)))
    b.put(STR, text)
    b.call("clock_time_get", 1, 0, NOUT)
    b.call("random_get", 256, 32)
    b.call("fd_write", 1, IOV, 1, NOUT)
    return b.build()


def write_file(path: bytes, content: bytes, dirfd: int = 3, seek_to: int | None = None) -> bytes:
    """Open/create ``path`` under ``dirfd``, optionally seek, write ``content``, close.

    Exits with the errno of path_open if it fails.
    """
    b = ModuleBuilder()
    path_at = STR
    data_at = STR + 256
    b.put(path_at, path)
    b.put(data_at, content)
    b.put(IOV, iovec(data_at, len(content)))
    rights = (1 << 1) | (1 << 2) | (1 << 5) | (1 << 6) | (1 << 10)
    # path_open's errno is stored at NOUT and becomes the exit status
    b.emit(i32_const(NOUT))
    b.call("path_open", dirfd, 0, path_at, len(path), 1, rights, rights, 0, FDSLOT, drop=False)
    b.emit(i32_store())
    fd_load = i32_const(FDSLOT) + i32_load()
    if seek_to is not None:
        b.emit(fd_load)
        b.emit(i64_const(seek_to), i32_const(0), i32_const(NOUT + 4),
               call(b.wasi("fd_seek")), DROP)
    b.emit(fd_load, i32_const(IOV), i32_const(1), i32_const(NOUT + 4), call(b.wasi("fd_write")), DROP)
    b.emit(fd_load, call(b.wasi("fd_close")), DROP)
    b.emit(i32_const(NOUT), i32_load(), call(b.wasi("proc_exit")))
    return b.build()


ALL = {
    "hello": hello,
    "exit7": lambda: exit_with(7),
    "trap": trap,
    "needs_passthrough": needs_passthrough,
    "trusted_only": trusted_only,
}
