"""snapshot-preview1 ABI glue: guest pointers in, errno out.

``WasiAbi`` turns raw import arguments into calls on a :class:`WasiContext`
and writes results back into linear memory (little-endian).  The engine only
needs ``IMPORTS`` (name -> wasm signature) and ``WasiAbi.call``.
"""
from __future__ import annotations

import logging
import struct

from .context import Fdstat, Filestat, ProcExit, WasiContext, rights_from_wasi
from .errno import Errno, WasiError

log = logging.getLogger(__name__)

I32, I64 = "i32", "i64"

IMPORTS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "args_get": ((I32, I32), (I32,)),
    "args_sizes_get": ((I32, I32), (I32,)),
    "environ_get": ((I32, I32), (I32,)),
    "environ_sizes_get": ((I32, I32), (I32,)),
    "clock_time_get": ((I32, I64, I32), (I32,)),
    "random_get": ((I32, I32), (I32,)),
    "proc_exit": ((I32,), ()),
    "fd_read": ((I32, I32, I32, I32), (I32,)),
    "fd_write": ((I32, I32, I32, I32), (I32,)),
    "fd_seek": ((I32, I64, I32, I32), (I32,)),
    "fd_tell": ((I32, I32), (I32,)),
    "fd_close": ((I32,), (I32,)),
    "fd_fdstat_get": ((I32, I32), (I32,)),
    "fd_filestat_get": ((I32, I32), (I32,)),
    "fd_prestat_get": ((I32, I32), (I32,)),
    "fd_prestat_dir_name": ((I32, I32, I32), (I32,)),
    "path_open": ((I32, I32, I32, I32, I32, I64, I64, I32, I32), (I32,)),
    "path_filestat_get": ((I32, I32, I32, I32, I32), (I32,)),
    "path_create_directory": ((I32, I32, I32), (I32,)),
    "path_unlink_file": ((I32, I32, I32), (I32,)),
    "path_rename": ((I32, I32, I32, I32, I32, I32), (I32,)),
}


class MemoryFault(Exception):
    pass


class GuestMemory:
    """Bounds-checked view over a bytearray-like linear memory."""

    def __init__(self, buffer):
        self._buffer = buffer

    @property
    def buf(self):
        return self._buffer() if callable(self._buffer) else self._buffer

    def _check(self, addr, n):
        if addr < 0 or n < 0 or addr + n > len(self.buf):
            raise MemoryFault(f"access [{addr}, {addr + n}) out of bounds")

    def read(self, addr: int, n: int) -> bytes:
        self._check(addr, n)
        return bytes(self.buf[addr:addr + n])

    def view(self, addr: int, n: int) -> memoryview:
        self._check(addr, n)
        return memoryview(self.buf)[addr:addr + n]

    def write(self, addr: int, data) -> None:
        self._check(addr, len(data))
        self.buf[addr:addr + len(data)] = data

    def u32(self, addr: int) -> int:
        return struct.unpack("<I", self.read(addr, 4))[0]

    def put_u32(self, addr: int, v: int) -> None:
        self.write(addr, struct.pack("<I", v & 0xFFFFFFFF))

    def put_u64(self, addr: int, v: int) -> None:
        self.write(addr, struct.pack("<Q", v & 0xFFFFFFFFFFFFFFFF))


def _u32(v):
    return v & 0xFFFFFFFF


class WasiAbi:
    def __init__(self, ctx: WasiContext, memory: GuestMemory):
        self.ctx = ctx
        self.mem = memory

    def call(self, name: str, *args) -> int | None:
        """Run one import; returns the errno (``None`` never returns for proc_exit)."""
        try:
            getattr(self, name)(*args)
            return Errno.SUCCESS
        except ProcExit:
            raise
        except WasiError as e:
            log.debug("%s -> %s", name, e)
            return int(e.errno)
        except MemoryFault as e:
            log.debug("%s -> fault: %s", name, e)
            return int(Errno.FAULT)

    def _iovecs(self, ptr: int, count: int):
        out = []
        for i in range(_u32(count)):
            base = _u32(ptr) + 8 * i
            out.append((self.mem.u32(base), self.mem.u32(base + 4)))
        return out

    def _path(self, ptr, n) -> bytes:
        return self.mem.read(_u32(ptr), _u32(n))

    def _put_strings(self, items, ptrs_ptr, buf_ptr):
        ptrs_ptr, cur = _u32(ptrs_ptr), _u32(buf_ptr)
        for i, s in enumerate(items):
            self.mem.put_u32(ptrs_ptr + 4 * i, cur)
            self.mem.write(cur, s + b"\x00")
            cur += len(s) + 1

    def args_sizes_get(self, argc_ptr, size_ptr):
        n, size = self.ctx.dispatch("args_sizes_get")
        self.mem.put_u32(_u32(argc_ptr), n)
        self.mem.put_u32(_u32(size_ptr), size)

    def args_get(self, argv_ptr, buf_ptr):
        self._put_strings(self.ctx.dispatch("args_get"), argv_ptr, buf_ptr)

    def environ_sizes_get(self, count_ptr, size_ptr):
        n, size = self.ctx.dispatch("environ_sizes_get")
        self.mem.put_u32(_u32(count_ptr), n)
        self.mem.put_u32(_u32(size_ptr), size)

    def environ_get(self, env_ptr, buf_ptr):
        self._put_strings(self.ctx.dispatch("environ_get"), env_ptr, buf_ptr)

    def clock_time_get(self, clock_id, precision, out_ptr):
        self.mem.put_u64(_u32(out_ptr), self.ctx.dispatch("clock_time_get", _u32(clock_id), precision))

    def random_get(self, buf, n):
        self.mem.write(_u32(buf), self.ctx.dispatch("random_get", _u32(n)))

    def proc_exit(self, code):
        self.ctx.dispatch("proc_exit", _u32(code))

    def fd_read(self, fd, iovs, count, nread_ptr):
        views = [self.mem.view(p, n) for p, n in self._iovecs(iovs, count)]
        self.mem.put_u32(_u32(nread_ptr), self.ctx.dispatch("fd_read", _u32(fd), views))

    def fd_write(self, fd, iovs, count, nwritten_ptr):
        bufs = [self.mem.read(p, n) for p, n in self._iovecs(iovs, count)]
        self.mem.put_u32(_u32(nwritten_ptr), self.ctx.dispatch("fd_write", _u32(fd), bufs))

    def fd_seek(self, fd, offset, whence, out_ptr):
        if offset >= 1 << 63:
            offset -= 1 << 64
        self.mem.put_u64(_u32(out_ptr), self.ctx.dispatch("fd_seek", _u32(fd), offset, whence & 0xFF))

    def fd_tell(self, fd, out_ptr):
        self.mem.put_u64(_u32(out_ptr), self.ctx.dispatch("fd_tell", _u32(fd)))

    def fd_close(self, fd):
        self.ctx.dispatch("fd_close", _u32(fd))

    def fd_fdstat_get(self, fd, out_ptr):
        st: Fdstat = self.ctx.dispatch("fd_fdstat_get", _u32(fd))
        self.mem.write(_u32(out_ptr), struct.pack("<BxHxxxxQQ", st.filetype, st.flags,
                                                  st.rights_base, st.rights_inheriting))

    def _put_filestat(self, ptr, st: Filestat):
        self.mem.write(_u32(ptr), struct.pack("<QQBxxxxxxxQQQQQ", 0, 0, st.filetype, 1, st.size, 0, 0, 0))

    def fd_filestat_get(self, fd, out_ptr):
        self._put_filestat(out_ptr, self.ctx.dispatch("fd_filestat_get", _u32(fd)))

    def fd_prestat_get(self, fd, out_ptr):
        n = self.ctx.dispatch("fd_prestat_get", _u32(fd))
        self.mem.write(_u32(out_ptr), struct.pack("<BxxxI", 0, n))

    def fd_prestat_dir_name(self, fd, path_ptr, path_len):
        name = self.ctx.dispatch("fd_prestat_dir_name", _u32(fd))
        if _u32(path_len) < len(name):
            raise WasiError(Errno.NAMETOOLONG)
        self.mem.write(_u32(path_ptr), name)

    def path_open(self, dirfd, dirflags, path_ptr, path_len, oflags, rights_base,
                  rights_inheriting, fdflags, fd_ptr):
        fd = self.ctx.dispatch("path_open", _u32(dirfd), self._path(path_ptr, path_len),
                               oflags & 0xFFFF, rights_from_wasi(rights_base & (2**64 - 1)),
                               fdflags & 0xFFFF)
        self.mem.put_u32(_u32(fd_ptr), fd)

    def path_filestat_get(self, dirfd, flags, path_ptr, path_len, out_ptr):
        st = self.ctx.dispatch("path_filestat_get", _u32(dirfd), self._path(path_ptr, path_len))
        self._put_filestat(out_ptr, st)

    def path_create_directory(self, dirfd, path_ptr, path_len):
        self.ctx.dispatch("path_create_directory", _u32(dirfd), self._path(path_ptr, path_len))

    def path_unlink_file(self, dirfd, path_ptr, path_len):
        self.ctx.dispatch("path_unlink_file", _u32(dirfd), self._path(path_ptr, path_len))

    def path_rename(self, old_fd, old_ptr, old_len, new_fd, new_ptr, new_len):
        self.ctx.dispatch("path_rename", _u32(old_fd), self._path(old_ptr, old_len),
                          _u32(new_fd), self._path(new_ptr, new_len))
