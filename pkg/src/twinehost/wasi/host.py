"""The untrusted side: plain POSIX calls made outside the trusted tier.

Nothing returned from here is believed without checking; see
``WasiContext._passthrough``.  Every host path handed to this layer is
recorded in ``touched`` so tests can audit sandbox containment.
"""
from __future__ import annotations

import os
import stat
import time

from ..store.pfs import HostFile
from .errno import Errno, from_os_error


class HostError(Exception):
    def __init__(self, errno: int):
        super().__init__(f"host errno {errno}")
        self.errno = errno


def _oserr(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except OSError as e:
            raise HostError(from_os_error(e)) from e
    wrapper.__name__ = fn.__name__
    return wrapper


class UntrustedHost:
    def __init__(self):
        self.touched: list[str] = []

    def _touch(self, path) -> str:
        path = os.fspath(path)
        self.touched.append(path)
        return path

    # -- metadata ----------------------------------------------------------

    def lstat(self, path):
        try:
            return os.lstat(self._touch(path))
        except FileNotFoundError:
            return None
        except OSError as e:
            raise HostError(from_os_error(e)) from e

    def is_symlink(self, path) -> bool:
        st = self.lstat(path)
        return st is not None and stat.S_ISLNK(st.st_mode)

    def is_dir(self, path) -> bool:
        st = self.lstat(path)
        return st is not None and stat.S_ISDIR(st.st_mode)

    def exists(self, path) -> bool:
        return self.lstat(path) is not None

    @_oserr
    def stat(self, path):
        st = os.lstat(self._touch(path))
        return st.st_size, st.st_mode

    # -- protected file storage (used by the trusted tier) ------------------

    def protected_opener(self, path, create=False, force=False):
        return HostFile.open(self._touch(path), create=create, force=force)

    # -- plain file passthrough ---------------------------------------------

    @_oserr
    def open(self, path, create=False, excl=False, trunc=False, write=True) -> int:
        flags = os.O_RDWR if write else os.O_RDONLY
        if create:
            flags |= os.O_CREAT
        if excl:
            flags |= os.O_EXCL
        if trunc:
            flags |= os.O_TRUNC
        return os.open(self._touch(path), flags | getattr(os, "O_NOFOLLOW", 0), 0o600)

    @_oserr
    def read(self, hfd: int, n: int) -> bytes:
        return os.read(hfd, n)

    @_oserr
    def write(self, hfd: int, data) -> int:
        return os.write(hfd, data)

    @_oserr
    def seek(self, hfd: int, offset: int, whence: int) -> int:
        return os.lseek(hfd, offset, whence)

    @_oserr
    def fstat_size(self, hfd: int) -> int:
        return os.fstat(hfd).st_size

    @_oserr
    def close(self, hfd: int) -> None:
        os.close(hfd)

    @_oserr
    def mkdir(self, path) -> None:
        os.mkdir(self._touch(path), 0o700)

    @_oserr
    def unlink(self, path) -> None:
        p = self._touch(path)
        if os.path.isdir(p) and not os.path.islink(p):
            raise HostError(Errno.ISDIR)
        os.unlink(p)

    @_oserr
    def rename(self, old, new) -> None:
        os.rename(self._touch(old), self._touch(new))

    # -- clocks -------------------------------------------------------------

    def clock_monotonic(self) -> int:
        return time.monotonic_ns()

    def clock_realtime(self) -> int:
        return time.time_ns()
