"""WASI snapshot-preview1 errno values (subset used by the host)."""
import enum
import errno as _os_errno


class Errno(enum.IntEnum):
    SUCCESS = 0
    TOOBIG = 1
    ACCES = 2
    AGAIN = 6
    BADF = 8
    BUSY = 10
    EXIST = 20
    FAULT = 21
    FBIG = 22
    INVAL = 28
    IO = 29
    ISDIR = 31
    LOOP = 32
    NAMETOOLONG = 37
    NOENT = 44
    NOSPC = 51
    NOSYS = 52
    NOTDIR = 54
    NOTEMPTY = 55
    NOTSUP = 58
    OVERFLOW = 61
    PERM = 63
    RANGE = 68
    ROFS = 69
    SPIPE = 70
    XDEV = 75
    NOTCAPABLE = 76


class WasiError(Exception):
    def __init__(self, errno: Errno, message: str = ""):
        self.errno = Errno(errno)
        super().__init__(f"{self.errno.name.lower()}: {message}" if message else self.errno.name.lower())


_FROM_OS = {
    _os_errno.EACCES: Errno.ACCES, _os_errno.EBADF: Errno.BADF, _os_errno.EEXIST: Errno.EXIST,
    _os_errno.EINVAL: Errno.INVAL, _os_errno.EIO: Errno.IO, _os_errno.EISDIR: Errno.ISDIR,
    _os_errno.ELOOP: Errno.LOOP, _os_errno.ENAMETOOLONG: Errno.NAMETOOLONG,
    _os_errno.ENOENT: Errno.NOENT, _os_errno.ENOSPC: Errno.NOSPC, _os_errno.ENOTDIR: Errno.NOTDIR,
    _os_errno.ENOTEMPTY: Errno.NOTEMPTY, _os_errno.EPERM: Errno.PERM, _os_errno.EROFS: Errno.ROFS,
    _os_errno.ESPIPE: Errno.SPIPE, _os_errno.EXDEV: Errno.XDEV, _os_errno.EBUSY: Errno.BUSY,
    _os_errno.EFBIG: Errno.FBIG,
}


def from_os_error(exc: OSError) -> Errno:
    return _FROM_OS.get(exc.errno, Errno.IO)
