"""WASI call implementations with two-tier dispatch.

Each supported call has a fixed routing: a trusted implementation when one
exists, otherwise a passthrough to the untrusted host that is only reachable
while ``passthrough_enabled`` is set.  Passthrough results are checked for
range, length and errno before use; anything out of contract becomes EIO.
File data under a protected preopen is always served by the protected store.
"""
from __future__ import annotations

import enum
import io
import logging
import os
import secrets
import stat
from dataclasses import dataclass

from ..store import (DEFAULT_CACHE_CAPACITY, BeyondEOFError, FormatError, IntegrityError,
                     KeyPolicy, PfsError, ProtectedFile, Variant, inspect_superblock)
from .errno import Errno, WasiError
from .host import HostError, UntrustedHost

log = logging.getLogger(__name__)

CLOCK_REALTIME = 0
CLOCK_MONOTONIC = 1

OFLAG_CREAT = 1
OFLAG_DIRECTORY = 2
OFLAG_EXCL = 4
OFLAG_TRUNC = 8

FDFLAG_APPEND = 1

WHENCE_SET, WHENCE_CUR, WHENCE_END = 0, 1, 2

ZERO_FILL_CHUNK = 64 * 1024
U64_MAX = (1 << 64) - 1


class FileType(enum.IntEnum):
    UNKNOWN = 0
    CHARACTER_DEVICE = 2
    DIRECTORY = 3
    REGULAR_FILE = 4


class Rights(enum.Flag):
    NONE = 0
    READ = enum.auto()
    WRITE = enum.auto()
    SEEK = enum.auto()
    CREATE = enum.auto()


ALL_RIGHTS = Rights.READ | Rights.WRITE | Rights.SEEK | Rights.CREATE

# WASI rights bits <-> our coarse rights
_WASI_FD_READ = 1 << 1
_WASI_FD_SEEK = 1 << 2
_WASI_FD_TELL = 1 << 5
_WASI_FD_WRITE = 1 << 6
_WASI_PATH_CREATE_FILE = 1 << 10


def rights_from_wasi(bits: int) -> Rights:
    r = Rights.NONE
    if bits & _WASI_FD_READ:
        r |= Rights.READ
    if bits & _WASI_FD_WRITE:
        r |= Rights.WRITE
    if bits & (_WASI_FD_SEEK | _WASI_FD_TELL):
        r |= Rights.SEEK
    if bits & _WASI_PATH_CREATE_FILE:
        r |= Rights.CREATE
    return r


def rights_to_wasi(r: Rights) -> int:
    bits = 0
    if Rights.READ in r:
        bits |= _WASI_FD_READ
    if Rights.WRITE in r:
        bits |= _WASI_FD_WRITE
    if Rights.SEEK in r:
        bits |= _WASI_FD_SEEK | _WASI_FD_TELL
    if Rights.CREATE in r:
        bits |= _WASI_PATH_CREATE_FILE
    return bits


class DescKind(enum.Enum):
    STDIO = "stdio"
    DIRECTORY = "directory"
    PROTECTED_FILE = "protected_file"
    HOST_FILE = "host_file"


@dataclass
class Preopen:
    guest_path: str
    host_root: str
    protected: bool = True

    def __post_init__(self):
        self.host_root = os.path.realpath(self.host_root)


@dataclass
class Descriptor:
    kind: DescKind
    rights: Rights
    preopen: Preopen | None = None
    rel: tuple[str, ...] = ()  # path below the preopen root
    store: ProtectedFile | None = None
    host_fd: int | None = None
    cursor: int = 0
    append: bool = False
    is_preopen: bool = False

    @property
    def host_path(self) -> str | None:
        if self.preopen is None:
            return None
        return os.path.join(self.preopen.host_root, *self.rel)


@dataclass(frozen=True)
class Filestat:
    filetype: FileType
    size: int


@dataclass(frozen=True)
class Fdstat:
    filetype: FileType
    flags: int
    rights_base: int
    rights_inheriting: int


@dataclass(frozen=True)
class CallSpec:
    trusted: bool
    passthrough: bool


# Supported subset and its tiers.  fd_* calls are trusted; on a plain
# host_file descriptor they forward to the passthrough tier internally.
CALLS: dict[str, CallSpec] = {
    "args_get": CallSpec(True, False),
    "args_sizes_get": CallSpec(True, False),
    "environ_get": CallSpec(True, False),
    "environ_sizes_get": CallSpec(True, False),
    "clock_time_get": CallSpec(True, False),
    "random_get": CallSpec(True, False),
    "proc_exit": CallSpec(True, False),
    "fd_read": CallSpec(True, True),
    "fd_write": CallSpec(True, True),
    "fd_seek": CallSpec(True, True),
    "fd_tell": CallSpec(True, False),
    "fd_close": CallSpec(True, False),
    "fd_fdstat_get": CallSpec(True, False),
    "fd_filestat_get": CallSpec(True, True),
    "fd_prestat_get": CallSpec(True, False),
    "fd_prestat_dir_name": CallSpec(True, False),
    "path_open": CallSpec(True, True),
    "path_filestat_get": CallSpec(True, False),
    "path_create_directory": CallSpec(False, True),
    "path_unlink_file": CallSpec(False, True),
    "path_rename": CallSpec(False, True),
}

# host errnos we pass back to the guest verbatim; anything else becomes EIO
ERRNO_WHITELIST = frozenset({
    Errno.ACCES, Errno.BADF, Errno.EXIST, Errno.INVAL, Errno.ISDIR, Errno.NOENT, Errno.NOSPC,
    Errno.NOTDIR, Errno.NOTEMPTY, Errno.PERM, Errno.ROFS, Errno.SPIPE, Errno.FBIG,
})


class ProcExit(Exception):
    def __init__(self, code: int):
        super().__init__(f"proc_exit({code})")
        self.code = code


def _route(name):
    def call(self, *args, **kwargs):
        return self.dispatch(name, *args, **kwargs)
    call.__name__ = name
    call.__doc__ = f"Dispatch ``{name}`` through the tier table."
    return call


class WasiContext:
    def __init__(self, preopens=(), *, args=(), env=None, passthrough_enabled=True,
                 key_policy: KeyPolicy | None = None, variant=Variant.OPTIMIZED,
                 cache_capacity=DEFAULT_CACHE_CAPACITY, host: UntrustedHost | None = None,
                 sim=None, stdin=b"", stdout=None, stderr=None, rng=secrets.token_bytes):
        self.host = host or UntrustedHost()
        self.passthrough_enabled = passthrough_enabled
        self.key_policy = key_policy
        self.variant = Variant(variant)
        self.cache_capacity = cache_capacity
        self.sim = sim
        self.args = [a.encode() if isinstance(a, str) else a for a in args]
        env = env or {}
        self.env = [f"{k}={v}".encode() for k, v in env.items()]
        self.rng = rng
        self.clock_guard: dict[int, int] = {}
        self.stdin = io.BytesIO(stdin)
        self.stdout = stdout if stdout is not None else io.BytesIO()
        self.stderr = stderr if stderr is not None else io.BytesIO()
        self.denied: list[str] = []
        self.fd_table: dict[int, Descriptor] = {
            0: Descriptor(DescKind.STDIO, Rights.READ),
            1: Descriptor(DescKind.STDIO, Rights.WRITE),
            2: Descriptor(DescKind.STDIO, Rights.WRITE),
        }
        self.preopens: list[tuple[int, Preopen]] = []
        for p in preopens:
            self.add_preopen(p)

    def add_preopen(self, preopen: Preopen) -> int:
        fd = self._next_fd()
        self.fd_table[fd] = Descriptor(DescKind.DIRECTORY, ALL_RIGHTS, preopen, (), is_preopen=True)
        self.preopens.append((fd, preopen))
        return fd

    def _next_fd(self) -> int:
        fd = 3
        while fd in self.fd_table:
            fd += 1
        return fd

    # -- dispatch -----------------------------------------------------------

    def tier_of(self, name: str) -> str:
        spec = CALLS.get(name)
        if spec is None:
            return "not-implemented"
        if spec.trusted:
            return "trusted"
        if spec.passthrough and self.passthrough_enabled:
            return "passthrough"
        return "capability-error"

    def dispatch(self, name: str, *args, **kwargs):
        spec = CALLS.get(name)
        if spec is None:
            raise WasiError(Errno.NOSYS, f"{name} is not implemented")
        if spec.trusted:
            return getattr(self, f"_t_{name}")(*args, **kwargs)
        self._require_passthrough(name)
        return getattr(self, f"_p_{name}")(*args, **kwargs)

    def _require_passthrough(self, name: str) -> None:
        if not self.passthrough_enabled:
            self.denied.append(name)
            log.warning("capability error: %s needs the untrusted POSIX layer, which is disabled", name)
            raise WasiError(Errno.NOTCAPABLE, f"{name}: untrusted POSIX disabled")

    def _passthrough(self, name: str, fn, *args, check=None):
        """One sanity-checked call into the untrusted host."""
        self._require_passthrough(name)
        if self.sim is not None:
            self.sim.crossing("ocall", passthrough=True)
        try:
            result = fn(*args)
        except HostError as e:
            if e.errno in ERRNO_WHITELIST:
                raise WasiError(e.errno, f"{name} failed on host") from None
            log.warning("%s: host returned out-of-contract errno %r", name, e.errno)
            raise WasiError(Errno.IO, f"{name}: abnormal host error") from None
        if check is not None and not check(result):
            log.warning("%s: rejected abnormal host response %r", name, result)
            raise WasiError(Errno.IO, f"{name}: abnormal host response")
        return result

    def _ocall(self):
        # a trusted implementation that still has to step outside once
        if self.sim is not None:
            self.sim.crossing("ocall")

    # -- descriptors ----------------------------------------------------------

    def _desc(self, fd: int, kind: DescKind | None = None) -> Descriptor:
        d = self.fd_table.get(fd)
        if d is None:
            raise WasiError(Errno.BADF, f"fd {fd}")
        if kind is not None and d.kind is not kind:
            raise WasiError(Errno.NOTDIR if kind is DescKind.DIRECTORY else Errno.BADF, f"fd {fd}")
        return d

    def _need(self, d: Descriptor, right: Rights):
        if right not in d.rights:
            raise WasiError(Errno.NOTCAPABLE, f"descriptor lacks {right.name.lower()} right")

    # -- path resolution -----------------------------------------------------

    def resolve_path(self, base_fd: int, path: str) -> tuple[Preopen, tuple[str, ...], str]:
        """Map a guest path relative to ``base_fd`` onto the host.

        Returns ``(preopen, parts, host_path)``.  Normalization is purely
        lexical and happens before any host contact; the result must stay
        inside the preopen root and no existing component may be a symlink.
        """
        base = self._desc(base_fd)
        if base.kind is not DescKind.DIRECTORY:
            raise WasiError(Errno.NOTDIR, f"fd {base_fd} is not a directory")
        if isinstance(path, bytes):
            try:
                path = path.decode()
            except UnicodeDecodeError:
                raise WasiError(Errno.INVAL, "path is not utf-8") from None
        if not path or "\x00" in path:
            raise WasiError(Errno.INVAL if path else Errno.NOENT, "bad path")
        if path.startswith("/"):
            raise WasiError(Errno.NOTCAPABLE, f"absolute path {path!r}")
        parts = list(base.rel)
        # every prefix the guest names, including ones a later ".." drops:
        # under POSIX "link/.." would leave through the link
        prefixes = []
        for comp in path.split("/"):
            if comp in ("", "."):
                continue
            if comp == "..":
                if not parts:
                    raise WasiError(Errno.NOTCAPABLE, f"{path!r} escapes the preopen")
                parts.pop()
            else:
                parts.append(comp)
                prefixes.append(tuple(parts))
        root = base.preopen.host_root
        host_path = os.path.join(root, *parts)
        if os.path.commonpath([root, host_path]) != root:
            raise WasiError(Errno.NOTCAPABLE, f"{path!r} escapes the preopen")
        missing = set()
        for pre in [tuple(base.rel[:i + 1]) for i in range(len(base.rel))] + prefixes:
            if pre[:-1] in missing:
                missing.add(pre)
                continue
            self._ocall()
            st = self.host.lstat(os.path.join(root, *pre))
            if st is None:
                missing.add(pre)
            elif stat.S_ISLNK(st.st_mode):
                raise WasiError(Errno.NOTCAPABLE, f"{path!r} crosses a symlink")
        return base.preopen, tuple(parts), host_path

    # -- args / env / clocks / random ------------------------------------------

    def _t_args_sizes_get(self):
        return len(self.args), sum(len(a) + 1 for a in self.args)

    def _t_args_get(self):
        return list(self.args)

    def _t_environ_sizes_get(self):
        return len(self.env), sum(len(e) + 1 for e in self.env)

    def _t_environ_get(self):
        return list(self.env)

    def _t_clock_time_get(self, clock_id: int, precision: int = 0) -> int:
        if clock_id == CLOCK_MONOTONIC:
            self._ocall()
            host = self.host.clock_monotonic()
            if not isinstance(host, int) or not 0 <= host <= U64_MAX:
                host = 0
            guard = self.clock_guard.get(clock_id, 0)
            value = host if host > guard else guard + 1
            self.clock_guard[clock_id] = value
            return value
        if clock_id == CLOCK_REALTIME:
            self._ocall()
            host = self.host.clock_realtime()
            if not isinstance(host, int) or not 0 <= host <= U64_MAX:
                raise WasiError(Errno.IO, "abnormal realtime clock value")
            return host
        raise WasiError(Errno.INVAL, f"unsupported clock id {clock_id}")

    def _t_random_get(self, n: int) -> bytes:
        if n < 0:
            raise WasiError(Errno.INVAL, "negative length")
        return self.rng(n) if n else b""

    def _t_proc_exit(self, code: int):
        raise ProcExit(code)

    # -- fd calls --------------------------------------------------------------

    def _t_fd_read(self, fd: int, iovecs) -> int:
        d = self._desc(fd)
        self._need(d, Rights.READ)
        total = 0
        if d.kind is DescKind.STDIO:
            for buf in iovecs:
                chunk = self.stdin.read(len(buf))
                buf[:len(chunk)] = chunk
                total += len(chunk)
                if len(chunk) < len(buf):
                    break
            return total
        if d.kind is DescKind.HOST_FILE:
            for buf in iovecs:
                want = len(buf)
                chunk = self._passthrough("fd_read", self.host.read, d.host_fd, want,
                                          check=lambda r, w=want: isinstance(r, bytes) and len(r) <= w)
                buf[:len(chunk)] = chunk
                total += len(chunk)
                if len(chunk) < want:
                    break
            return total
        if d.kind is not DescKind.PROTECTED_FILE:
            raise WasiError(Errno.ISDIR, f"fd {fd}")
        store = d.store
        if d.cursor >= store.logical_size:
            return 0
        try:
            store.seek(d.cursor)
            for buf in iovecs:
                # the store has no vectored read: one call per buffer
                chunk = store.read(len(buf))
                buf[:len(chunk)] = chunk
                total += len(chunk)
                if len(chunk) < len(buf):
                    break
        except IntegrityError as e:
            log.error("fd %d: %s", fd, e)
            raise WasiError(Errno.IO, str(e)) from None
        d.cursor += total
        return total

    def _t_fd_write(self, fd: int, iovecs) -> int:
        d = self._desc(fd)
        self._need(d, Rights.WRITE)
        if d.kind is DescKind.STDIO:
            self._ocall()
            out = self.stdout if fd == 1 else self.stderr
            total = 0
            for buf in iovecs:
                out.write(bytes(buf))
                total += len(buf)
            return total
        if d.kind is DescKind.HOST_FILE:
            total = 0
            for buf in iovecs:
                data = bytes(buf)
                n = self._passthrough("fd_write", self.host.write, d.host_fd, data,
                                      check=lambda r, w=len(data): isinstance(r, int) and 0 <= r <= w)
                total += n
                if n < len(data):
                    break
            return total
        if d.kind is not DescKind.PROTECTED_FILE:
            raise WasiError(Errno.ISDIR, f"fd {fd}")
        store = d.store
        try:
            if d.append:
                d.cursor = store.logical_size
            if d.cursor > store.logical_size:
                self._zero_extend(store, d.cursor)
            store.seek(d.cursor)
            total = 0
            for buf in iovecs:
                total += store.write(buf)
        except IntegrityError as e:
            log.error("fd %d: %s", fd, e)
            raise WasiError(Errno.IO, str(e)) from None
        d.cursor += total
        return total

    @staticmethod
    def _zero_extend(store: ProtectedFile, target: int) -> None:
        # the store will not seek past EOF, so materialize the gap with zeros
        store.seek(0, 2)
        zeros = bytes(ZERO_FILL_CHUNK)
        while store.logical_size < target:
            n = min(ZERO_FILL_CHUNK, target - store.logical_size)
            store.write(zeros[:n])

    def _t_fd_seek(self, fd: int, delta: int, whence: int) -> int:
        d = self._desc(fd)
        if d.kind in (DescKind.STDIO, DescKind.DIRECTORY):
            raise WasiError(Errno.SPIPE, f"fd {fd} is not seekable")
        self._need(d, Rights.SEEK)
        if whence not in (WHENCE_SET, WHENCE_CUR, WHENCE_END):
            raise WasiError(Errno.INVAL, f"bad whence {whence}")
        if d.kind is DescKind.HOST_FILE:
            pos = self._passthrough("fd_seek", self.host.seek, d.host_fd, delta, whence,
                                    check=lambda r: isinstance(r, int) and 0 <= r <= U64_MAX)
            d.cursor = pos
            return pos
        if whence == WHENCE_SET:
            base = 0
        elif whence == WHENCE_CUR:
            base = d.cursor
        else:
            base = d.store.logical_size
        pos = base + delta
        if pos < 0:
            raise WasiError(Errno.INVAL, "negative file position")
        d.cursor = pos  # may lie beyond EOF; the next write fills the gap
        return pos

    def _t_fd_tell(self, fd: int) -> int:
        d = self._desc(fd)
        if d.kind in (DescKind.STDIO, DescKind.DIRECTORY):
            raise WasiError(Errno.SPIPE, f"fd {fd} is not seekable")
        self._need(d, Rights.SEEK)
        return d.cursor

    def _t_fd_close(self, fd: int) -> None:
        d = self._desc(fd)
        del self.fd_table[fd]
        if d.is_preopen:
            self.preopens = [(f, p) for f, p in self.preopens if f != fd]
        if d.kind is DescKind.PROTECTED_FILE:
            try:
                d.store.close()
            except (PfsError, OSError) as e:
                raise WasiError(Errno.IO, str(e)) from None
        elif d.kind is DescKind.HOST_FILE:
            self._ocall()
            try:
                self.host.close(d.host_fd)
            except HostError:
                raise WasiError(Errno.IO, "close failed") from None

    def _t_fd_fdstat_get(self, fd: int) -> Fdstat:
        d = self._desc(fd)
        ftype = {DescKind.STDIO: FileType.CHARACTER_DEVICE, DescKind.DIRECTORY: FileType.DIRECTORY}.get(
            d.kind, FileType.REGULAR_FILE)
        flags = FDFLAG_APPEND if d.append else 0
        inheriting = rights_to_wasi(ALL_RIGHTS) if d.kind is DescKind.DIRECTORY else 0
        return Fdstat(ftype, flags, rights_to_wasi(d.rights), inheriting)

    def _t_fd_filestat_get(self, fd: int) -> Filestat:
        d = self._desc(fd)
        if d.kind is DescKind.STDIO:
            return Filestat(FileType.CHARACTER_DEVICE, 0)
        if d.kind is DescKind.DIRECTORY:
            return Filestat(FileType.DIRECTORY, 0)
        if d.kind is DescKind.PROTECTED_FILE:
            return Filestat(FileType.REGULAR_FILE, d.store.logical_size)
        size = self._passthrough("fd_filestat_get", self.host.fstat_size, d.host_fd,
                                 check=lambda r: isinstance(r, int) and 0 <= r <= U64_MAX)
        return Filestat(FileType.REGULAR_FILE, size)

    def _t_fd_prestat_get(self, fd: int) -> int:
        d = self._desc(fd)
        if not d.is_preopen:
            raise WasiError(Errno.BADF, f"fd {fd} is not a preopen")
        return len(d.preopen.guest_path.encode())

    def _t_fd_prestat_dir_name(self, fd: int) -> bytes:
        d = self._desc(fd)
        if not d.is_preopen:
            raise WasiError(Errno.BADF, f"fd {fd} is not a preopen")
        return d.preopen.guest_path.encode()

    # -- path calls ------------------------------------------------------------

    def _t_path_open(self, dirfd: int, path, oflags: int = 0, rights: Rights = ALL_RIGHTS,
                     fdflags: int = 0) -> int:
        base = self._desc(dirfd, DescKind.DIRECTORY)
        preopen, parts, host_path = self.resolve_path(dirfd, path)
        self._ocall()
        is_dir = self.host.is_dir(host_path)
        if oflags & OFLAG_DIRECTORY or is_dir:
            if not is_dir:
                raise WasiError(Errno.NOENT if not self.host.exists(host_path) else Errno.NOTDIR, str(path))
            if oflags & (OFLAG_CREAT | OFLAG_TRUNC):
                raise WasiError(Errno.ISDIR, str(path))
            fd = self._next_fd()
            self.fd_table[fd] = Descriptor(DescKind.DIRECTORY, rights & base.rights, preopen, parts)
            return fd
        rights = rights & base.rights
        if not preopen.protected:
            return self._p_path_open(preopen, parts, host_path, oflags, rights, fdflags)
        if self.key_policy is None:
            raise WasiError(Errno.NOTCAPABLE, "no key configured for protected files")
        exists = self.host.exists(host_path)
        if exists and oflags & OFLAG_CREAT and oflags & OFLAG_EXCL:
            raise WasiError(Errno.EXIST, str(path))
        if not exists and not oflags & OFLAG_CREAT:
            raise WasiError(Errno.NOENT, str(path))
        try:
            if not exists or oflags & OFLAG_TRUNC:
                store = ProtectedFile.create(host_path, self.key_policy, self.variant,
                                             self.cache_capacity, force=exists, sim=self.sim,
                                             opener=self.host.protected_opener)
            else:
                store = ProtectedFile.open(host_path, self.key_policy, self.variant,
                                           self.cache_capacity, sim=self.sim,
                                           opener=self.host.protected_opener)
        except (IntegrityError, FormatError) as e:
            log.error("path_open %s: %s", path, e)
            raise WasiError(Errno.IO, str(e)) from None
        except HostError as e:
            raise WasiError(e.errno if e.errno in ERRNO_WHITELIST else Errno.IO, str(path)) from None
        except OSError as e:
            raise WasiError(Errno.IO, str(e)) from None
        fd = self._next_fd()
        self.fd_table[fd] = Descriptor(DescKind.PROTECTED_FILE, rights, preopen, parts, store=store,
                                       append=bool(fdflags & FDFLAG_APPEND))
        return fd

    def _p_path_open(self, preopen, parts, host_path, oflags, rights, fdflags) -> int:
        hfd = self._passthrough(
            "path_open", self.host.open, host_path, bool(oflags & OFLAG_CREAT),
            bool(oflags & OFLAG_EXCL), bool(oflags & OFLAG_TRUNC), True,
            check=lambda r: isinstance(r, int) and r >= 0)
        fd = self._next_fd()
        self.fd_table[fd] = Descriptor(DescKind.HOST_FILE, rights, preopen, parts, host_fd=hfd,
                                       append=bool(fdflags & FDFLAG_APPEND))
        return fd

    def _t_path_filestat_get(self, dirfd: int, path) -> Filestat:
        preopen, _, host_path = self.resolve_path(dirfd, path)
        self._ocall()
        st = self.host.lstat(host_path)
        if st is None:
            raise WasiError(Errno.NOENT, str(path))
        if stat.S_ISDIR(st.st_mode):
            return Filestat(FileType.DIRECTORY, 0)
        if preopen.protected:
            try:
                return Filestat(FileType.REGULAR_FILE, inspect_superblock(host_path).logical_size)
            except FormatError:
                raise WasiError(Errno.IO, f"{path} is not a protected file") from None
        return Filestat(FileType.REGULAR_FILE, st.st_size)

    def _p_path_create_directory(self, dirfd: int, path) -> None:
        _, _, host_path = self.resolve_path(dirfd, path)
        self._passthrough("path_create_directory", self.host.mkdir, host_path)

    def _p_path_unlink_file(self, dirfd: int, path) -> None:
        _, _, host_path = self.resolve_path(dirfd, path)
        self._passthrough("path_unlink_file", self.host.unlink, host_path)

    def _p_path_rename(self, old_fd: int, old_path, new_fd: int, new_path) -> None:
        _, _, old_host = self.resolve_path(old_fd, old_path)
        _, _, new_host = self.resolve_path(new_fd, new_path)
        self._passthrough("path_rename", self.host.rename, old_host, new_host)

    # -- routed entry points -----------------------------------------------------

    for _name in CALLS:
        locals()[_name] = _route(_name)
    del _name

    def close_all(self) -> None:
        for fd in sorted(self.fd_table):
            d = self.fd_table[fd]
            if d.kind in (DescKind.PROTECTED_FILE, DescKind.HOST_FILE):
                try:
                    self._t_fd_close(fd)
                except WasiError as e:
                    log.error("closing fd %d: %s", fd, e)
