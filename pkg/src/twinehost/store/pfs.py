"""Protected files: AEAD-encrypted 4 KiB nodes arranged as a Merkle tree.

Every node is sealed under its own random key; the parent keeps the child's
key and tag, and the root is sealed under a key derived from the caller's key
policy with the cleartext superblock as associated data.  Two read paths are
available.  The baseline path clears the whole node structure when a node
enters the cache, copies the ciphertext record into secure memory before
decrypting it, and zeroizes plaintext when a node leaves.  The optimized path
skips the clearing, decrypts straight from the untrusted read buffer and uses
AES-CCM, whose tag is computed over the plaintext.

A flush writes dirty nodes bottom-up, then the root, then the superblock.
There is no journal: if the process dies part way, reopening either succeeds
with the previous size or fails authentication.  Only one handle per file is
supported.
"""
from __future__ import annotations

import enum
import hmac
import logging
import os
import struct
from dataclasses import dataclass, fields

from .cache import LruCache
from .crypto import (IV_SIZE, KEY_SIZE, TAG_SIZE, CipherVariant, KeyPolicy,
                     open_sealed, seal)
from .layout import (ENTRY_SIZE, FANOUT, NODE_SIZE, data_node_count,
                     layout_nodes, level_counts, node_count_for_data, node_id,
                     parent_of, root_level)

log = logging.getLogger(__name__)

MAGIC = b"TWINEPFS"
VERSION = 1
SUPERBLOCK_SIZE = 64
RECORD_SIZE = IV_SIZE + NODE_SIZE + TAG_SIZE  # 4124
NODE_META = 64  # ids, flags and cache linkage kept next to the two buffers
NODE_STRUCT = 2 * NODE_SIZE + NODE_META
DEFAULT_CACHE_CAPACITY = 48

_SB = struct.Struct("<8sIIQQ16s16s")
_ZERO_PAGE = bytes(NODE_SIZE)
_ZERO_TAG = bytes(TAG_SIZE)


class PfsError(Exception):
    pass


class FormatError(PfsError):
    """Bad magic, version or inconsistent superblock."""


class VariantMismatchError(PfsError):
    pass


class IntegrityError(PfsError):
    """A node failed authentication (tamper or wrong key; indistinguishable)."""

    def __init__(self, node_id: int, reason: str = "integrity-or-key error"):
        super().__init__(f"node {node_id}: {reason}")
        self.node_id = node_id
        self.reason = reason


class StructuralError(IntegrityError):
    """A node record is missing from the file."""

    def __init__(self, node_id: int):
        super().__init__(node_id, "missing node record")


class BeyondEOFError(PfsError):
    pass


class SeekRangeError(PfsError, ValueError):
    pass


class Variant(enum.Enum):
    BASELINE = "baseline"
    OPTIMIZED = "optimized"

    @property
    def cipher(self) -> CipherVariant:
        return CipherVariant.GCM if self is Variant.BASELINE else CipherVariant.CCM


class Whence(enum.IntEnum):
    SET = 0
    CUR = 1
    END = 2


@dataclass(frozen=True)
class Superblock:
    magic: bytes
    version: int
    cipher_variant: CipherVariant
    logical_size: int
    node_count: int
    file_nonce: bytes
    kdf_salt: bytes

    def pack(self) -> bytes:
        return _SB.pack(self.magic, self.version, int(self.cipher_variant), self.logical_size,
                        self.node_count, self.file_nonce, self.kdf_salt)

    @classmethod
    def unpack(cls, raw: bytes) -> "Superblock":
        if len(raw) < SUPERBLOCK_SIZE:
            raise FormatError("file too short for a superblock")
        magic, version, variant, size, count, nonce, salt = _SB.unpack(raw[:SUPERBLOCK_SIZE])
        if magic != MAGIC:
            raise FormatError("bad magic")
        if version != VERSION:
            raise FormatError(f"unsupported version {version}")
        try:
            variant = CipherVariant(variant)
        except ValueError:
            raise FormatError(f"unknown cipher variant {variant}") from None
        if count != layout_nodes(size).total_nodes:
            raise FormatError("node_count does not match logical_size")
        return cls(magic, version, variant, size, count, nonce, salt)


@dataclass
class StoreCounters:
    bytes_cleared: int = 0
    ciphertext_bytes_copied_in: int = 0
    nodes_decrypted: int = 0
    nodes_encrypted: int = 0
    boundary_reads: int = 0
    boundary_writes: int = 0

    def snapshot(self) -> "StoreCounters":
        return StoreCounters(**{f.name: getattr(self, f.name) for f in fields(self)})

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class NodeRecord:
    __slots__ = ("level", "index", "node_id", "key", "iv", "plain", "cipher", "tag", "dirty")

    def __init__(self, level, index, nid, key):
        self.level = level
        self.index = index
        self.node_id = nid
        self.key = key
        self.iv = None
        self.plain = None
        self.cipher = None
        self.tag = _ZERO_TAG
        self.dirty = False

    def entry(self, slot: int) -> tuple[bytes, bytes]:
        off = slot * ENTRY_SIZE
        e = self.plain[off:off + ENTRY_SIZE]
        return bytes(e[:KEY_SIZE]), bytes(e[KEY_SIZE:])

    def set_entry(self, slot: int, key: bytes, tag: bytes) -> None:
        off = slot * ENTRY_SIZE
        self.plain[off:off + KEY_SIZE] = key
        self.plain[off + KEY_SIZE:off + ENTRY_SIZE] = tag
        self.dirty = True


class HostFile:
    """Untrusted-side file access by absolute offset."""

    def __init__(self, fd: int):
        self.fd = fd

    @classmethod
    def open(cls, path, create: bool = False, force: bool = False) -> "HostFile":
        if create:
            flags = os.O_RDWR | os.O_CREAT | (os.O_TRUNC if force else os.O_EXCL)
        else:
            flags = os.O_RDWR
        return cls(os.open(path, flags, 0o600))

    def pread(self, n: int, offset: int) -> bytes:
        return os.pread(self.fd, n, offset)

    def pwrite(self, data, offset: int) -> int:
        return os.pwrite(self.fd, data, offset)

    def size(self) -> int:
        return os.fstat(self.fd).st_size

    def close(self) -> None:
        if self.fd >= 0:
            os.close(self.fd)
            self.fd = -1


def record_offset(nid: int) -> int:
    return SUPERBLOCK_SIZE + nid * RECORD_SIZE


class ProtectedFile:
    def __init__(self, io, sb: Superblock, policy: KeyPolicy, variant: Variant,
                 cache_capacity: int, sim=None, path=None):
        if cache_capacity < 2:
            raise ValueError("cache_capacity must be >= 2 (root plus one node)")
        if sb.cipher_variant is not variant.cipher:
            raise VariantMismatchError(
                f"file uses {sb.cipher_variant.name}, {variant.value} expects {variant.cipher.name}")
        self.path = path
        self.variant = variant
        self.cipher = variant.cipher
        self.counters = StoreCounters()
        self.cache = LruCache(cache_capacity - 1)  # the root holds the remaining slot
        self.sim = sim
        self.closed = False
        self._io = io
        self._policy = policy
        self._sb = sb
        self._size = sb.logical_size
        self._cursor = 0
        self._n_data = data_node_count(sb.logical_size)
        self._top = root_level(self._n_data)
        self._pending: dict[tuple[int, int], dict[int, tuple[bytes, bytes]]] = {}
        self._file_nonce = sb.file_nonce
        self._kdf_salt = sb.kdf_salt
        self._root_key = policy.root_key(sb.kdf_salt, sb.file_nonce)
        self._root: NodeRecord | None = None

    # -- construction ------------------------------------------------------

    @classmethod
    def create(cls, path, policy: KeyPolicy, variant: Variant | str = Variant.BASELINE,
               cache_capacity: int = DEFAULT_CACHE_CAPACITY, *, force: bool = False,
               sim=None, opener=HostFile.open) -> "ProtectedFile":
        variant = Variant(variant)
        if cache_capacity < 2:
            raise ValueError("cache_capacity must be >= 2 (root plus one node)")
        sb = Superblock(MAGIC, VERSION, variant.cipher, 0, 1, os.urandom(16), os.urandom(16))
        io = opener(path, create=True, force=force)
        f = cls(io, sb, policy, variant, cache_capacity, sim, path)
        f._root = f._new_node(0, 0, 0, f._root_key)
        f._root.dirty = True
        f._sb = None  # nothing valid on disk yet
        f.flush()
        return f

    @classmethod
    def open(cls, path, policy: KeyPolicy, variant: Variant | str = Variant.BASELINE,
             cache_capacity: int = DEFAULT_CACHE_CAPACITY, *, sim=None,
             opener=HostFile.open) -> "ProtectedFile":
        variant = Variant(variant)
        io = opener(path, create=False)
        try:
            raw = io.pread(SUPERBLOCK_SIZE, 0)
            sb = Superblock.unpack(raw)
            f = cls(io, sb, policy, variant, cache_capacity, sim, path)
            f._count_read(SUPERBLOCK_SIZE)
            f._root = f._load_root(raw)
        except Exception:
            io.close()
            raise
        return f

    # -- public API --------------------------------------------------------

    @property
    def logical_size(self) -> int:
        return self._size

    @property
    def cursor(self) -> int:
        return self._cursor

    @property
    def node_count(self) -> int:
        return node_count_for_data(self._n_data)

    def tell(self) -> int:
        return self._cursor

    def seek(self, offset: int, whence: Whence | int = Whence.SET) -> int:
        self._check_open()
        whence = Whence(whence)
        base = {Whence.SET: 0, Whence.CUR: self._cursor, Whence.END: self._size}[whence]
        pos = base + offset
        if pos < 0:
            raise SeekRangeError(f"negative position {pos}")
        if pos > self._size:
            raise BeyondEOFError(f"position {pos} beyond end of file ({self._size})")
        self._cursor = pos
        return pos

    def write(self, data) -> int:
        self._check_open()
        if self._cursor > self._size:
            raise BeyondEOFError("write position beyond end of file")
        data = memoryview(data).cast("B")
        pos, done = self._cursor, 0
        while done < len(data):
            d, off = divmod(pos, NODE_SIZE)
            n = min(NODE_SIZE - off, len(data) - done)
            if d >= self._n_data:
                self._grow_to(d + 1)
            node = self._get(0, d)
            node.plain[off:off + n] = data[done:done + n]
            node.dirty = True
            pos += n
            done += n
        self._cursor = pos
        self._size = max(self._size, pos)
        return done

    def read(self, n: int) -> bytes:
        self._check_open()
        n = max(0, min(n, self._size - self._cursor))
        out = bytearray(n)
        pos, done = self._cursor, 0
        while done < n:
            d, off = divmod(pos, NODE_SIZE)
            k = min(NODE_SIZE - off, n - done)
            node = self._get(0, d)
            out[done:done + k] = node.plain[off:off + k]
            pos += k
            done += k
        self._cursor = pos
        return bytes(out)

    def flush(self) -> None:
        self._check_open()
        sb_stale = self._sb is None or self._sb.logical_size != self._size
        if not (sb_stale or self._pending or self._root.dirty
                or any(n.dirty for n in self.cache.values())):
            return
        for level in range(self._top):
            for node in sorted((n for n in self.cache.values() if n.level == level and n.dirty),
                               key=lambda n: n.index):
                self._write_node(node)
            for paddr in sorted(k for k in self._pending if k[0] == level + 1):
                if paddr in self._pending:
                    self._get(*paddr)
        sb = Superblock(MAGIC, VERSION, self.cipher, self._size, self.node_count,
                        self._file_nonce, self._kdf_salt)
        packed = sb.pack()
        self._write_record(self._root, aad=packed)
        self._io.pwrite(packed, 0)
        self._count_write(SUPERBLOCK_SIZE)
        self._sb = sb

    def close(self) -> None:
        if self.closed:
            return
        try:
            self.flush()
        finally:
            nodes = self.cache.values() + ([self._root] if self._root else [])
            for node in nodes:
                self._release(node)
            self.cache.clear()
            self._root = None
            self._io.close()
            self.closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- internals: tree shape ---------------------------------------------

    def _check_open(self):
        if self.closed:
            raise PfsError("file is closed")

    def _grow_to(self, n_new: int) -> None:
        for d in range(self._n_data, n_new):
            if self._top == 0 or d + 1 > FANOUT ** self._top:
                self._grow_height()
            for level in range(self._top - 1, 0, -1):
                span = FANOUT ** level
                if -(-(d + 1) // span) > -(-d // span):
                    self._create(level, d // span)
            self._create(0, d)
            self._n_data = d + 1

    def _grow_height(self) -> None:
        if self._top == 0:
            self._top = 1
            self._root.level = 1
            return
        old = self._top
        self._make_room()
        node = self._new_node(old, 0, node_id(old, 0), os.urandom(KEY_SIZE))
        node.plain[:] = self._root.plain
        node.dirty = True
        self._top = old + 1
        self._root.level = self._top
        self._root.plain[:] = _ZERO_PAGE
        self._root.dirty = True
        self.cache.insert((old, 0), node)
        self._set_entry(old, 0, node.key, _ZERO_TAG)

    def _create(self, level: int, index: int) -> None:
        self._make_room()
        node = self._new_node(level, index, node_id(level, index), os.urandom(KEY_SIZE))
        node.dirty = True
        self.cache.insert((level, index), node)
        self._set_entry(level, index, node.key, _ZERO_TAG)

    # -- internals: cache --------------------------------------------------

    def _get(self, level: int, index: int) -> NodeRecord:
        if level == self._top:
            return self._root
        node = self.cache.lookup((level, index))
        if node is not None:
            return node
        key, tag = self._child_entry(level, index)
        self._make_room()
        node = self._load(level, index, key, tag)
        pend = self._pending.pop((level, index), None)
        if pend:
            for slot, (k, t) in pend.items():
                node.set_entry(slot, k, t)
        self.cache.insert((level, index), node)
        return node

    def _child_entry(self, level: int, index: int) -> tuple[bytes, bytes]:
        paddr, slot = parent_of(level, index, self._top)
        pend = self._pending.get(paddr)
        if pend and slot in pend:
            return pend[slot]
        return self._get(*paddr).entry(slot)

    def _set_entry(self, level: int, index: int, key: bytes, tag: bytes) -> None:
        paddr, slot = parent_of(level, index, self._top)
        parent = self._root if paddr[0] == self._top else self.cache.peek(paddr)
        if parent is not None:
            parent.set_entry(slot, key, tag)
        else:
            self._pending.setdefault(paddr, {})[slot] = (key, tag)

    def _make_room(self) -> None:
        while self.cache.full():
            _, victim = self.cache.pop_lru()
            if victim.dirty:
                self._write_node(victim)
            self._release(victim)

    def _new_node(self, level, index, nid, key) -> NodeRecord:
        node = NodeRecord(level, index, nid, key)
        if self.variant is Variant.BASELINE:
            # the whole structure is wiped before any field is set
            node.plain = bytearray(NODE_SIZE)
            node.cipher = bytearray(RECORD_SIZE)
            node.plain[:] = _ZERO_PAGE
            node.cipher[:] = bytes(RECORD_SIZE)
            self.counters.bytes_cleared += NODE_STRUCT
            self._sim_mem(NODE_STRUCT, 0, NODE_STRUCT)
        else:
            node.plain = bytearray(NODE_SIZE)
            self._sim_mem(0, 0, NODE_STRUCT)
        return node

    def _release(self, node: NodeRecord) -> None:
        if self.variant is Variant.BASELINE:
            node.plain[:] = _ZERO_PAGE
            self.counters.bytes_cleared += NODE_SIZE
            self._sim_mem(NODE_SIZE, 0, -NODE_STRUCT)
        else:
            self._sim_mem(0, 0, -NODE_STRUCT)
        node.plain = None
        node.cipher = None

    # -- internals: node I/O -----------------------------------------------

    def _read_record(self, nid: int) -> bytes:
        raw = self._io.pread(RECORD_SIZE, record_offset(nid))
        self._count_read(len(raw))
        if len(raw) != RECORD_SIZE:
            raise StructuralError(nid)
        return raw

    def _decrypt_into(self, node: NodeRecord, raw: bytes, expected_tag: bytes | None,
                      aad: bytes | None = None) -> None:
        if self.variant is Variant.BASELINE:
            node.cipher[:] = raw
            self.counters.ciphertext_bytes_copied_in += RECORD_SIZE
            self._sim_mem(0, RECORD_SIZE, 0)
            src = memoryview(node.cipher)
        else:
            src = memoryview(raw)
        iv, ct, tag = src[:IV_SIZE], src[IV_SIZE:IV_SIZE + NODE_SIZE], bytes(src[-TAG_SIZE:])
        if expected_tag is not None and not hmac.compare_digest(tag, expected_tag):
            raise IntegrityError(node.node_id)
        plain = open_sealed(self.cipher, node.key, bytes(iv), ct, tag, aad)
        if plain is None:
            raise IntegrityError(node.node_id)
        self.counters.nodes_decrypted += 1
        node.plain[:] = plain
        node.iv = bytes(iv)
        node.tag = tag

    def _load(self, level: int, index: int, key: bytes, tag: bytes) -> NodeRecord:
        nid = node_id(level, index)
        node = self._new_node(level, index, nid, key)
        try:
            self._decrypt_into(node, self._read_record(nid), tag)
        except IntegrityError:
            self._release(node)
            raise
        return node

    def _load_root(self, sb_raw: bytes) -> NodeRecord:
        root = self._new_node(self._top, 0, 0, self._root_key)
        try:
            self._decrypt_into(root, self._read_record(0), None, aad=sb_raw[:SUPERBLOCK_SIZE])
        except IntegrityError:
            self._release(root)
            raise
        return root

    def _write_record(self, node: NodeRecord, aad: bytes | None = None) -> None:
        iv = os.urandom(IV_SIZE)
        ct, tag = seal(self.cipher, node.key, iv, node.plain, aad)
        self._io.pwrite(iv + ct + tag, record_offset(node.node_id))
        self.counters.nodes_encrypted += 1
        self._count_write(RECORD_SIZE)
        node.iv, node.tag, node.dirty = iv, tag, False

    def _write_node(self, node: NodeRecord) -> None:
        self._write_record(node)
        self._set_entry(node.level, node.index, node.key, node.tag)

    def _count_read(self, nbytes: int) -> None:
        self.counters.boundary_reads += 1
        if self.sim is not None:
            self.sim.crossing("ocall")
            self.sim.untrusted_io(nbytes)

    def _count_write(self, nbytes: int) -> None:
        self.counters.boundary_writes += 1
        if self.sim is not None:
            self.sim.crossing("ocall")
            self.sim.untrusted_io(nbytes)

    def _sim_mem(self, cleared: int, written: int, resident: int) -> None:
        if self.sim is not None:
            self.sim.mem(cleared, written, resident)


# -- operation-style entry points --------------------------------------------

def pfs_create(path, policy, variant=Variant.BASELINE, cache_capacity=DEFAULT_CACHE_CAPACITY, **kw):
    return ProtectedFile.create(path, policy, variant, cache_capacity, **kw)


def pfs_open(path, policy, variant=Variant.BASELINE, cache_capacity=DEFAULT_CACHE_CAPACITY, **kw):
    return ProtectedFile.open(path, policy, variant, cache_capacity, **kw)


def inspect_superblock(path) -> Superblock:
    """Cleartext metadata; readable by anyone holding the file, no key needed."""
    with open(path, "rb") as fh:
        return Superblock.unpack(fh.read(SUPERBLOCK_SIZE))


@dataclass(frozen=True)
class VerifyReport:
    ok: bool
    bad_node: int | None = None
    reason: str = ""


def verify_file(path, policy: KeyPolicy) -> VerifyReport:
    """Authenticate every node, root first, depth-first in child order."""
    with open(path, "rb") as fh:
        raw_sb = fh.read(SUPERBLOCK_SIZE)
        sb = Superblock.unpack(raw_sb)
        cipher = sb.cipher_variant
        n_data = data_node_count(sb.logical_size)
        top = root_level(n_data)
        counts = level_counts(n_data)

        def fetch(nid):
            fh.seek(record_offset(nid))
            raw = fh.read(RECORD_SIZE)
            if len(raw) != RECORD_SIZE:
                raise StructuralError(nid)
            return raw

        def check(nid, key, want_tag, aad=None):
            raw = fetch(nid)
            tag = raw[-TAG_SIZE:]
            if want_tag is not None and not hmac.compare_digest(tag, want_tag):
                raise IntegrityError(nid)
            plain = open_sealed(cipher, key, raw[:IV_SIZE], raw[IV_SIZE:-TAG_SIZE], tag, aad)
            if plain is None:
                raise IntegrityError(nid)
            return plain

        def walk(level, index, plain):
            if level == 0:
                return
            child_level = level - 1
            first = index * FANOUT if level != top else 0
            n_children = counts[child_level] - first if level == top else \
                min(FANOUT, counts[child_level] - first)
            for slot in range(n_children):
                ci = first + slot
                off = slot * ENTRY_SIZE
                key, tag = plain[off:off + KEY_SIZE], plain[off + KEY_SIZE:off + ENTRY_SIZE]
                child = check(node_id(child_level, ci), key, tag)
                walk(child_level, ci, child)

        try:
            root = check(0, policy.root_key(sb.kdf_salt, sb.file_nonce), None, raw_sb)
            walk(top, 0, root)
        except StructuralError as e:
            return VerifyReport(False, e.node_id, e.reason)
        except IntegrityError as e:
            return VerifyReport(False, e.node_id, e.reason)
        fh.seek(0, os.SEEK_END)
        expected = record_offset(sb.node_count)
        if fh.tell() != expected:
            return VerifyReport(False, None, f"file length {fh.tell()} != expected {expected}")
    return VerifyReport(True)
