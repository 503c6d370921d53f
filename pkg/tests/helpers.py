"""Shared test machinery: the byte-array model oracle and tamper helpers."""
import random

from twinehost.store import KeyPolicy, ProtectedFile, Whence

POLICY = KeyPolicy.derived(bytes(range(32)))


class ByteModel:
    """Plain in-memory file with the store's cursor rules."""

    def __init__(self):
        self.buf = bytearray()
        self.cur = 0

    def write(self, data):
        assert self.cur <= len(self.buf)
        self.buf[self.cur:self.cur + len(data)] = data
        self.cur += len(data)
        return len(data)

    def read(self, n):
        out = bytes(self.buf[self.cur:self.cur + n])
        self.cur += len(out)
        return out

    def seek(self, pos):
        self.cur = pos
        return pos


def run_oracle_sequence(path, variant, seed, n_ops=1000, max_size=48 * 1024):
    """Apply one seeded random op sequence to store and model.

    Returns the number of mismatching results (0 when equivalent).
    """
    rng = random.Random(seed)
    cap = rng.choice([2, 3, 5, 8, 48])
    model = ByteModel()
    f = ProtectedFile.create(path, POLICY, variant, cap, force=True)
    mismatches = 0
    try:
        for _ in range(n_ops):
            op = rng.choices(["write", "read", "seek", "flush", "reopen"], [40, 30, 20, 5, 5])[0]
            size = len(model.buf)
            if op == "write":
                n = rng.choice([1, 7, 100, 4096, rng.randrange(0, 9000)])
                n = min(n, max(0, max_size - model.cur))
                data = rng.randbytes(n)
                mismatches += f.write(data) != model.write(data)
            elif op == "read":
                n = rng.choice([0, 1, 33, 4096, rng.randrange(0, 12000)])
                mismatches += f.read(n) != model.read(n)
            elif op == "seek":
                pos = rng.randrange(0, size + 1)
                whence = rng.choice(list(Whence))
                off = {Whence.SET: pos, Whence.CUR: pos - model.cur, Whence.END: pos - size}[whence]
                mismatches += f.seek(off, whence) != model.seek(pos)
            elif op == "flush":
                f.flush()
            else:
                f.close()
                f = ProtectedFile.open(path, POLICY, variant, cap)
                model.cur = 0
            mismatches += f.logical_size != len(model.buf)
        f.seek(0)
        mismatches += f.read(len(model.buf) + 1) != bytes(model.buf)
    finally:
        f.close()
    return mismatches


def flip_bit(path, byte_offset, bit):
    with open(path, "r+b") as fh:
        fh.seek(byte_offset)
        b = fh.read(1)[0]
        fh.seek(byte_offset)
        fh.write(bytes([b ^ (1 << bit)]))


# -- fault injection ------------------------------------------------------------

class Crash(Exception):
    pass


class CrashingFile:
    """HostFile wrapper that dies on the ``cut``-th pwrite (0-based)."""

    def __init__(self, inner, cut, log):
        self.inner = inner
        self.cut = cut
        self.log = log

    def pread(self, n, offset):
        return self.inner.pread(n, offset)

    def pwrite(self, data, offset):
        if self.cut is not None and len(self.log) >= self.cut:
            raise Crash(len(self.log))
        self.log.append(offset)
        return self.inner.pwrite(data, offset)

    def size(self):
        return self.inner.size()

    def close(self):
        self.inner.close()


def crashing_opener(cut, log):
    from twinehost.store import HostFile

    def opener(path, create=False, force=False):
        return CrashingFile(HostFile.open(path, create=create, force=force), cut, log)
    return opener


# -- WASI hosts -----------------------------------------------------------------

class RegressingClockHost:
    """Host whose monotonic clock jumps backwards on a fraction of calls."""

    def __new__(cls, rate=0.1, seed=0):
        from twinehost.wasi import UntrustedHost

        class _Host(UntrustedHost):
            def __init__(self):
                super().__init__()
                self.rng = random.Random(seed)
                self.t = 1_000_000_000
                self.regressions = 0

            def clock_monotonic(self):
                if self.rng.random() < rate:
                    self.regressions += 1
                    return max(0, self.t - self.rng.randrange(1, 5_000_000_000))
                self.t += self.rng.randrange(0, 3)
                return self.t
        return _Host()


def sandbox_corpus(tmp_path):
    """Build a sandbox plus an escape corpus and a legitimate-path corpus.

    Returns ``(root, escapes, legit)``; paths are relative to the preopen fd.
    """
    import os
    root = tmp_path / "sandbox"
    sibling = tmp_path / "sandbox2"
    outside = tmp_path / "outside"
    for d in (root / "a" / "b", root / "docs", sibling, outside):
        d.mkdir(parents=True, exist_ok=True)
    (outside / "secret").write_bytes(b"secret")
    (sibling / "f").write_bytes(b"sibling")
    os.symlink(outside, root / "link_out")
    os.symlink(outside / "secret", root / "a" / "link_file")
    os.symlink(root / "docs", root / "link_in")
    os.symlink("../../outside", root / "a" / "rel_link")

    escapes = [
        "..", "../", "../..", "../../etc/passwd", "../outside/secret", "../sandbox2/f",
        "../sandbox2", "a/../..", "a/b/../../..", "a/b/../../../outside/secret",
        "./..", "./../sandbox2/f", "a/./../../x", "docs/../../sandbox2", "a/b/c/../../../..",
        "../" * 10 + "etc/passwd", "a/" + "../" * 3, "docs/" + "../" * 2 + "outside",
        "/etc/passwd", "/", "/tmp", "/sandbox/a", str(outside / "secret"), str(sibling / "f"),
        str(root / "a"), "//etc/passwd", "/..", "/./etc",
        "link_out", "link_out/secret", "link_out/../x", "a/link_file", "link_in",
        "link_in/anything", "a/rel_link", "a/rel_link/secret", "./link_out", "a/../link_out/secret",
        "docs/../link_in/x", "a/b/../../link_out",
        "../sandbox", "../sandbox/a", "../sandbox2/../sandbox/a", "..//sandbox2",
        "a//..//..//outside", ".././sandbox2", "a/b/../../../sandbox2/f", "docs/./../..",
        "a/b/../../../sandbox/docs", "../sandbox2/../../etc",
    ]
    legit = [
        "a", "a/b", "docs", "new.bin", "a/new.bin", "a/b/new.bin", "docs/readme",
        "./a", "a/./b", "a/b/..", "a/../docs", "a/b/../../docs/x", "docs/../a/b/y",
        "a//b", "./docs/./z", "a/b/./c", "x.y", ".hidden", "..name", "a/...",
    ]
    return root, escapes, legit
