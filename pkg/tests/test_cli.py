import json
import os

import pytest

from twinehost.cli import main
from twinehost.engine import fixtures
from twinehost.store import RECORD_SIZE, SUPERBLOCK_SIZE

KEY = "00112233445566778899aabbccddeeff"


@pytest.fixture
def mods(tmp_path):
    out = {}
    for name, make in [("hello", fixtures.hello), ("trap", fixtures.trap),
                       ("exit7", lambda: fixtures.exit_with(7)),
                       ("mkdir", fixtures.needs_passthrough), ("trusted", fixtures.trusted_only),
                       ("writer", lambda: fixtures.write_file(b"x", b"payload"))]:
        p = tmp_path / f"{name}.wasm"
        p.write_bytes(make())
        out[name] = str(p)
    return out


@pytest.fixture
def sbx(tmp_path):
    d = tmp_path / "sbx"
    d.mkdir()
    return d


def test_run_exit_codes(mods, capfd):
    assert main(["run", mods["hello"]]) == 0
    assert capfd.readouterr().out == "hello\n"
    assert main(["run", mods["exit7"]]) == 7
    assert main(["run", mods["trap"]]) == 134
    assert "unreachable" in capfd.readouterr().err


def test_run_missing_module_is_host_error(tmp_path, capfd):
    assert main(["run", str(tmp_path / "nope.wasm")]) == 2
    (tmp_path / "bad.wasm").write_bytes(b"\x00asm")
    assert main(["run", str(tmp_path / "bad.wasm")]) == 2


def test_no_untrusted_posix(mods, sbx, capfd):
    code = main(["run", mods["mkdir"], "--dir", f"data={sbx}", "--key-hex", KEY,
                 "--no-untrusted-posix", "--report"])
    err = capfd.readouterr().err
    assert code != 0 and "capability error" in err
    report = json.loads(err[err.index("{"):])
    assert report["passthrough_crossings"] == 0
    assert main(["run", mods["trusted"], "--no-untrusted-posix"]) == 0


def test_run_creates_protected_file(mods, sbx, capfd):
    assert main(["run", mods["writer"], "--dir", f"data={sbx}", "--key-hex", KEY]) == 0
    raw = (sbx / "x").read_bytes()
    assert raw[:8] == b"TWINEPFS" and b"payload" not in raw


def test_run_refuses_without_key(mods, sbx, capfd, monkeypatch):
    monkeypatch.delenv("TWINEHOST_MASTER_SECRET", raising=False)
    assert main(["run", mods["writer"], "--dir", f"data={sbx}"]) == 2
    assert "no key" in capfd.readouterr().err


def test_run_memory_and_profile_flags(mods, capfd):
    assert main(["run", mods["hello"], "--memory", "prealloc:65536", "--cost-profile", "paper",
                 "--epc", "8MiB"]) == 0
    assert main(["run", mods["hello"], "--memory", "prealloc:10"]) == 2
    assert main(["run", mods["hello"], "--memory", "bogus"]) == 2


def test_key_precedence(tmp_path, monkeypatch, capfd):
    plain = tmp_path / "p"
    plain.write_bytes(b"x" * 5000)
    secret = tmp_path / "secret"
    secret.write_bytes(bytes(range(32)))
    monkeypatch.setenv("TWINEHOST_MASTER_SECRET", "ab" * 32)
    enc = str(tmp_path / "e")
    assert main(["pfs", "encrypt", str(plain), enc, "--master-secret-file", str(secret)]) == 0
    # file wins over env; explicit key would win over both
    assert main(["pfs", "verify", enc, "--master-secret-file", str(secret)]) == 0
    assert main(["pfs", "verify", enc]) == 1
    assert main(["pfs", "verify", enc, "--key-hex", KEY, "--master-secret-file", str(secret)]) == 1
    monkeypatch.setenv("TWINEHOST_MASTER_SECRET", bytes(range(32)).hex())
    assert main(["pfs", "verify", enc]) == 0


def test_pfs_round_trip_inspect_and_tamper(tmp_path, capfd):
    src = tmp_path / "f"
    src.write_bytes(os.urandom(1 << 20))
    enc, dec = str(tmp_path / "f.pfs"), str(tmp_path / "f.out")
    assert main(["pfs", "encrypt", str(src), enc, "--key-hex", KEY]) == 0
    assert main(["pfs", "decrypt", enc, dec, "--key-hex", KEY]) == 0
    assert open(dec, "rb").read() == src.read_bytes()
    capfd.readouterr()
    assert main(["pfs", "inspect", enc]) == 0
    assert "node_count: 259" in capfd.readouterr().out
    off = SUPERBLOCK_SIZE + 77 * RECORD_SIZE + 500
    with open(enc, "r+b") as fh:
        fh.seek(off)
        b = fh.read(1)
        fh.seek(off)
        fh.write(bytes([b[0] ^ 4]))
    assert main(["pfs", "verify", enc, "--key-hex", KEY]) == 1
    assert "node 77" in capfd.readouterr().out
    assert main(["pfs", "decrypt", enc, dec, "--key-hex", KEY, "--force"]) == 1


def test_pfs_usage_errors(tmp_path, capfd):
    assert main(["pfs", "inspect", str(tmp_path / "missing")]) == 2
    assert main(["pfs", "verify", str(tmp_path / "missing"), "--key-hex", "zz"]) == 2
    assert main(["pfs"]) == 2


def test_bench_rand_read_rows(capfd):
    assert main(["bench", "rand-read", "--backend", "protected_baseline", "--max", "4000",
                 "--draws", "50"]) == 0
    lines = capfd.readouterr().out.splitlines()
    assert lines[0].startswith("records,op,backend,wall_ns,simulated_ns")
    assert len(lines) == 5


def test_bench_profile_json(tmp_path, capfd):
    out = tmp_path / "p.json"
    assert main(["bench", "profile", "--backend", "protected_baseline", "--cost-profile", "paper",
                 "--max", "2000", "--draws", "200", "--cache", "4", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert 0.40 <= data["shares"]["clear"] <= 0.60


def test_bench_bad_spec(capfd):
    assert main(["bench", "insert", "--max", "0"]) == 2
    assert main(["bench", "insert", "--cost-profile", "nope"]) == 2
