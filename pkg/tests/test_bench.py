import struct

import pytest
from hypothesis import given, strategies as st

from twinehost import bench as B
from twinehost.bench import Backend, Op, WorkloadSpec
from twinehost.store import ProtectedFile, Variant, inspect_superblock

MASK = (1 << 64) - 1


def ref_blob(seed, rid):
    """Straight transcription of the documented generator."""
    def mix(z):
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)
    s = mix((seed + 0x9E3779B97F4A7C15 * (rid + 1)) & MASK) or 0x9E3779B97F4A7C15
    out = b""
    for _ in range(128):
        s ^= s >> 12
        s = (s ^ (s << 25)) & MASK
        s ^= s >> 27
        out += struct.pack("<Q", (s * 0x2545F4914F6CDD1D) & MASK)
    return out


@given(st.integers(0, MASK), st.integers(0, 1 << 40))
def test_blob_matches_reference(seed, rid):
    assert B.record_blob(seed, rid) == ref_blob(seed, rid)


def test_pinned_words():
    # cross-checked once against a separate numpy uint64 implementation
    assert B.record_blob(0, 0)[:8].hex() == "d08206550db4bc7b"
    assert B.record_blob(42, 7)[-8:].hex() == "5895a470988da01f"
    assert B.make_slot(1, 5)[:8] == struct.pack("<Q", 5)
    assert len(B.make_slot(1, 5)) == 1032


def test_rand_ids_in_range_and_seeded():
    ids = B.rand_ids(3, 1000, 5000)
    assert min(ids) >= 0 and max(ids) < 1000
    assert ids == B.rand_ids(3, 1000, 5000) != B.rand_ids(4, 1000, 5000)


def spec(tmp_path=None, **kw):
    base = dict(start_records=100, step=100, max_records=300, seed=9, cost_profile="paper")
    base.update(kw)
    if tmp_path is not None:
        base["workdir"] = str(tmp_path)
    return WorkloadSpec(**base)


def test_spec_validation(tmp_path):
    with pytest.raises(ValueError):
        WorkloadSpec(start_records=10, max_records=5)
    with pytest.raises(ValueError):
        WorkloadSpec(record_blob_size=512)
    cfg = tmp_path / "w.ini"
    cfg.write_text("[workload]\nbackend = in_memory\nmax_records = 2000\nepc_limit = 8MiB\n")
    s = WorkloadSpec.from_file(cfg, seed=4)
    assert (s.backend, s.max_records, s.epc_limit, s.seed) == (Backend.IN_MEMORY, 2000, 8 << 20, 4)


def test_insert_slot_arithmetic(tmp_path):
    samples = B.bench_insert(spec(tmp_path, start_records=1000, max_records=1000,
                                  backend="protected_baseline"))
    assert len(samples) == 1 and samples[0].op is Op.INSERT
    assert inspect_superblock(tmp_path / "records-protected_baseline.db").logical_size == 1_032_000


def test_same_seed_same_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    B.bench_insert(spec(a, backend="plain_file"))
    B.bench_insert(spec(b, backend="plain_file"))
    assert (a / "records-plain_file.db").read_bytes() == (b / "records-plain_file.db").read_bytes()


def test_protected_plaintext_equals_plain(tmp_path):
    B.bench_insert(spec(tmp_path, backend="plain_file"))
    plain = (tmp_path / "records-plain_file.db").read_bytes()
    for backend, variant in ((Backend.PROTECTED_BASELINE, Variant.BASELINE),
                             (Backend.PROTECTED_OPTIMIZED, Variant.OPTIMIZED)):
        B.bench_insert(spec(tmp_path, backend=backend))
        with ProtectedFile.open(tmp_path / f"records-{backend.value}.db", B.BENCH_POLICY, variant) as f:
            assert f.read(f.logical_size) == plain


@pytest.mark.parametrize("backend", list(Backend))
def test_reads_verify_every_record(backend):
    samples = B.run_sweep(spec(backend=backend))
    assert [(s.records, s.op) for s in samples] == [
        (n, op) for n in (100, 200, 300) for op in (Op.INSERT, Op.SEQ_READ, Op.RAND_READ)]


def test_corruption_detected():
    h = B.Harness(spec(backend="in_memory"))
    h.grow_to(10)
    h.store.buf[5 * 1032 + 100] ^= 1
    with pytest.raises(B.DataCorruption):
        h.read_pass(10, Op.SEQ_READ)
    h.close()


def test_seq_read_counter_law():
    s = B.bench_seq_read(spec(backend="protected_baseline", start_records=400, max_records=400))[0]
    nodes = -(-400 * 1032 // 4096)
    assert s.counters.ciphertext_bytes_copied_in >= nodes * 4096
    assert s.counters.bytes_cleared >= nodes * 8192
    o = B.bench_seq_read(spec(backend="protected_optimized", start_records=400, max_records=400))[0]
    assert o.counters.ciphertext_bytes_copied_in == 0 and o.counters.bytes_cleared == 0


def test_in_memory_has_zero_store_counters():
    for s in B.run_sweep(spec(backend="in_memory")):
        assert all(v == 0 for v in s.counters.as_dict().values())


def test_rand_read_issues_exactly_n_reads():
    s = B.bench_rand_read(spec(backend="plain_file", draws=777))
    assert all(x.counters.boundary_reads == 777 for x in s)
    s = B.bench_rand_read(spec(backend="plain_file"))
    assert [x.counters.boundary_reads for x in s] == [100, 200, 300]


def test_knee_in_memory():
    s = B.bench_rand_read(spec(backend="in_memory", start_records=100, step=100, max_records=1600,
                               epc_limit=800 * 1024))
    per = B.per_op_ns(s)
    below = [v for n, v in per.items() if n * 1032 <= 800 * 1024]
    above = [v for n, v in per.items() if n * 1032 > 800 * 1024]
    assert min(above) > max(below)
    values = list(per.values())
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_optimized_cheaper_than_baseline():
    kw = dict(start_records=2000, max_records=2000, draws=500, cache_capacity=4)
    base = B.bench_rand_read(spec(backend="protected_baseline", **kw))[0]
    opt = B.bench_rand_read(spec(backend="protected_optimized", **kw))[0]
    assert opt.simulated_ns < base.simulated_ns


@pytest.mark.parametrize("backend", list(Backend))
def test_insert_cost_monotone(backend):
    s = B.bench_insert(spec(backend=backend, epc_limit=64 * 1024))
    costs = [x.simulated_ns for x in s]
    assert all(b >= a for a, b in zip(costs, costs[1:]))


def test_profile_shapes():
    kw = dict(start_records=3000, max_records=3000, draws=300, cache_capacity=4)
    base = B.bench_profile(spec(backend="protected_baseline", **kw))
    sh = base.shares
    assert sh["clear"] > sh["boundary"] > sh["untrusted_read"] > sh["app"] > 0
    assert abs(sum(sh.values()) - 1) < 1e-9
    opt = B.bench_profile(spec(backend="protected_optimized", **kw))
    assert opt.shares["clear"] == 0
    off = B.bench_profile(spec(backend="protected_baseline", cost_profile="off", **kw))
    assert all(v == 0 for v in off.shares.values())
    assert off.wall_ns > 0 and abs(sum(off.wall_shares.values()) - 1) < 1e-9


def test_csv_round_trip(tmp_path):
    assert B.format_csv([]).splitlines() == [",".join(B.CSV_HEADER)]
    samples = B.bench_insert(spec())
    path = tmp_path / "s.csv"
    B.emit_csv(samples, path)
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.count(b"\n") == 4
    assert raw.startswith(b"records,op,backend,wall_ns,simulated_ns,")
    assert B.load_csv(path) == samples


def test_reproducible_except_wall():
    a = B.run_sweep(spec(backend="protected_baseline"))
    b = B.run_sweep(spec(backend="protected_baseline"))
    strip = lambda xs: [(x.records, x.op, x.simulated_ns, x.counters) for x in xs]
    assert strip(a) == strip(b)
