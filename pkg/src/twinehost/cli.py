"""``twinehost`` command line: run modules, drive benchmarks, inspect files."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from . import bench as B
from .engine import EngineError, LinkError, MemoryPolicy, UsageError, ValidationError, get_engine
from .sim import BoundarySim, load_profile, parse_size
from .store import (IntegrityError, KeyPolicy, PfsError, ProtectedFile, Variant,
                    inspect_superblock, verify_file)
from .store.crypto import CipherVariant
from .wasi import Preopen, WasiContext

EXIT_OK = 0
EXIT_INTEGRITY = 1
EXIT_USAGE = 2
EXIT_TRAP = 134

SECRET_ENV = "TWINEHOST_MASTER_SECRET"
COPY_CHUNK = 1 << 20

log = logging.getLogger("twinehost")


class CliError(Exception):
    """Usage or host-side problem; maps to exit status 2."""


# -- key material ------------------------------------------------------------

def _secret_bytes(raw: bytes, source: str) -> bytes:
    text = raw.strip()
    if len(raw) == 32:
        return raw
    try:
        decoded = bytes.fromhex(text.decode("ascii"))
    except (UnicodeDecodeError, ValueError):
        decoded = b""
    if len(decoded) == 32:
        return decoded
    raise CliError(f"{source}: master secret must be 32 raw bytes or 64 hex digits")


def resolve_key(args, required: bool = True) -> KeyPolicy | None:
    """Explicit key, then master-secret file, then the environment."""
    if getattr(args, "key_hex", None):
        try:
            key = bytes.fromhex(args.key_hex)
        except ValueError:
            raise CliError("--key-hex is not valid hex") from None
        if len(key) != 16:
            raise CliError("--key-hex must be 16 bytes (32 hex digits)")
        return KeyPolicy.explicit(key)
    if getattr(args, "master_secret_file", None):
        try:
            with open(args.master_secret_file, "rb") as fh:
                raw = fh.read()
        except OSError as e:
            raise CliError(f"cannot read master secret file: {e.strerror}") from None
        return KeyPolicy.derived(_secret_bytes(raw, "--master-secret-file"))
    env = os.environ.get(SECRET_ENV)
    if env:
        return KeyPolicy.derived(_secret_bytes(env.encode(), SECRET_ENV))
    if required:
        raise CliError(f"no key: pass --key-hex, --master-secret-file or set {SECRET_ENV}")
    return None


def _add_key_flags(p):
    p.add_argument("--key-hex", help="explicit 16-byte root key as hex")
    p.add_argument("--master-secret-file", help="file holding the 32-byte master secret")


def _mapping(text: str, flag: str) -> tuple[str, str]:
    if "=" not in text:
        raise CliError(f"{flag} expects GUEST=HOST, got {text!r}")
    guest, host = text.split("=", 1)
    if not guest.startswith("/"):
        guest = "/" + guest
    if not os.path.isdir(host):
        raise CliError(f"{flag}: host directory {host!r} does not exist")
    return guest, host


def _sim(args) -> BoundarySim | None:
    if args.cost_profile is None and args.epc is None and not getattr(args, "report", False):
        return None
    try:
        model = load_profile(args.cost_profile or "paper")
    except ValueError as e:
        raise CliError(str(e)) from None
    if args.epc is not None:
        model = replace(model, epc_limit=args.epc)
    return BoundarySim(model)


def _size(text: str) -> int:
    try:
        return parse_size(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size {text!r}") from None


# -- run ---------------------------------------------------------------------

def cmd_run(args) -> int:
    preopens = [Preopen(*_mapping(d, "--dir")) for d in args.dir]
    preopens += [Preopen(*_mapping(d, "--plain-dir"), protected=False) for d in args.plain_dir]
    env = {}
    for kv in args.env:
        if "=" not in kv:
            raise CliError(f"--env expects K=V, got {kv!r}")
        k, v = kv.split("=", 1)
        env[k] = v
    policy = resolve_key(args, required=bool(args.dir))
    try:
        memory = MemoryPolicy.parse(args.memory)
    except ValueError as e:
        raise CliError(str(e)) from None
    sim = _sim(args)
    try:
        with open(args.module, "rb") as fh:
            wasm = fh.read()
    except OSError as e:
        raise CliError(f"cannot read module: {e.strerror}") from None

    stdout = sys.stdout.buffer
    ctx = WasiContext(preopens, args=[os.path.basename(args.module), *args.args], env=env,
                      passthrough_enabled=not args.no_untrusted_posix, key_policy=policy,
                      variant=Variant(args.variant), sim=sim, stdout=stdout,
                      stderr=sys.stderr.buffer, stdin=b"")
    try:
        engine = get_engine(args.engine)
        module = engine.load_module(wasm)
        inst = engine.instantiate(module, ctx, memory)
    except (ValidationError, LinkError) as e:
        raise CliError(f"cannot load module: {e}") from None
    except ImportError:
        raise CliError(f"engine {args.engine!r} is not installed") from None
    try:
        code = inst.run_start()
    except UsageError as e:
        raise CliError(str(e)) from None
    stdout.flush()
    if inst.trap_message:
        print(f"trap: {inst.trap_message}", file=sys.stderr)
    if args.report and sim is not None:
        print(sim.report().to_json(), file=sys.stderr)
    return code


# -- pfs ---------------------------------------------------------------------

def _variant_of(path) -> Variant:
    sb = inspect_superblock(path)
    return Variant.BASELINE if sb.cipher_variant is CipherVariant.GCM else Variant.OPTIMIZED


def cmd_pfs(args) -> int:
    if args.pfs_cmd == "inspect":
        sb = inspect_superblock(args.path)
        info = {"magic": sb.magic.decode("ascii", "replace"), "version": sb.version,
                "cipher": sb.cipher_variant.name, "logical_size": sb.logical_size,
                "node_count": sb.node_count, "file_nonce": sb.file_nonce.hex(),
                "kdf_salt": sb.kdf_salt.hex()}
        for k, v in info.items():
            print(f"{k}: {v}")
        return EXIT_OK
    policy = resolve_key(args)
    if args.pfs_cmd == "verify":
        report = verify_file(args.path, policy)
        if report.ok:
            print("ok")
            return EXIT_OK
        where = f"node {report.bad_node}" if report.bad_node is not None else "file"
        print(f"integrity failure at {where}: {report.reason}")
        return EXIT_INTEGRITY
    if args.pfs_cmd == "encrypt":
        with open(args.src, "rb") as src, \
                ProtectedFile.create(args.dst, policy, Variant(args.variant), force=args.force) as dst:
            while chunk := src.read(COPY_CHUNK):
                dst.write(chunk)
        return EXIT_OK
    # decrypt
    if os.path.exists(args.dst) and not args.force:
        raise CliError(f"{args.dst} exists (use --force)")
    with ProtectedFile.open(args.src, policy, _variant_of(args.src)) as src, open(args.dst, "wb") as dst:
        while chunk := src.read(COPY_CHUNK):
            dst.write(chunk)
    return EXIT_OK


# -- bench -------------------------------------------------------------------

_OPS = {"insert": B.bench_insert, "seq-read": B.bench_seq_read, "rand-read": B.bench_rand_read}


def _spec(args) -> B.WorkloadSpec:
    over = dict(backend=args.backend, max_records=args.max, start_records=args.start, step=args.step,
                seed=args.seed, cost_profile=args.cost_profile, epc_limit=args.epc,
                draws=args.draws, cache_capacity=args.cache)
    try:
        if args.config:
            return B.WorkloadSpec.from_file(args.config, **over)
        spec = B.WorkloadSpec(**{k: v for k, v in over.items() if v is not None})
        spec.cost_model()
        return spec
    except (ValueError, KeyError, OSError) as e:
        raise CliError(f"bad workload spec: {e}") from None


def cmd_bench(args) -> int:
    spec = _spec(args)
    if args.bench_cmd == "profile":
        if args.start is None:
            spec = replace(spec, start_records=spec.max_records)
        text = json.dumps(B.bench_profile(spec).to_dict(), indent=2, sort_keys=True) + "\n"
    else:
        text = B.format_csv(_OPS[args.bench_cmd](spec))
    if args.out:
        with open(args.out, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twinehost", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a WASI module inside the sandboxed host")
    run.add_argument("module")
    run.add_argument("args", nargs="*", help="guest arguments (put them after -- if they start with a dash)")
    run.add_argument("--dir", action="append", default=[], metavar="GUEST=HOST",
                     help="preopen a protected directory")
    run.add_argument("--plain-dir", action="append", default=[], metavar="GUEST=HOST",
                     help="preopen an unprotected directory (host POSIX layer)")
    run.add_argument("--env", action="append", default=[], metavar="K=V")
    run.add_argument("--no-untrusted-posix", action="store_true",
                     help="refuse every call that needs the untrusted POSIX layer")
    run.add_argument("--memory", default="system", help="system | custom | prealloc:<bytes>")
    run.add_argument("--cost-profile", default=None)
    run.add_argument("--epc", type=_size, default=None)
    run.add_argument("--report", action="store_true", help="print the boundary report to stderr")
    run.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.OPTIMIZED.value)
    run.add_argument("--engine", choices=["stub", "wasmtime"], default="stub")
    _add_key_flags(run)
    run.set_defaults(func=cmd_run)

    pfs = sub.add_parser("pfs", help="protected file utilities")
    psub = pfs.add_subparsers(dest="pfs_cmd", required=True)
    p = psub.add_parser("inspect")
    p.add_argument("path")
    p = psub.add_parser("verify")
    p.add_argument("path")
    _add_key_flags(p)
    for name in ("encrypt", "decrypt"):
        p = psub.add_parser(name)
        p.add_argument("src")
        p.add_argument("dst")
        p.add_argument("--force", action="store_true")
        _add_key_flags(p)
        if name == "encrypt":
            p.add_argument("--variant", choices=[v.value for v in Variant],
                           default=Variant.OPTIMIZED.value)
    pfs.set_defaults(func=cmd_pfs)

    bn = sub.add_parser("bench", help="record-store micro-benchmarks")
    bsub = bn.add_subparsers(dest="bench_cmd", required=True)
    for name in ("insert", "seq-read", "rand-read", "profile"):
        p = bsub.add_parser(name)
        p.add_argument("--backend", choices=[b.value for b in B.Backend])
        p.add_argument("--max", type=int)
        p.add_argument("--start", type=int)
        p.add_argument("--step", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--draws", type=int)
        p.add_argument("--cache", type=int, help="node cache capacity")
        p.add_argument("--cost-profile")
        p.add_argument("--epc", type=_size)
        p.add_argument("--config", help="workload file with a [workload] section")
        p.add_argument("--out")
    bn.set_defaults(func=cmd_bench)
    return ap


_handler: logging.Handler | None = None


def _setup_logging(verbose: bool) -> None:
    global _handler
    if _handler is not None:
        log.removeHandler(_handler)
    _handler = logging.StreamHandler(sys.stderr)
    _handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(_handler)
    log.setLevel(logging.INFO if verbose else logging.WARNING)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except CliError as e:
        print(f"twinehost: {e}", file=sys.stderr)
        return EXIT_USAGE
    except B.DataCorruption as e:
        print(f"twinehost: {e}", file=sys.stderr)
        return EXIT_INTEGRITY
    except IntegrityError as e:
        print(f"twinehost: integrity failure at node {e.node_id}: {e.reason}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (PfsError, EngineError, OSError) as e:
        print(f"twinehost: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
