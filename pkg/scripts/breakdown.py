"""Bucket breakdown of a cold random-read pass, baseline vs optimized.

Simulated shares come from the cost model; wall shares split measured time
into untrusted host I/O and everything inside the enclave boundary.
"""
import argparse
import json

from twinehost import bench as B


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--records", type=int, default=16_000)
    ap.add_argument("--draws", type=int)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--cost-profile", default="paper")
    ap.add_argument("--json", action="store_true", help="dump both breakdowns as JSON")
    args = ap.parse_args()

    results = {}
    for backend in (B.Backend.PROTECTED_BASELINE, B.Backend.PROTECTED_OPTIMIZED):
        spec = B.WorkloadSpec(start_records=args.records, max_records=args.records, seed=args.seed,
                              backend=backend, cost_profile=args.cost_profile, draws=args.draws)
        results[backend.value] = B.bench_profile(spec)
    if args.json:
        print(json.dumps({k: v.to_dict() for k, v in results.items()}, indent=2))
        return
    print(f"{'bucket':<16}" + "".join(f"{k:>22}" for k in results))
    for bucket in B.PROFILE_BUCKETS:
        print(f"{bucket:<16}" + "".join(f"{r.shares[bucket] * 100:>21.1f}%" for r in results.values()))
    totals = [sum(r.simulated_ns.values()) / r.draws for r in results.values()]
    print(f"{'ns per read':<16}" + "".join(f"{t:>22.0f}" for t in totals))
    print(f"baseline / optimized: {totals[0] / totals[1]:.2f}x")


if __name__ == "__main__":
    main()
