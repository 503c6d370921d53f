"""Random-read sweep over working-set size with a reduced EPC.

Prints per-op simulated cost for each working set and the ratio of medians
above and below the EPC limit.  Desk-scale default: 8 MiB EPC, 1-16k records.
The long profile (93 MiB EPC, 175k records) takes tens of minutes:

    python scripts/epc_knee.py --epc 93MiB --max 175000 --step 5000 --backend in_memory
"""
import argparse
import statistics

from twinehost import bench as B
from twinehost.sim import parse_size


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--backend", default="in_memory", choices=[b.value for b in B.Backend])
    ap.add_argument("--epc", default="8MiB")
    ap.add_argument("--max", type=int, default=16_000)
    ap.add_argument("--step", type=int, default=1000)
    ap.add_argument("--draws", type=int)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--cost-profile", default="paper")
    ap.add_argument("--csv", help="also write the raw samples here")
    args = ap.parse_args()

    limit = parse_size(args.epc)
    spec = B.WorkloadSpec(start_records=args.step, step=args.step, max_records=args.max,
                          seed=args.seed, backend=args.backend, cost_profile=args.cost_profile,
                          epc_limit=limit, draws=args.draws)
    samples = B.bench_rand_read(spec)
    per = B.per_op_ns(samples, draws=args.draws)
    print(f"{'records':>8} {'working set':>12} {'ns/op':>10}")
    for n, v in per.items():
        mark = "*" if n * B.SLOT_SIZE > limit else " "
        print(f"{n:>8} {n * B.SLOT_SIZE / 2**20:>10.2f}Mi{mark} {v:>10.0f}")
    below = [v for n, v in per.items() if n * B.SLOT_SIZE <= limit]
    above = [v for n, v in per.items() if n * B.SLOT_SIZE > limit]
    if below and above:
        print(f"median above / below EPC: {statistics.median(above) / statistics.median(below):.2f}x")
    if args.csv:
        B.emit_csv(samples, args.csv)


if __name__ == "__main__":
    main()
