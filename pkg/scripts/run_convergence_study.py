#!/usr/bin/env python3
"""Replicated convergence experiment for the attribution estimator.

Runs generate-and-estimate replicates over a sample-size grid and prints
the per-n quartile summary; optionally writes the raw records to CSV.

Examples:
    python scripts/run_convergence_study.py
    python scripts/run_convergence_study.py --process mixture --J 10 --K 5 \
        --n-grid 100,300,1500 --replicates 20 --workers 4
    python scripts/run_convergence_study.py --n-grid 100,300,1500,10000,100000 \
        --search both --out records.csv
"""

import argparse
import csv
import sys

from apportion import StudyDesign, convergence_study, summarize_records


def parse_args(argv):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--process", choices=["ar1", "mixture"], default="ar1")
    parser.add_argument("--J", type=int, default=8)
    parser.add_argument("--K", type=int, default=3)
    parser.add_argument("--n-grid", default="100,300,1500,10000")
    parser.add_argument("--replicates", type=int, default=50)
    parser.add_argument(
        "--search", choices=["greedy", "exhaustive", "auto", "both"], default="greedy"
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", default=None, help="optional raw-record CSV path")
    return parser.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    design = StudyDesign(
        process=args.process,
        J=args.J,
        K=args.K,
        n_grid=tuple(int(v) for v in args.n_grid.split(",")),
        replicates=args.replicates,
        search=args.search,
        master_seed=args.seed,
    )
    records = convergence_study(design, workers=args.workers)
    failures = [r for r in records if r.error]

    header = f"{'n':>8} {'search':>10} {'nrmse med (IQR)':>24} {'nfd med (IQR)':>24}"
    print(header)
    print("-" * len(header))
    for row in summarize_records(records):
        nrmse_part = f"{row['nrmse_median']:.4f} ({row['nrmse_q1']:.4f}-{row['nrmse_q3']:.4f})"
        nfd_part = f"{row['nfd_median']:.4f} ({row['nfd_q1']:.4f}-{row['nfd_q3']:.4f})"
        print(f"{row['n']:>8} {row['search_used']:>10} {nrmse_part:>24} {nfd_part:>24}")
    if failures:
        print(f"{len(failures)} replicate(s) failed:", file=sys.stderr)
        for r in failures:
            print(f"  n={r.n} replicate={r.replicate}: {r.error}", file=sys.stderr)

    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["n", "replicate", "nrmse", "nfd", "runtime_seconds", "search_used"]
            )
            for r in records:
                if not r.error:
                    writer.writerow(
                        [r.n, r.replicate, r.nrmse, r.nfd, r.runtime_seconds, r.search_used]
                    )
        print(f"raw records written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
