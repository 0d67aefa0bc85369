#!/usr/bin/env python3
"""Benchmark the four standard kernels on synthetic matrices.

Runs spmv, spmm, spgemm, and sddmm over a small sweep of synthetic inputs
and prints a table of mean execution time and operation counts. Pass
--json to also dump the raw records.

Example:
    python scripts/bench_kernels.py --size 1024 --nnz 2000 8000 --reps 5
"""

import argparse
import json

import numpy as np

import sparsetc as st
from sparsetc.cli import bench_kernel, synthetic_entries

KERNELS = ("spmv", "spmm", "spgemm", "sddmm")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=1024, help="square matrix dimension")
    ap.add_argument("--nnz", type=int, nargs="+", default=[1000, 4000, 16000])
    ap.add_argument("--k", type=int, default=16)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--warmup", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", metavar="PATH")
    args = ap.parse_args()

    records = []
    header = f"{'kernel':8} {'nnz':>8} {'mean ms':>10} {'std ms':>9} {'mults':>12} {'adds':>12}"
    print(header)
    print("-" * len(header))
    for kernel in KERNELS:
        fmt = st.coo(args.size, args.size) if kernel == "spgemm" else st.csr(args.size, args.size)
        for count in args.nnz:
            rng = np.random.default_rng(args.seed)
            entries = synthetic_entries(args.size, args.size, count, rng)
            A = st.build_from_entries(
                (args.size, args.size), fmt, entries, name=f"synth-{count}"
            )
            row = bench_kernel(kernel, A, args.k, args.reps, args.warmup, args.seed)
            row["kernel"] = kernel
            records.append(row)
            print(
                f"{kernel:8} {row['nnz']:>8} {row['mean_ns'] / 1e6:>10.3f}"
                f" {row['std_ns'] / 1e6:>9.3f} {row['counters']['scalar_mults']:>12}"
                f" {row['counters']['scalar_adds']:>12}"
            )
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(records, fh, indent=2)
        print(f"\nwrote {args.json}")


if __name__ == "__main__":
    main()
