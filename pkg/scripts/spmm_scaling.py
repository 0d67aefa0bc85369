#!/usr/bin/env python3
"""Sparse-dense matrix multiply scaling study.

Sweeps the nonzero count of a fixed-size sparse operand and fits the
log-log slope of mean execution time against nnz. Near-linear scaling
(slope about 1) is the expected signature of the row-wise kernel: work is
proportional to stored entries times dense columns, never to the dense
iteration space.
"""

import argparse
import time

import numpy as np

import sparsetc as st
from sparsetc.cli import synthetic_entries


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=2048)
    ap.add_argument("--k", type=int, default=32)
    ap.add_argument("--nnz", type=int, nargs="+", default=[10_000, 40_000, 160_000])
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tile-size", type=int, default=64)
    args = ap.parse_args()

    n = args.size
    means = []
    print(f"{'nnz':>9} {'mean ms':>10} {'mults':>12}  loop order")
    for count in args.nnz:
        rng = np.random.default_rng(args.seed)
        A = st.build_from_entries(
            (n, n), st.csr(n, n), synthetic_entries(n, n, count, rng), name="A"
        )
        B = st.from_dense(np.random.default_rng(args.seed + 1).uniform(-1, 1, (n, args.k)), name="B")
        e = st.parse("C(i,k) = A(i,j) * B(j,k)", {"A": A, "B": B})
        sched = st.tile(e, st.schedule(e), args.tile_size)
        st.execute(sched)  # warmup
        times = []
        counter = None
        for _ in range(args.reps):
            t0 = time.perf_counter_ns()
            _, counter = st.execute(sched)
            times.append(time.perf_counter_ns() - t0)
        mean = float(np.mean(times))
        means.append(mean)
        order = ",".join(v.name for v in sched.loop_order)
        print(f"{count:>9} {mean / 1e6:>10.2f} {counter.scalar_mults:>12}  [{order}]")

    slope = float(np.polyfit(np.log(args.nnz), np.log(means), 1)[0])
    print(f"\nlog-log slope of time vs nnz: {slope:.3f}")


if __name__ == "__main__":
    main()
