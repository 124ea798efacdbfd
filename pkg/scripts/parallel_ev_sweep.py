"""Variance of one parallel echo-verified estimate as more commuting reflections join the batch."""

import argparse
from collections import defaultdict

import numpy as np

from shotbudget import bench


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--k-max", type=int, default=5)
    ap.add_argument("--cases", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rows = bench.run_parallel_ev(args.k_max, args.seed, args.cases)
    by_k = defaultdict(list)
    base = {r.seed: r.dominant for r in rows if r.k == 1}
    for r in rows:
        by_k[r.k].append((r.variance, r.variance_closed_form, r.dominant / base[r.seed]))
    print(" K   mean M*Var   closed form   dominant/K=1   2^(K-1)")
    for k, vals in sorted(by_k.items()):
        v = np.array(vals)
        print(f"{k:>2} {v[:, 0].mean():>12.4f} {v[:, 1].mean():>13.4f} {v[:, 2].mean():>14.4f} {2 ** (k - 1):>9}")


if __name__ == "__main__":
    main()
