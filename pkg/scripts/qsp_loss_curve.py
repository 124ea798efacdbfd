"""Optimized QSP sign-approximation loss against degree, for several gap widths delta."""

import argparse
from pathlib import Path

from shotbudget import bench


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--max-degree", type=int, default=24)
    ap.add_argument("--deltas", default="0,0.1,0.2")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("qsp_loss.csv"))
    args = ap.parse_args()

    deltas = [float(d) for d in args.deltas.split(",")]
    rows = bench.run_qsp_loss(range(1, args.max_degree + 1), deltas, args.seed)
    args.out.write_text(bench.qsp_loss_csv(rows))
    for d in deltas:
        sel = [r for r in rows if r.delta == d]
        print(f"delta={d}: log-linear slope over R>=11 {sel[0].slope_fit:+.4f}")
        print("  " + "  ".join(f"R{r.degree}={r.loss:.4f}" for r in sel))


if __name__ == "__main__":
    main()
