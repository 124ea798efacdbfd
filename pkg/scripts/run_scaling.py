"""Scaling study over N: writes per-state records plus power-law fits and prints the headline exponents."""

import argparse
import logging
from pathlib import Path

from shotbudget import bench

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", type=Path, default=HERE / "configs" / "scaling_zsum.json")
    ap.add_argument("--out", type=Path, default=Path("scaling.csv"))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    config = bench.ScalingConfig.from_json(args.config)
    if args.workers > 1:
        import dataclasses

        config = dataclasses.replace(config, workers=args.workers)
    records = bench.run_scaling(config)
    labels = [s.name for s in config.decompositions]

    fits = [bench.fit(records, label) for label in labels + [bench.BASELINE]]
    ratios = []
    if "pauli" in labels and "xi" in labels:
        ratios.append(bench.fit(records, "pauli", over="xi"))
    if "xi" in labels:
        ratios.append(bench.fit(records, "xi", over=bench.BASELINE))
    bench.emit_csv(records + fits + ratios, args.out)

    print(f"{'N':>3} " + " ".join(f"{l:>12}" for l in labels + [bench.BASELINE]))
    means = {l: bench.mean_by_n(records, l) for l in labels + [bench.BASELINE]}
    for n in config.qubits:
        print(f"{n:>3} " + " ".join(f"{means[l][n]:>12.4f}" for l in labels + [bench.BASELINE]))
    for f in fits + ratios:
        print(f"{f.label:>20}  exponent {f.exponent:+.3f}  residual {f.residual:.2e}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
