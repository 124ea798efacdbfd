"""Command line entry point: ``shotbudget <experiment> ...``.

Exit codes: 0 success, 2 configuration error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import bench

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _int_list(text: str) -> list[int]:
    if "-" in text and "," not in text:
        lo, hi = text.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",") if t]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t]


def cmd_scaling(args) -> int:
    config = bench.ScalingConfig.from_json(args.config)
    if args.workers:
        config = dataclasses.replace(config, workers=args.workers)
    records = bench.run_scaling(config)
    items: list = list(records)
    labels = [s.name for s in config.decompositions] + [bench.BASELINE]
    if len(config.qubits) >= 4:
        for label in labels:
            items.append(bench.fit(records, label, args.fit))
        for label in labels[:-1]:
            items.append(bench.fit(records, label, args.fit, over="xi" if label != "xi" else bench.BASELINE))
    _write(bench.csv_text(items), args.out)
    low = bench.check_baseline(records)
    if low:
        for r in low[:10]:
            logging.error("below Von Neumann baseline: %s", r)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_qsp_loss(args) -> int:
    degrees = args.degrees or list(range(args.r_min, args.r_max + 1))
    if not degrees or min(degrees) < 1:
        raise bench.ConfigError("degrees must be >= 1")
    rows = bench.run_qsp_loss(degrees, args.delta, args.seed, args.restarts)
    _write(bench.qsp_loss_csv(rows), args.out)
    return EXIT_OK


def cmd_lemma_checks(args) -> int:
    results = bench.run_lemma_checks(args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT


def cmd_parallel_ev(args) -> int:
    rows = bench.run_parallel_ev(args.k_max, args.seed, args.cases, args.qubits)
    _write(bench.parallel_ev_csv(rows), args.out)
    by_case: dict[int, list] = {}
    for r in rows:
        by_case.setdefault(r.seed, []).append(r.variance)
    bad = [c for c, v in by_case.items() if any(b < a - 1e-12 for a, b in zip(v, v[1:]))]
    return EXIT_INVARIANT if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shotbudget", description="Shot-budget experiments for operator decompositions.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scaling", help="shot-variance scaling study over N")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--out", help="CSV path (stdout if omitted)")
    s.add_argument("--fit", default="power-law", choices=bench.FIT_MODELS)
    s.add_argument("--workers", type=int, default=0)
    s.set_defaults(func=cmd_scaling)

    q = sub.add_parser("qsp-loss", help="optimized QSP sign loss against degree")
    q.add_argument("--r-min", type=int, default=1)
    q.add_argument("--r-max", type=int, default=24)
    q.add_argument("--degrees", type=_int_list, help="explicit degrees, e.g. 5,10,20 (overrides the range)")
    q.add_argument("--delta", type=_float_list, default=[0.0], help="one or more comma-separated gap widths")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--restarts", type=int, default=5)
    q.add_argument("--out")
    q.set_defaults(func=cmd_qsp_loss)

    l = sub.add_parser("lemma-checks", help="numerical lemma and variance-bound suites")
    l.add_argument("--seed", type=int, default=0)
    l.set_defaults(func=cmd_lemma_checks)

    e = sub.add_parser("parallel-ev", help="variance of parallel echo verification against K")
    e.add_argument("--k-max", type=int, default=3)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--cases", type=int, default=10)
    e.add_argument("--qubits", type=int, default=3)
    e.add_argument("--out")
    e.set_defaults(func=cmd_parallel_ev)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except bench.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except bench.InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
