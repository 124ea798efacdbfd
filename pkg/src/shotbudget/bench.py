"""Experiment harness: scaling study, QSP loss curves, lemma checks and the
parallel echo-verification sweep. Results go to flat CSV files."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import alloc, ansatz, decomp, qcore, qsp
from .measure import ev_statistics, ht_variance, parallel_ev_estimate_and_variance, parallel_ev_probabilities

log = logging.getLogger(__name__)

CSV_COLUMNS = ("experiment", "N", "decomposition", "seed", "value")
BASELINE = "von-neumann"
DECOMPOSITIONS = ("pauli", "xi", "gpsk", "sgn")
FIT_MODELS = ("power-law", "exponential", "exp-quadratic")
N_RANGE = (2, 13)


class ConfigError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentRecord:
    experiment: str
    N: int
    decomposition: str
    seed: int
    value: float
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"shot-variance must be non-negative, got {self.value}")

    def row(self) -> tuple:
        return (self.experiment, self.N, self.decomposition, self.seed, repr(float(self.value)))


@dataclass(frozen=True)
class FitResult:
    model: str
    parameters: dict
    residual: float
    label: str = ""
    n_points: int = 0

    def __post_init__(self):
        if self.residual < 0:
            raise ValueError("fit residual must be non-negative")

    @property
    def exponent(self) -> float:
        return self.parameters["exponent"]

    def rows(self) -> list[tuple]:
        return [
            (f"fit:{self.model}:{name}", self.n_points, self.label, "", repr(float(v)))
            for name, v in list(self.parameters.items()) + [("residual", self.residual)]
        ]


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class DecompositionSpec:
    name: str
    degree: int = 20
    delta: float = 0.0
    t_rule: str = "fit"
    t_margin: float = decomp.SGN_T_MARGIN
    restarts: int = qsp.DEFAULT_RESTARTS
    phase_seed: int = 0

    @classmethod
    def parse(cls, item) -> "DecompositionSpec":
        if isinstance(item, str):
            item = {"name": item}
        if not isinstance(item, dict) or "name" not in item:
            raise ConfigError(f"bad decomposition entry {item!r}")
        unknown = set(item) - {"name", "R", "delta", "t_rule", "t_margin", "restarts", "phase_seed"}
        if unknown:
            raise ConfigError(f"unknown decomposition keys {sorted(unknown)}")
        if item["name"] not in DECOMPOSITIONS:
            raise ConfigError(f"unknown decomposition {item['name']!r}; choose from {DECOMPOSITIONS}")
        spec = cls(
            item["name"],
            int(item.get("R", 20)),
            float(item.get("delta", 0.0)),
            str(item.get("t_rule", "fit")),
            float(item.get("t_margin", decomp.SGN_T_MARGIN)),
            int(item.get("restarts", qsp.DEFAULT_RESTARTS)),
            int(item.get("phase_seed", 0)),
        )
        if spec.degree < 1 or not 0 <= spec.delta < np.pi / 2 or spec.t_rule not in ("fit", "margin"):
            raise ConfigError(f"bad parameters for {spec.name}: {item!r}")
        return spec


@dataclass(frozen=True)
class ScalingConfig:
    operator: str = "z-sum"
    qubits: tuple = tuple(range(4, 12))
    decompositions: tuple = ("pauli", "xi", "gpsk", "sgn")
    n_states: int = 100
    layers: int = ansatz.DEFAULT_LAYERS
    seed: int = 0
    prior_shots: int = alloc.DEFAULT_PRIOR_SHOTS
    floor_fraction: float = alloc.DEFAULT_FLOOR_FRACTION
    exact_expectations: bool = False
    workers: int = 1

    def __post_init__(self):
        qs = tuple(int(n) for n in self.qubits)
        if not qs:
            raise ConfigError("qubits must be non-empty")
        if any(not N_RANGE[0] <= n <= N_RANGE[1] for n in qs):
            raise ConfigError(f"qubit counts must lie in {list(N_RANGE)}")
        object.__setattr__(self, "qubits", qs)
        specs = tuple(d if isinstance(d, DecompositionSpec) else DecompositionSpec.parse(d) for d in self.decompositions)
        if not specs:
            raise ConfigError("decompositions must be non-empty")
        object.__setattr__(self, "decompositions", specs)
        try:
            qcore.operator_family(self.operator)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.n_states < 1 or self.layers < 1 or self.workers < 1:
            raise ConfigError("n_states, layers and workers must be >= 1")
        if self.prior_shots < alloc.MIN_PRIOR_PER_TERM:
            raise ConfigError("prior_shots too small")
        if not 0 < self.floor_fraction <= 0.01:
            raise ConfigError("floor_fraction must lie in (0, 0.01]")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, raw: dict) -> "ScalingConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        raw = dict(raw)
        q = raw.get("qubits")
        if isinstance(q, dict):
            raw["qubits"] = tuple(range(int(q["min"]), int(q["max"]) + 1))
        try:
            return cls(**raw)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ScalingConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)


# ---------------------------------------------------------------------------
# scaling study


@lru_cache(maxsize=None)
def _phases(degree: int, delta: float, seed: int, restarts: int) -> qsp.SignApproximation:
    return qsp.optimize_phases(degree, delta, seed=seed, restarts=restarts)


def build_decomposition(spec: DecompositionSpec, target: qcore.HermitianOperator, n: int) -> decomp.Decomposition:
    if spec.name == "pauli":
        if not target.is_diagonal:
            raise ConfigError("pauli decomposition needs a weighted-Z target")
        weights = [float(np.dot(target.diagonal, qcore.z_diagonal(n, j))) / target.dim for j in range(n)]
        dec = decomp.pauli_decomposition(weights, n)
        if dec.residual > decomp.RECONSTRUCTION_RTOL * max(1.0, target.norm):
            raise ConfigError("target is not a weighted-Z sum")
        return dec
    if spec.name == "xi":
        return decomp.xi_decomposition(target)
    if spec.name == "gpsk":
        return decomp.gpsk_decomposition(target)
    approx = _phases(spec.degree, spec.delta, spec.phase_seed, spec.restarts)
    return decomp.sgn_decomposition(target, approx, times=spec.t_rule, margin=spec.t_margin)


def _state_records(args) -> list[ExperimentRecord]:
    config, n, index, decs = args
    psi = ansatz.random_he_state(ansatz.AnsatzConfig(n, config.layers, config.seed), index)
    target = decs[0][1].target if decs else qcore.operator_family(config.operator)(n)
    out = []
    for label, dec in decs:
        t0 = time.perf_counter()
        value = alloc.adaptive_shot_variance(
            dec,
            psi,
            prior_shots=config.prior_shots,
            seed=_substream_seed(config.seed, n, index),
            exact_expectations=config.exact_expectations,
            floor_fraction=config.floor_fraction,
        )
        out.append(ExperimentRecord("scaling", n, label, index, value, time.perf_counter() - t0))
    t0 = time.perf_counter()
    vn = qcore.von_neumann_variance(target, psi)
    out.append(ExperimentRecord("scaling", n, BASELINE, index, vn, time.perf_counter() - t0))
    return out


def _substream_seed(seed: int, n: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, n, index]).generate_state(1, np.uint64)[0])


def run_scaling(config: ScalingConfig) -> list[ExperimentRecord]:
    """One record per (N, decomposition, state) plus a Von Neumann baseline per (N, state).

    Records come back in config order whatever the worker count.
    """
    records: list[ExperimentRecord] = []
    for n in config.qubits:
        target = qcore.operator_family(config.operator)(n)
        decs = [(s.name, build_decomposition(s, target, n)) for s in config.decompositions]
        jobs = [(config, n, i, decs) for i in range(config.n_states)]
        if config.workers > 1:
            with ProcessPoolExecutor(config.workers) as pool:
                chunks = list(pool.map(_state_records, jobs))
        else:
            chunks = [_state_records(j) for j in jobs]
        # group by decomposition so the CSV reads block-wise
        labels = [name for name, _ in decs] + [BASELINE]
        for label in labels:
            records.extend(r for chunk in chunks for r in chunk if r.decomposition == label)
        log.info("N=%d done (%d states)", n, config.n_states)
    return records


def check_baseline(records: Sequence[ExperimentRecord], atol: float = 1e-9, exempt=("sgn",)) -> list[ExperimentRecord]:
    """Records whose value falls below the Von Neumann baseline of the same (N, state)."""
    base = {(r.N, r.seed): r.value for r in records if r.decomposition == BASELINE}
    return [
        r
        for r in records
        if r.decomposition not in (BASELINE, *exempt) and r.value < base[(r.N, r.seed)] - atol
    ]


def mean_by_n(records: Iterable[ExperimentRecord], label: str) -> dict[int, float]:
    groups: dict[int, list[float]] = {}
    for r in records:
        if r.decomposition == label:
            groups.setdefault(r.N, []).append(r.value)
    return {n: float(np.mean(v)) for n, v in sorted(groups.items())}


# ---------------------------------------------------------------------------
# fits


def fit_series(ns, ys, model: str, label: str = "") -> FitResult:
    """Least squares in the model's linearizing coordinates (log y against log N, N or (N^2, N))."""
    n = np.asarray(ns, dtype=float)
    y = np.asarray(ys, dtype=float)
    if np.unique(n).size < 4:
        raise ValueError("need at least 4 distinct N values")
    if np.any(y <= 0):
        raise ValueError("fit values must be positive")
    if model == "power-law":
        design, names = np.column_stack([np.log(n), np.ones_like(n)]), ("exponent", "log_prefactor")
    elif model == "exponential":
        design, names = np.column_stack([n, np.ones_like(n)]), ("exponent", "offset")
    elif model == "exp-quadratic":
        design, names = np.column_stack([n * n, n, np.ones_like(n)]), ("quadratic", "exponent", "offset")
    else:
        raise ValueError(f"unknown fit model {model!r}; choose from {FIT_MODELS}")
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise np.linalg.LinAlgError("degenerate design matrix")
    coef, *_ = np.linalg.lstsq(design, np.log(y), rcond=None)
    resid = float(np.sum((design @ coef - np.log(y)) ** 2))
    return FitResult(model, dict(zip(names, map(float, coef))), resid, label, int(n.size))


def fit(records: Sequence[ExperimentRecord], label: str, model: str = "power-law", over: str | None = None) -> FitResult:
    """Fit the per-N mean of ``label`` (divided by the mean of ``over`` if given)."""
    num = mean_by_n(records, label)
    if over is None:
        return fit_series(list(num), list(num.values()), model, label)
    den = mean_by_n(records, over)
    ns = [n for n in num if n in den]
    return fit_series(ns, [num[n] / den[n] for n in ns], model, f"{label}/{over}")


# ---------------------------------------------------------------------------
# CSV


def _rows(items) -> list[tuple]:
    rows = []
    for item in items:
        if isinstance(item, ExperimentRecord):
            rows.append(item.row())
        elif isinstance(item, FitResult):
            rows.extend(item.rows())
        else:
            raise TypeError(f"cannot write {type(item).__name__} to CSV")
    return rows


def csv_text(items) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(_rows(items))
    return buf.getvalue()


def emit_csv(items, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(items))
    return path


def read_csv(path) -> list[ExperimentRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return [
            ExperimentRecord(r["experiment"], int(r["N"]), r["decomposition"], int(r["seed"]), float(r["value"]))
            for r in reader
            if not r["experiment"].startswith("fit:")
        ]


# ---------------------------------------------------------------------------
# QSP loss study


@dataclass(frozen=True)
class QspLossRow:
    degree: int
    delta: float
    loss: float
    slope_fit: float


def run_qsp_loss(degrees: Sequence[int], deltas: Sequence[float], seed: int = 0, restarts: int = qsp.DEFAULT_RESTARTS, min_fit_degree: int = 11) -> list[QspLossRow]:
    rows = []
    for delta in deltas:
        curve = qsp.loss_curve(degrees, delta, seed, restarts=restarts)
        losses = [a.loss for a in curve]
        try:
            slope, _ = qsp.fit_log_linear(degrees, losses, min_fit_degree)
        except ValueError:
            slope = float("nan")
        rows.extend(QspLossRow(r, float(delta), l, slope) for r, l in zip(degrees, losses))
    return rows


def qsp_loss_csv(rows: Sequence[QspLossRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("R", "delta", "loss", "slope-fit"))
    w.writerows((r.degree, repr(r.delta), repr(r.loss), repr(r.slope_fit)) for r in rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# numerical checks on split cost and variance bounds


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    cases: int
    failures: int
    worst: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.cases - self.failures}/{self.cases} (worst {self.worst:.3e})"


def random_subunit_hermitian(n: int, rng: np.random.Generator, scale: tuple = (0.5, 1.0)) -> qcore.HermitianOperator:
    dim = 1 << n
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = a + a.conj().T
    h *= rng.uniform(*scale) / np.max(np.abs(np.linalg.eigvalsh(h)))
    return qcore.HermitianOperator.from_matrix(h)


def random_norm_preserving_split(n: int, rng: np.random.Generator):
    c = rng.uniform(0.2, 2.0, size=2)
    kids = [random_subunit_hermitian(n, rng) for _ in range(2)]
    parent_op = (c[0] * kids[0] + c[1] * kids[1]) / float(c.sum())
    parent = decomp.DecompositionTerm(float(c.sum()), parent_op)
    return parent, [decomp.DecompositionTerm(float(ci), k) for ci, k in zip(c, kids)]


def random_norm_increasing_split(n: int, rng: np.random.Generator):
    while True:
        c = float(rng.uniform(0.5, 2.0))
        parent_op = random_subunit_hermitian(n, rng)
        c0 = float(rng.uniform(0.2, 1.0) * c)
        a0 = random_subunit_hermitian(n, rng)
        rest = c * parent_op - c0 * a0
        c1 = float(np.max(np.abs(np.linalg.eigvalsh(rest.to_dense()))))
        if c0 + c1 > c * (1 + 1e-6):
            parent = decomp.DecompositionTerm(c, parent_op)
            return parent, [decomp.DecompositionTerm(c0, a0), decomp.DecompositionTerm(c1, rest / c1)]


def two_level_state(spec: qcore.Spectrum, rng: np.random.Generator, k: int = 2) -> qcore.QuantumState:
    levels = rng.choice(spec.n_levels, size=k, replace=False)
    w = rng.uniform(0.05, 1.0, size=k)
    return decomp.state_from_occupations(spec, dict(zip(levels.tolist(), w.tolist())), rng)


def check_saturation(seed: int, cases: int = 200, occupied: int = 2) -> CheckResult:
    """Xi cost against the Von Neumann bound on states occupying ``occupied`` eigenspaces of sum_j Z_j.

    Two occupations must saturate the bound (relative 1e-9); three must exceed it by > 1e-9.
    """
    rng = np.random.default_rng([seed, occupied])
    worst, fails = 0.0 if occupied == 2 else np.inf, 0
    for i in range(cases):
        n = int(rng.integers(2, 7)) if occupied == 2 else int(rng.integers(2, 7))
        target = qcore.weighted_z(np.ones(n))
        dec = decomp.xi_decomposition(target)
        psi = two_level_state(target.spectrum, rng, occupied)
        cost = alloc.adaptive_shot_variance(dec, psi, exact_expectations=True)
        vn = qcore.von_neumann_variance(target, psi)
        if occupied == 2:
            rel = abs(cost - vn) / max(vn, 1e-300)
            worst = max(worst, rel)
            fails += rel > 1e-9
        else:
            gap = cost - vn
            worst = min(worst, gap)
            fails += not gap > 1e-9
    name = "xi-saturates-two-level" if occupied == 2 else "xi-strict-three-level"
    return CheckResult(name, fails == 0, cases, int(fails), float(worst))


def random_reflection_set(n: int, k: int, rng: np.random.Generator) -> list[qcore.HermitianOperator]:
    """K commuting reflections V D_k V^dagger sharing a random eigenbasis V."""
    dim = 1 << n
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    v, r = np.linalg.qr(z)
    v = v * (np.diag(r) / np.abs(np.diag(r)))
    out = []
    for _ in range(k):
        d = rng.choice([-1.0, 1.0], size=dim)
        out.append(qcore.HermitianOperator(n, matrix=(v * d) @ v.conj().T))
    return out


def random_sandwich_case(rng: np.random.Generator):
    """A random Re(U) (sub-unit Hermitian or reflection) and a Haar state."""
    n = int(rng.integers(1, 4))
    if rng.random() < 0.5:
        op = random_subunit_hermitian(n, rng, (0.05, 1.0))
    else:
        op = random_reflection_set(n, 1, rng)[0]
    return op, qcore.QuantumState.random(n, rng)


def check_sandwich(seed: int, cases: int = 500, tol: float = 1e-10) -> CheckResult:
    """Var*/2 <= Var_EV <= Var* for single-shot HT and EV estimators."""
    rng = np.random.default_rng([seed, 3])
    worst, fails = np.inf, 0
    for _ in range(cases):
        op, psi = random_sandwich_case(rng)
        ht = ht_variance(op, psi, 1)
        ev = ev_statistics(op, psi, 1).variance
        margin = min(ev - ht / 2, ht - ev)
        worst = min(worst, margin)
        fails += margin < -tol
    return CheckResult("ev-variance-sandwich", fails == 0, cases, int(fails), float(worst))


def check_split_cost(seed: int, splits: int = 50, states: int = 20) -> CheckResult:
    """Norm-preserving splits never increase cost."""
    rng = np.random.default_rng([seed, 1])
    worst, fails, total = -np.inf, 0, 0
    for _ in range(splits):
        n = int(rng.integers(1, 4))
        parent, kids = random_norm_preserving_split(n, rng)
        report = decomp.validate_norm_preserving_split(parent, kids)
        if report.classification != "preserving":
            raise InvariantViolation("constructed split is not norm-preserving")
        for _ in range(states):
            psi = qcore.QuantumState.random(n, rng)
            excess = report.children_cost(psi) - report.parent_cost(psi)
            worst = max(worst, excess)
            fails += excess > 1e-12
            total += 1
    return CheckResult("split-cost", fails == 0, total, int(fails), float(worst))


def check_increasing_split(seed: int, splits: int = 20) -> CheckResult:
    """Every strictly norm-increasing split loses to the centred parent on some witness state."""
    rng = np.random.default_rng([seed, 2])
    fails, best_gap = 0, np.inf
    for _ in range(splits):
        n = int(rng.integers(1, 4))
        parent, kids = random_norm_increasing_split(n, rng)
        report = decomp.validate_norm_preserving_split(parent, kids)
        w = decomp.increasing_split_witness(parent, kids) if report.classification == "increasing" else None
        if w is None:
            fails += 1
        else:
            best_gap = min(best_gap, w[2] - w[1])
    return CheckResult("increasing-split-witness", fails == 0, splits, int(fails), float(best_gap))


def run_lemma_checks(seed: int = 0) -> list[CheckResult]:
    return [
        check_saturation(seed, occupied=2),
        check_saturation(seed, occupied=3),
        check_sandwich(seed),
        check_split_cost(seed),
        check_increasing_split(seed),
    ]


# ---------------------------------------------------------------------------
# parallel EV


@dataclass(frozen=True)
class ParallelEvRow:
    seed: int
    k: int
    variance: float
    variance_closed_form: float
    dominant: float


def run_parallel_ev(k_max: int = 3, seed: int = 0, cases: int = 10, n_qubits: int = 3) -> list[ParallelEvRow]:
    """M Var of the U_0 estimate as reflections U_1..U_{K-1} are measured alongside it."""
    if not 1 <= k_max <= 10:
        raise ValueError("k_max must lie in [1, 10]")
    rows = []
    for case in range(cases):
        rng = np.random.default_rng([seed, case])
        refl = random_reflection_set(n_qubits, k_max, rng)
        psi = qcore.QuantumState.random(n_qubits, rng)
        u0 = qcore.expectation(refl[0], psi)
        for k in range(1, k_max + 1):
            table = parallel_ev_probabilities(refl[:k], psi)
            est = parallel_ev_estimate_and_variance(table, 0, 1)
            rows.append(ParallelEvRow(case, k, est.variance, est.variance_closed_form, est.variance + u0 * u0))
    return rows


def parallel_ev_csv(rows: Sequence[ParallelEvRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(("parallel-ev", r.k, "variance", r.seed, repr(r.variance)))
        w.writerow(("parallel-ev", r.k, "variance-closed-form", r.seed, repr(r.variance_closed_form)))
    return buf.getvalue()
