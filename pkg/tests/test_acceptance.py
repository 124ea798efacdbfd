"""Acceptance criteria 1-10, each at its stated tolerance and runtime budget."""

import time

import numpy as np
import pytest
from scipy import stats

from shotbudget import bench, decomp, measure, qcore, qsp
from shotbudget.bench import ScalingConfig
from shotbudget.qcore import QuantumState


@pytest.fixture(scope="module")
def scaling():
    t0 = time.perf_counter()
    cfg = ScalingConfig(qubits=tuple(range(4, 12)), decompositions=("pauli", "xi", "gpsk"), n_states=100, seed=0)
    return bench.run_scaling(cfg), time.perf_counter() - t0


@pytest.fixture(scope="module")
def sgn_study():
    t0 = time.perf_counter()
    cfg = ScalingConfig(qubits=tuple(range(2, 11)), decompositions=("xi", {"name": "sgn", "R": 20, "delta": 0.0}), n_states=100, seed=0)
    records = bench.run_scaling(cfg)
    return records, time.perf_counter() - t0


def test_criterion_01_two_level_saturation(acceptance):
    t0 = time.perf_counter()
    r = bench.check_saturation(seed=0, cases=200, occupied=2)
    dt = time.perf_counter() - t0
    ok = r.passed and dt < 10
    acceptance(1, ok, f"Xi = Von Neumann on 200 two-level states, worst rel {r.worst:.2e} (tol 1e-9), {dt:.1f}s")
    assert ok


def test_criterion_02_three_level_strict(acceptance):
    t0 = time.perf_counter()
    r = bench.check_saturation(seed=0, cases=200, occupied=3)
    dt = time.perf_counter() - t0
    ok = r.passed and dt < 10
    acceptance(2, ok, f"Xi > Von Neumann on 200 three-level states, smallest gap {r.worst:.3e} (> 1e-9), {dt:.1f}s")
    assert ok


def test_criterion_03_ev_sandwich(acceptance):
    t0 = time.perf_counter()
    r = bench.check_sandwich(seed=0, cases=500, tol=1e-10)
    dt = time.perf_counter() - t0
    ok = r.passed and dt < 30
    acceptance(3, ok, f"Var*/2 <= Var_EV <= Var* on 500 pairs, {r.failures} violations, min margin {r.worst:.2e}, {dt:.1f}s")
    assert ok


def test_criterion_04_split_cost(acceptance):
    t0 = time.perf_counter()
    r = bench.check_split_cost(seed=0, splits=50, states=20)
    dt = time.perf_counter() - t0
    ok = r.passed and r.cases == 1000 and dt < 30
    acceptance(4, ok, f"50 norm-preserving splits x 20 states, {r.failures} cost increases (max excess {r.worst:.2e}), {dt:.1f}s")
    assert ok


def test_criterion_05_scaling_exponents(scaling, acceptance):
    records, dt = scaling
    ratio = bench.fit(records, "pauli", over="xi").exponent
    xi_vn = bench.fit(records, "xi", over=bench.BASELINE).exponent
    gpsk, xi = bench.mean_by_n(records, "gpsk"), bench.mean_by_n(records, "xi")
    gpsk_worse = all(gpsk[n] > xi[n] for n in xi)
    ok = abs(ratio - 0.7) <= 0.25 and abs(xi_vn - 0.33) <= 0.2 and gpsk_worse
    acceptance(
        5,
        ok,
        f"pauli/xi exponent {ratio:.3f} (0.7+-0.25), xi/VN exponent {xi_vn:.3f} (0.33+-0.2), "
        f"gpsk > xi at every N: {gpsk_worse}, {dt:.1f}s",
    )
    assert ok


def test_criterion_06_qsp_convergence(qsp_curve, acceptance):
    t0 = time.perf_counter()
    curve = qsp_curve(0.0)
    dt = time.perf_counter() - t0
    degrees = list(range(12, 25))
    losses = [curve[r] for r in degrees]
    slope, _ = qsp.fit_log_linear(degrees, losses, min_degree=12)
    ratio = curve[24] / curve[12]
    ok = slope < 0 and curve[24] < curve[12] / 5 and dt < 300
    acceptance(6, ok, f"slope {slope:.4f} (< 0), loss(24)/loss(12) = {ratio:.3f} (needs < 0.2), {dt:.0f}s")
    assert slope < 0
    assert curve[24] < curve[12] / 5


def test_criterion_07_sgn_fidelity(sgn_study, acceptance):
    records, dt = sgn_study
    approx = bench._phases(20, 0.0, 0, qsp.DEFAULT_RESTARTS)
    xi, sgn = bench.mean_by_n(records, "xi"), bench.mean_by_n(records, "sgn")
    var_ok = all(sgn[n] <= 2 * xi[n] and xi[n] <= 2 * sgn[n] for n in xi)
    bias = {}
    for n in xi:
        target = qcore.operator_family("z-sum")(n)
        dec = decomp.sgn_decomposition(target, approx)
        bias[n] = (dec.residual, approx.loss * n)  # ||sum_j Z_j||_1 = n
    bias_bad = [n for n, (res, bound) in bias.items() if not res < bound]
    ok = var_ok and not bias_bad and dt < 600
    worst = max(sgn[n] / xi[n] for n in xi)
    acceptance(
        7,
        ok,
        f"sgn/xi mean ratio <= {worst:.3f} (<= 2), bias above loss*||O||_1 at N = {bias_bad or 'none'}, {dt:.1f}s",
    )
    assert var_ok
    assert not bias_bad, {n: bias[n] for n in bias_bad}


def test_criterion_08_parallel_ev(acceptance):
    t0 = time.perf_counter()
    rows = bench.run_parallel_ev(k_max=3, seed=0, cases=20, n_qubits=3)
    dt = time.perf_counter() - t0
    by_case = {}
    for r in rows:
        by_case.setdefault(r.seed, {})[r.k] = r
    monotone = all(c[1].variance <= c[2].variance + 1e-12 <= c[3].variance + 2e-12 for c in by_case.values())
    scale_err = max(abs(c[k].dominant / c[1].dominant / 2 ** (k - 1) - 1) for c in by_case.values() for k in (2, 3))
    ok = monotone and scale_err <= 0.2 and dt < 30
    acceptance(8, ok, f"variance non-decreasing in K: {monotone}, dominant-term 2^(K-1) deviation {scale_err:.2e} (<= 0.2), {dt:.1f}s")
    assert ok


def test_criterion_09_gpsk_identity(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    worst = 0.0
    for kind, n in (("linear-z", 4), ("z-sum", 5)):
        target = qcore.operator_family(kind)(n)
        dec = decomp.gpsk_decomposition(target)
        for _ in range(50):
            psi = QuantumState.random(n, rng)
            worst = max(worst, abs(dec.estimate(dec.expectations(psi)) - qcore.expectation(target, psi)))
    dt = time.perf_counter() - t0
    ok = worst < 1e-8 and dt < 10
    acceptance(9, ok, f"sum_l c_l <sin(O t_l)> = <O> on 2 x 50 states, worst {worst:.2e} (< 1e-8), {dt:.1f}s")
    assert ok


def test_criterion_10_sampler_calibration(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    pvals = []
    for case in range(20):
        op, psi = bench.random_sandwich_case(rng)
        m = 100_000
        ht = measure.ht_sample(op, psi, m, seed=case)
        p = np.array(measure.ht_probabilities(op, psi))
        keep = p > 0
        obs = np.array([ht.counts[1], ht.counts[-1]])
        if keep.sum() > 1:
            pvals.append(stats.chisquare(obs[keep], p[keep] * m).pvalue)
        ev = measure.ev_sample(op, psi, m, seed=1000 + case)
        s = measure.ev_statistics(op, psi, 1)
        q = np.array([s.p_plus, s.p_minus, s.p_zero])
        keep = q > 1e-15
        obs = np.array([ev.counts[1], ev.counts[-1], ev.counts[0]])
        if keep.sum() > 1:
            pvals.append(stats.chisquare(obs[keep], q[keep] / q[keep].sum() * m).pvalue)
    dt = time.perf_counter() - t0
    ok = min(pvals) > 1e-4 and dt < 30
    acceptance(10, ok, f"chi^2 on 20 HT + 20 EV cases at 1e5 shots, min p-value {min(pvals):.3e} (> 1e-4), {dt:.1f}s")
    assert ok
