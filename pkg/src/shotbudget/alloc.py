"""Shot allocation across decomposition terms.

The optimal split of M shots gives term x the fraction r_x proportional to
c_x sqrt(1 - <Re U_x>^2). The adaptive pipeline estimates the expectations
from a prior batch of Hadamard-test shots (split proportionally to c_x),
derives the ratios, and reports the shot-count independent product

    M Var* = sum_x c_x^2 (1 - <Re U_x>^2) / r_x.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .decomp import MONTE_CARLO, Decomposition

log = logging.getLogger(__name__)

CLIP = 1e-9
DEFAULT_PRIOR_SHOTS = 100_000
DEFAULT_FLOOR_FRACTION = 1e-4
MIN_PRIOR_PER_TERM = 10


@dataclass(frozen=True, eq=False)
class AllocationPlan:
    ratios: np.ndarray
    total_shots: int
    shots: np.ndarray
    zero_weight: np.ndarray
    zero_variance: bool = False

    def __post_init__(self):
        if abs(float(np.sum(self.ratios)) - 1.0) > 1e-12:
            raise ValueError("allocation ratios must sum to 1")
        if np.any(self.ratios <= 0):
            raise ValueError("allocation ratios must be positive")
        if int(np.sum(self.shots)) != self.total_shots:
            raise ValueError("per-term shots must sum to the total")


def clip_expectations(expectations) -> np.ndarray:
    e = np.asarray(expectations, dtype=float)
    if np.any(np.abs(e) > 1.0 + 1e-12):
        log.warning("estimated expectation outside [-1, 1]; clipping")
    return np.clip(e, -1.0 + CLIP, 1.0 - CLIP)


def largest_remainder(ratios, total: int) -> np.ndarray:
    """Integer apportionment of ``total`` by ``ratios`` with sum exactly ``total``."""
    raw = np.asarray(ratios, dtype=float) * total
    base = np.floor(raw).astype(np.int64)
    rest = total - int(base.sum())
    if rest > 0:
        # stable sort keeps ties in term order
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:rest]] += 1
    return base


def _zero_weight(coefficients, expectations) -> tuple[np.ndarray, np.ndarray]:
    c = np.asarray(coefficients, dtype=float)
    e = np.asarray(expectations, dtype=float)
    zero = np.abs(e) >= 1.0 - CLIP
    e = clip_expectations(e)
    w = np.where(zero, 0.0, c * np.sqrt(1.0 - e * e))
    return w, zero


def optimal_allocation(coefficients, expectations, total_shots: int, floor_fraction: float = DEFAULT_FLOOR_FRACTION) -> AllocationPlan:
    """Ratios r_x proportional to c_x sqrt(1 - e_x^2).

    Terms with |e_x| >= 1 - 1e-9 have zero weight and receive the floor:
    ratio ``floor_fraction`` and max(1, floor(M * floor_fraction)) shots.
    """
    c = np.asarray(coefficients, dtype=float)
    n = c.size
    if n == 0:
        raise ValueError("no terms to allocate")
    if not 0 < floor_fraction <= 0.01:
        raise ValueError("floor_fraction must lie in (0, 0.01]")
    w, zero = _zero_weight(c, expectations)
    active = ~zero
    if total_shots < max(1, int(active.sum())) or total_shots < n:
        raise ValueError(f"need at least {n} shots for {n} terms")
    if not active.any():
        ratios = np.full(n, 1.0 / n)
        return AllocationPlan(ratios, total_shots, largest_remainder(ratios, total_shots), zero, zero_variance=True)
    ratios = np.where(zero, floor_fraction, 0.0)
    ratios[active] = (1.0 - ratios.sum()) * w[active] / w[active].sum()
    ratios = ratios / ratios.sum()
    floor_shots = max(1, int(math.floor(total_shots * floor_fraction)))
    shots = np.zeros(n, dtype=np.int64)
    shots[zero] = floor_shots
    remaining = total_shots - int(shots.sum())
    if remaining < active.sum():
        raise ValueError("too few shots after the zero-weight floor")
    share = w[active] / w[active].sum()
    active_shots = largest_remainder(share, remaining)
    # every active term is measured at least once
    while np.any(active_shots < 1):
        i, j = int(np.argmin(active_shots)), int(np.argmax(active_shots))
        active_shots[i] += 1
        active_shots[j] -= 1
    shots[active] = active_shots
    return AllocationPlan(ratios, total_shots, shots, zero)


def prior_allocation(coefficients, prior_shots: int) -> np.ndarray:
    """Split the prior budget proportionally to c_x with at least 10 shots per term."""
    c = np.asarray(coefficients, dtype=float)
    if prior_shots < MIN_PRIOR_PER_TERM * c.size:
        raise ValueError(f"prior_shots must be >= {MIN_PRIOR_PER_TERM} per term")
    shots = largest_remainder(c / c.sum(), prior_shots)
    while np.any(shots < MIN_PRIOR_PER_TERM):
        i, j = int(np.argmin(shots)), int(np.argmax(shots))
        shots[i] += 1
        shots[j] -= 1
    return shots


def sample_expectations(dec: Decomposition, psi, prior_shots: int, seed: int, exact=None) -> np.ndarray:
    """HT estimates of every <Re U_x>, term x drawn from substream (seed, x)."""
    if exact is None:
        exact = dec.expectations(psi)
    shots = prior_allocation(dec.coefficients, prior_shots)
    est = np.empty(len(dec.terms))
    for x, (e, m) in enumerate(zip(exact, shots)):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, x])))
        k = rng.binomial(int(m), 0.5 * (1.0 + min(1.0, max(-1.0, e))))
        est[x] = 2.0 * k / m - 1.0
    return est


def shot_variance(coefficients, variance_expectations, ratios) -> float:
    """sum_x c_x^2 (1 - e_x^2) / r_x."""
    c = np.asarray(coefficients, dtype=float)
    e = np.asarray(variance_expectations, dtype=float)
    return float(np.sum(c * c * np.clip(1.0 - e * e, 0.0, None) / np.asarray(ratios, dtype=float)))


def adaptive_shot_variance(
    dec: Decomposition,
    psi,
    prior_shots: int = DEFAULT_PRIOR_SHOTS,
    seed: int = 0,
    exact_expectations: bool = False,
    floor_fraction: float = DEFAULT_FLOOR_FRACTION,
) -> float:
    """M Var* of ``dec`` on ``psi`` under the two-phase allocation.

    Ratios come from the prior estimates (or the exact values when
    ``exact_expectations``). Analytic terms are charged their exact variance,
    monte-carlo terms the variance implied by their estimate. A zero-weight
    term is charged at ratio ``floor_fraction`` without shrinking the other
    ratios; its charge vanishes when its estimate is right, so exact
    expectations reproduce [sum_x c_x sqrt(1 - e_x^2)]^2.
    """
    if len(dec.terms) == 0:
        return 0.0
    c = dec.coefficients
    exact = dec.expectations(psi)
    est = exact if exact_expectations else sample_expectations(dec, psi, prior_shots, seed, exact)
    w, zero = _zero_weight(c, est)
    if not (~zero).any():
        ratios = np.full(c.size, floor_fraction)
    else:
        ratios = np.where(zero, floor_fraction, w / w[~zero].sum())
    var_e = np.where(dec.sampled_mask, est, exact)
    return shot_variance(c, var_e, ratios)
