"""Quantum signal processing (QSP) approximation of the sign function.

The block encoding is the 2x2 product

    Q(w) = e^{-iY pi/2} e^{-iX phi_R/2} prod_{r=1..R} [e^{-iZ w} e^{-iX phi_{R-r}/2}]

and S(w) = <0|Q(w)|0>. With antisymmetric phases (phi_r = -phi_{R-r}) S is
real and odd. A product of R signal layers e^{-iZ w} only contains the
frequencies R, R-2, ..., so for even R every S is antisymmetric about w = pi/2
and cannot follow sgn on (0, pi). The controlled evolution therefore feeds
the signal at half angle: for an eigenphase x in (-pi, pi) of (O - mu) t the
measured function is

    f(x) = Re S(x / 2),

which approximates sgn(x) for any R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

DEFAULT_RESTARTS = 5
STALL_WINDOW = 200
STALL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class QspPhases:
    """Phase sequence phi_0..phi_R obeying phi_r = -phi_{R-r}."""

    phases: np.ndarray
    delta: float = 0.0

    def __post_init__(self):
        ph = np.array(self.phases, dtype=float).reshape(-1)
        if ph.size < 2:
            raise ValueError("need at least two phases (R >= 1)")
        if np.max(np.abs(ph + ph[::-1])) > 1e-12:
            raise ValueError("phases violate phi_r = -phi_{R-r}")
        if not 0.0 <= self.delta < np.pi / 2:
            raise ValueError("delta must lie in [0, pi/2)")
        ph.setflags(write=False)
        object.__setattr__(self, "phases", ph)

    @property
    def degree(self) -> int:
        return self.phases.size - 1

    @classmethod
    def from_free(cls, free, degree: int, delta: float = 0.0) -> "QspPhases":
        return cls(expand_phases(free, degree), delta)

    @property
    def free(self) -> np.ndarray:
        return self.phases[: n_free(self.degree)].copy()


@dataclass(frozen=True, eq=False)
class SignApproximation:
    phases: QspPhases
    loss: float
    max_error: float
    converged: bool
    restart_losses: tuple = ()

    def __call__(self, x):
        return sign_approximant(self.phases, x)


def n_free(degree: int) -> int:
    """Number of independent phases; for even R the middle phase is pinned to 0."""
    return (degree + 1) // 2


def expand_phases(free, degree: int) -> np.ndarray:
    free = np.asarray(free, dtype=float)
    if free.size != n_free(degree):
        raise ValueError(f"degree {degree} takes {n_free(degree)} free phases, got {free.size}")
    ph = np.zeros(degree + 1)
    k = free.size
    ph[:k] = free
    ph[degree - k + 1 :] = -free[::-1]
    return ph


def _phase_array(phases) -> np.ndarray:
    if isinstance(phases, QspPhases):
        return phases.phases
    return np.asarray(phases, dtype=float)


def q_matrix(phases, w) -> np.ndarray:
    """Q(w) for each w, shape (..., 2, 2)."""
    ph = _phase_array(phases)
    w = np.asarray(w, dtype=float)
    cols = []
    for start in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
        a = np.full(w.shape, start[0], dtype=complex)
        b = np.full(w.shape, start[1], dtype=complex)
        a, b = _propagate(ph, w, a, b)
        cols.append(np.stack([a, b], axis=-1))
    return np.stack(cols, axis=-1)


def _propagate(ph, w, a, b):
    def rx(a, b, angle):
        c, s = math.cos(angle / 2), math.sin(angle / 2)
        return c * a - 1j * s * b, -1j * s * a + c * b

    a, b = rx(a, b, ph[0])
    ez = np.exp(-1j * w)
    for r in range(1, ph.size):
        a, b = a * ez, b * ez.conj()
        a, b = rx(a, b, ph[r])
    # -iY = [[0, -1], [1, 0]]
    return -b, a


def s_phi(phases, w):
    """Block element S(w) = <0|Q(w)|0>."""
    w = np.asarray(w, dtype=float)
    a, _ = _propagate(_phase_array(phases), w, np.ones(w.shape, complex), np.zeros(w.shape, complex))
    return a


def approximating_component(phases, w):
    """The real odd part of S(w); the imaginary part vanishes for antisymmetric phases."""
    return np.real(s_phi(phases, w))


def sign_approximant(phases, x):
    """f(x) = Re S(x/2), the function of (O - mu) t measured by the SGN terms."""
    return approximating_component(phases, np.asarray(x, dtype=float) / 2.0)


def loss_grid(degree: int, delta: float, grid_points: int | None = None) -> np.ndarray:
    if not 0.0 <= delta < np.pi / 2:
        raise ValueError("delta must lie in [0, pi/2)")
    if grid_points is None:
        grid_points = 50 * degree + 64
    if grid_points < 50 * degree:
        raise ValueError(f"grid_points must be >= 50*R = {50 * degree}")
    return np.linspace(delta, np.pi - delta, grid_points)


def qsp_loss(phases, delta: float = 0.0, grid_points: int | None = None, kind: str = "abs") -> float:
    """Mean deviation of f from sgn on a uniform grid over [delta, pi - delta]."""
    ph = _phase_array(phases)
    grid = loss_grid(ph.size - 1, delta, grid_points)
    err = np.sign(grid) - sign_approximant(ph, grid)
    if kind == "abs":
        return float(np.mean(np.abs(err)))
    if kind == "squared":
        return float(np.mean(err**2))
    raise ValueError(f"unknown loss kind {kind!r}")


def max_error(phases, delta: float = 0.0, grid_points: int | None = None) -> float:
    ph = _phase_array(phases)
    grid = loss_grid(ph.size - 1, delta, grid_points)
    return float(np.max(np.abs(np.sign(grid) - sign_approximant(ph, grid))))


class _Stall(Exception):
    pass


def _nelder_mead(fun, x0, max_iter: int):
    """Simplex descent stopped once the best value improves < STALL_TOL over STALL_WINDOW iterations."""
    history = []
    best = {"x": np.array(x0, float), "f": fun(x0)}

    def tracked(x):
        f = fun(x)
        if f < best["f"]:
            best["x"], best["f"] = np.array(x, float), f
        return f

    def callback(intermediate_result):
        history.append(best["f"])
        if len(history) > STALL_WINDOW and history[-STALL_WINDOW - 1] - history[-1] < STALL_TOL:
            raise StopIteration

    res = minimize(
        tracked,
        x0,
        method="Nelder-Mead",
        callback=callback,
        options={"maxiter": max_iter, "maxfev": 4 * max_iter, "xatol": 1e-12, "fatol": 1e-14, "adaptive": True},
    )
    stalled = len(history) > STALL_WINDOW and history[-STALL_WINDOW - 1] - history[-1] < STALL_TOL
    return best["x"], best["f"], bool(res.success or stalled)


def optimize_phases(
    degree: int,
    delta: float = 0.0,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    kind: str = "abs",
    grid_points: int | None = None,
    max_iter: int | None = None,
) -> SignApproximation:
    """Minimize the sign loss over the antisymmetric phases by seeded simplex restarts."""
    if degree < 1:
        raise ValueError("degree must be >= 1")
    grid = loss_grid(degree, delta, grid_points)
    target = np.sign(grid)
    nf = n_free(degree)
    if max_iter is None:
        max_iter = 4000 * nf

    def objective(free):
        err = target - sign_approximant(expand_phases(free, degree), grid)
        return float(np.mean(np.abs(err)) if kind == "abs" else np.mean(err**2))

    rng = np.random.default_rng(seed)
    results = []
    for _ in range(restarts):
        x0 = rng.uniform(-np.pi / 4, np.pi / 4, nf)
        results.append(_nelder_mead(objective, x0, max_iter))
    # lowest loss wins; ties resolved by restart order
    best = min(range(len(results)), key=lambda i: (results[i][1], i))
    x, f, _ = results[best]
    phases = QspPhases.from_free(x, degree, delta)
    return SignApproximation(
        phases=phases,
        loss=qsp_loss(phases, delta, grid_points, kind),
        max_error=max_error(phases, delta, grid_points),
        converged=results[best][2],
        restart_losses=tuple(r[1] for r in results),
    )


def loss_curve(degrees, delta: float = 0.0, seed: int = 0, **kwargs) -> list[SignApproximation]:
    return [optimize_phases(r, delta, seed, **kwargs) for r in degrees]


def fit_log_linear(degrees, losses, min_degree: int = 11) -> tuple[float, float]:
    """Least-squares fit log(loss) = slope * R + intercept over R >= min_degree."""
    r = np.asarray(degrees, dtype=float)
    y = np.log(np.asarray(losses, dtype=float))
    mask = r >= min_degree
    if mask.sum() < 2:
        raise ValueError("need at least two degrees in the fit window")
    slope, intercept = np.polyfit(r[mask], y[mask], 1)
    return float(slope), float(intercept)
