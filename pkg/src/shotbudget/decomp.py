"""Operator decompositions O = shift * 1 + sum_x c_x Re(U_x) and their costs.

Builders: Pauli (weighted-Z), Xi (cumulative eigenspace reflections), GPSK
(sine interpolation on a ladder spectrum) and SGN (QSP approximation of Xi).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import qsp
from .measure import MeasurableUnitaryPart, NORM_SLACK, as_re_u
from .qcore import HermitianOperator, QuantumState, Spectrum, _as_vector, expectation, von_neumann_variance, z_diagonal

RECONSTRUCTION_RTOL = 1e-8
REFLECTION_TOL = 1e-9
SGN_T_MARGIN = 0.05

ANALYTIC = "analytic"
MONTE_CARLO = "monte-carlo"


@dataclass(frozen=True, eq=False)
class DecompositionTerm:
    coefficient: float
    operator: MeasurableUnitaryPart
    sampling_mode: str = ANALYTIC
    label: str = ""

    def __post_init__(self):
        if not self.coefficient > 0:
            raise ValueError(f"term coefficient must be positive, got {self.coefficient}")
        if self.sampling_mode not in (ANALYTIC, MONTE_CARLO):
            raise ValueError(f"unknown sampling mode {self.sampling_mode!r}")
        object.__setattr__(self, "operator", as_re_u(self.operator))

    @property
    def re_u(self) -> HermitianOperator:
        return self.operator.re_u

    def expectation(self, psi) -> float:
        return expectation(self.re_u, psi)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """identity_shift * 1 + sum_x c_x Re(U_x).

    With ``check=True`` the terms must reconstruct ``target`` within
    1e-8 * ||target||; approximate decompositions (SGN) pass ``check=False``
    and record their ``residual``.
    """

    target: HermitianOperator
    identity_shift: float
    terms: tuple
    name: str = ""
    check: bool = True
    residual: float = field(default=np.nan)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        resid = self.reconstruction_residual()
        object.__setattr__(self, "residual", resid)
        if self.check and resid > RECONSTRUCTION_RTOL * max(1.0, self.target.norm):
            raise ValueError(f"decomposition does not reconstruct its target (residual {resid:.3e})")

    def __len__(self):
        return len(self.terms)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([t.coefficient for t in self.terms])

    @property
    def one_norm(self) -> float:
        return float(abs(self.identity_shift) + self.coefficients.sum())

    def reconstruct(self) -> HermitianOperator:
        op = HermitianOperator.identity(self.target.n_qubits, self.identity_shift)
        for t in self.terms:
            op = op + t.coefficient * t.re_u
        return op

    def reconstruction_residual(self) -> float:
        """Spectral norm of (reconstruction - target)."""
        diff = self.reconstruct() - self.target
        if diff.is_diagonal:
            return float(np.max(np.abs(diff.diagonal)))
        return float(np.linalg.norm(diff.to_dense(), 2))

    def expectations(self, psi) -> np.ndarray:
        return np.array([t.expectation(psi) for t in self.terms])

    def estimate(self, expectations) -> float:
        return float(self.identity_shift + np.dot(self.coefficients, expectations))

    @property
    def sampled_mask(self) -> np.ndarray:
        return np.array([t.sampling_mode == MONTE_CARLO for t in self.terms], dtype=bool)


def _weights(coefficients, expectations) -> np.ndarray:
    e = np.asarray(expectations, dtype=float)
    return np.asarray(coefficients, dtype=float) * np.sqrt(np.clip(1.0 - e * e, 0.0, None))


# ---------------------------------------------------------------------------
# builders


def pauli_decomposition(weights: Sequence[float], n_qubits: int | None = None) -> Decomposition:
    """sum_j w_j Z_j as terms (|w_j|, sign(w_j) Z_j)."""
    w = np.asarray(weights, dtype=float)
    n = len(w) if n_qubits is None else int(n_qubits)
    if len(w) != n:
        raise ValueError("need one weight per qubit")
    if not np.any(w):
        raise ValueError("all weights are zero")
    target = HermitianOperator(n, diag=sum(wj * z_diagonal(n, j) for j, wj in enumerate(w)))
    terms = [
        DecompositionTerm(abs(wj), HermitianOperator(n, diag=np.sign(wj) * z_diagonal(n, j)), label=f"Z{j}")
        for j, wj in enumerate(w)
        if wj != 0.0
    ]
    return Decomposition(target, 0.0, terms, name="pauli")


def xi_decomposition(target: HermitianOperator, spectrum: Spectrum | None = None) -> Decomposition:
    """Centre shift (l_0 + l_{J-1})/2 plus terms (dl_x/2, Xi_x), Xi_x = 1 - 2 sum_{j<x} Pi_j."""
    spec = target.spectrum if spectrum is None else spectrum
    lam = spec.eigenvalues
    n_levels = len(lam)
    shift = 0.5 * (lam[0] + lam[-1])
    terms = []
    for x in range(1, n_levels):
        selector = np.where(np.arange(n_levels) < x, -1.0, 1.0)
        terms.append(DecompositionTerm(0.5 * (lam[x] - lam[x - 1]), spec.projector_sum(selector), label=f"Xi{x}"))
    return Decomposition(target, float(shift), terms, name="xi")


def ladder_degree(target: HermitianOperator, unit: float = 1.0, atol: float = 1e-9) -> int:
    """R such that every eigenvalue / unit is an integer in [-R, R]."""
    scaled = target.spectrum.eigenvalues / unit
    ints = np.round(scaled)
    if np.max(np.abs(scaled - ints)) > atol:
        raise ValueError("spectrum is not a ladder in the given unit")
    r = int(np.max(np.abs(ints)))
    if r < 1:
        raise ValueError("ladder degree must be >= 1")
    return r


def gpsk_times(degree: int) -> np.ndarray:
    return 2.0 * np.arange(1, degree + 1) * np.pi / (2 * degree + 1)


def gpsk_coefficients(degree: int) -> np.ndarray:
    """Solve sum_l c_l sin(j t_l) = j for j = 1..R."""
    t = gpsk_times(degree)
    j = np.arange(1, degree + 1)
    a = np.sin(np.outer(j, t))
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError(f"sine interpolation system is singular (cond {cond:.3e})")
    return np.linalg.solve(a, j.astype(float))


def gpsk_closed_form_coefficients(degree: int) -> np.ndarray:
    """(-1)^{l-1} / (2R sin^2(t_l/2)), the kernel-derivative expression as printed."""
    t = gpsk_times(degree)
    l = np.arange(1, degree + 1)
    return (-1.0) ** (l - 1) / (2 * degree * np.sin(t / 2) ** 2)


def gpsk_decomposition(target: HermitianOperator, degree: int | None = None, unit: float = 1.0) -> Decomposition:
    """<O> = unit * sum_l c_l <sin(O t_l / unit)> for a ladder spectrum."""
    r = ladder_degree(target, unit)
    if degree is None:
        degree = r
    elif degree < r:
        raise ValueError(f"degree {degree} is below the ladder extent {r}")
    t = gpsk_times(degree)
    c = gpsk_coefficients(degree)
    spec = target.spectrum
    terms = []
    for l, (tl, cl) in enumerate(zip(t, c), start=1):
        if cl == 0.0:
            continue
        sign = 1.0 if cl > 0 else -1.0
        op = spec.apply_function(lambda lam, tl=tl, sign=sign: sign * np.sin(lam * tl / unit))
        terms.append(DecompositionTerm(abs(cl) * unit, op, label=f"sin(t{l})"))
    return Decomposition(
        target, 0.0, terms, name="gpsk", meta={"degree": degree, "unit": unit, "times": t, "coefficients": c}
    )


def sgn_time(spectrum: Spectrum, x: int, margin: float = SGN_T_MARGIN) -> float:
    lam = spectrum.eigenvalues
    mu = 0.5 * (lam[x - 1] + lam[x])
    return (np.pi - margin * np.pi) / float(np.max(np.abs(lam - mu)))


def fit_sgn_time(spectrum: Spectrum, x: int, f: Callable, lo: float = 0.05, hi: float = 0.999, points: int = 2000) -> float:
    """t in [lo, hi] * pi/||O - mu_x|| minimizing max_k |f((l_k - mu_x) t) - sgn(l_k - mu_x)|."""
    lam = spectrum.eigenvalues
    y = lam - 0.5 * (lam[x - 1] + lam[x])
    ts = np.linspace(lo, hi, points) * np.pi / float(np.max(np.abs(y)))
    vals = np.asarray(f(np.outer(ts, y)), dtype=float)
    err = np.max(np.abs(vals - np.sign(y)), axis=1)
    return float(ts[int(np.argmin(err))])


def sgn_decomposition(
    target: HermitianOperator,
    approximation,
    times: Sequence[float] | str = "fit",
    sign_oracle: Callable | None = None,
    margin: float = SGN_T_MARGIN,
) -> Decomposition:
    """Xi terms with sgn(O - mu_x) replaced by f((O - mu_x) t_x).

    ``approximation`` is a SignApproximation or QspPhases; ``sign_oracle``
    overrides the approximant (np.sign recovers the Xi decomposition).
    ``times`` is "fit" (per-term t minimizing the error on the spectrum),
    "margin" (t = (1 - margin) pi / ||O - mu_x||) or explicit values.
    """
    spec = target.spectrum
    lam = spec.eigenvalues
    n_levels = len(lam)
    if sign_oracle is not None:
        f = sign_oracle
    else:
        if isinstance(approximation, qsp.SignApproximation):
            phases = approximation.phases
        elif isinstance(approximation, qsp.QspPhases):
            phases = approximation
        else:
            raise TypeError("approximation must be SignApproximation or QspPhases (optimize the phases first)")
        f = lambda x: qsp.sign_approximant(phases, x)  # noqa: E731
    terms = []
    used_times = []
    for x in range(1, n_levels):
        mu = 0.5 * (lam[x - 1] + lam[x])
        if isinstance(times, str):
            if times == "fit":
                t = fit_sgn_time(spec, x, f)
            elif times == "margin":
                t = sgn_time(spec, x, margin)
            else:
                raise ValueError(f"unknown time rule {times!r}")
        else:
            t = float(times[x - 1])
        if t * float(np.max(np.abs(lam - mu))) >= np.pi:
            raise ValueError(f"t = {t} aliases: t * ||O - mu_{x}|| must stay below pi")
        used_times.append(t)
        values = np.asarray(f((lam - mu) * t), dtype=float)
        if np.max(np.abs(values)) > 1.0 + NORM_SLACK:
            raise ValueError("sign approximant exceeds unit norm on the spectrum")
        terms.append(
            DecompositionTerm(0.5 * (lam[x] - lam[x - 1]), spec.projector_sum(values), MONTE_CARLO, label=f"sgn{x}")
        )
    shift = 0.5 * (lam[0] + lam[-1])
    return Decomposition(target, float(shift), terms, name="sgn", check=False, meta={"times": np.array(used_times)})


# ---------------------------------------------------------------------------
# reflections, centring, splits


def is_reflection(op, tol: float = REFLECTION_TOL) -> bool:
    re_u = as_re_u(op).re_u if not isinstance(op, HermitianOperator) else op
    return re_u.square().max_abs_difference(HermitianOperator.identity(re_u.n_qubits)) < tol


def center_term(term: DecompositionTerm) -> tuple[float, DecompositionTerm | None]:
    """c Re(U) = shift * 1 + c' Re(U~) with Re(U~) spanning exactly [-1, 1].

    Returns (shift, None) when Re(U) is a multiple of the identity.
    """
    lam = term.re_u.spectrum.eigenvalues
    lo, hi = float(lam[0]), float(lam[-1])
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    shift = term.coefficient * mid
    if half <= REFLECTION_TOL:
        return shift, None
    if abs(mid) <= 1e-15 and abs(half - 1.0) <= 1e-15:
        return 0.0, term
    centred = (term.re_u - mid) / half
    new = DecompositionTerm(term.coefficient * half, centred, term.sampling_mode, term.label)
    return shift, new


def center(dec: Decomposition) -> Decomposition:
    shift = dec.identity_shift
    terms = []
    for t in dec.terms:
        s, new = center_term(t)
        shift += s
        if new is not None:
            terms.append(new)
    return Decomposition(dec.target, shift, terms, name=f"center({dec.name})", check=dec.check)


@dataclass
class SplitReport:
    reconstructs: bool
    residual: float
    classification: str  # "preserving", "increasing" or "decreasing"
    parent_norm: float
    children_norm: float
    parent: DecompositionTerm
    children: tuple

    def parent_cost(self, psi) -> float:
        return float(_weights([self.parent.coefficient], [self.parent.expectation(psi)])[0])

    def children_cost(self, psi) -> float:
        return float(_weights([c.coefficient for c in self.children], [c.expectation(psi) for c in self.children]).sum())


def validate_norm_preserving_split(parent: DecompositionTerm, children: Sequence[DecompositionTerm], atol: float = 1e-9) -> SplitReport:
    """Check c Re(U) = sum_i c_i Re(U_i) and classify sum_i c_i against c."""
    children = tuple(children)
    recon = HermitianOperator.zero(parent.re_u.n_qubits)
    for c in children:
        recon = recon + c.coefficient * c.re_u
    resid = recon.max_abs_difference(parent.coefficient * parent.re_u)
    if resid > atol:
        raise ValueError(f"children do not reconstruct the parent term (residual {resid:.3e})")
    total = float(sum(c.coefficient for c in children))
    if abs(total - parent.coefficient) <= atol * max(1.0, parent.coefficient):
        kind = "preserving"
    elif total > parent.coefficient:
        kind = "increasing"
    else:
        kind = "decreasing"
    return SplitReport(True, resid, kind, parent.coefficient, total, parent, children)


def replace_term(dec: Decomposition, index: int, children: Sequence[DecompositionTerm]) -> Decomposition:
    terms = list(dec.terms[:index]) + list(children) + list(dec.terms[index + 1 :])
    return Decomposition(dec.target, dec.identity_shift, terms, name=dec.name, check=dec.check)


# ---------------------------------------------------------------------------
# variance and cost


def decomposition_variance(
    dec: Decomposition,
    psi,
    shots,
    estimates: Mapping[int, float] | None = None,
    seed=None,
) -> float:
    """sum_x c_x^2 (1 - <Re U_x>^2) / m_x.

    ``shots`` is a sequence or mapping term-index -> m_x. Monte-Carlo terms use
    ``estimates[x]`` if given, else an estimate from m_x simulated HT shots.
    """
    n = len(dec.terms)
    if isinstance(shots, Mapping):
        missing = [i for i in range(n) if i not in shots]
        if missing:
            raise KeyError(f"no shot count for terms {missing}")
        m = np.array([shots[i] for i in range(n)], dtype=float)
    else:
        m = np.asarray(shots, dtype=float)
        if m.shape != (n,):
            raise ValueError(f"expected {n} shot counts, got shape {m.shape}")
    if np.any(m < 1):
        raise ValueError("every term needs at least one shot")
    exact = dec.expectations(psi)
    e = exact.copy()
    rng = np.random.default_rng(seed)
    for i, term in enumerate(dec.terms):
        if term.sampling_mode != MONTE_CARLO:
            continue
        if estimates is not None and i in estimates:
            e[i] = estimates[i]
        else:
            k = rng.binomial(int(m[i]), 0.5 * (1.0 + np.clip(exact[i], -1.0, 1.0)))
            e[i] = 2.0 * k / m[i] - 1.0
    c = dec.coefficients
    return float(np.sum(c * c * np.clip(1.0 - e * e, 0.0, None) / m))


def shot_variance_bracket(dec: Decomposition, expectations) -> float:
    """[sum_x c_x sqrt(1 - <Re U_x>^2)]^2, i.e. M * Var* under optimal allocation."""
    return float(_weights(dec.coefficients, expectations).sum() ** 2)


def decomposition_cost(dec: Decomposition, psi, epsilon: float) -> float:
    """Shots needed for Var* = epsilon^2 under optimal allocation."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return shot_variance_bracket(dec, dec.expectations(psi)) / epsilon**2


def gpsk_variance(dec: Decomposition, psi, m: int) -> float:
    if m < 1:
        raise ValueError("shot count must be >= 1")
    return decomposition_cost(dec, psi, 1.0) / m


def gpsk_closed_form_variance(target: HermitianOperator, psi, m: int, degree: int | None = None, unit: float = 1.0) -> float:
    """[sum_l sqrt(1 - <sin(O t_l)>^2) / |2R sin^2(t_l/2)|]^2 / m."""
    if degree is None:
        degree = ladder_degree(target, unit)
    t = gpsk_times(degree)
    occ = target.spectrum.occupations(psi)
    lam = target.spectrum.eigenvalues / unit
    s = np.array([np.dot(occ, np.sin(lam * tl)) for tl in t])
    w = np.sqrt(np.clip(1.0 - s * s, 0.0, None)) / np.abs(2 * degree * np.sin(t / 2) ** 2)
    return float(unit**2 * w.sum() ** 2 / m)


# ---------------------------------------------------------------------------
# split witnesses


def increasing_split_witness(parent: DecompositionTerm, children: Sequence[DecompositionTerm]):
    """Search the +1/-1 eigenstates of the centred parent and their superposition
    for a state where the centre's term cost is below the children's.

    Returns (state, centre_cost, children_cost) or None.
    """
    _, centred = center_term(parent)
    if centred is None:
        return None
    spec = centred.re_u.spectrum
    top = spec.vectors[-1][:, 0] if spec.vectors is not None else np.eye(centred.re_u.dim)[np.argmax(spec.labels == spec.n_levels - 1)]
    bottom = spec.vectors[0][:, 0] if spec.vectors is not None else np.eye(centred.re_u.dim)[np.argmax(spec.labels == 0)]
    candidates = [top, bottom, (top + bottom) / np.sqrt(2.0)]
    for v in candidates:
        psi = QuantumState.from_vector(v)
        c_cost = float(_weights([centred.coefficient], [centred.expectation(psi)])[0])
        k_cost = float(_weights([c.coefficient for c in children], [c.expectation(psi) for c in children]).sum())
        if c_cost < k_cost - 1e-12:
            return psi, c_cost, k_cost
    return None


def von_neumann_bound(target: HermitianOperator, psi, epsilon: float = 1.0) -> float:
    return von_neumann_variance(target, psi) / epsilon**2


def state_from_occupations(spectrum: Spectrum, weights: Mapping[int, float], rng=None) -> QuantumState:
    """Superposition with eigenspace occupations proportional to ``weights``.

    Within each eigenspace a basis vector (or a random unit vector if ``rng``)
    is chosen.
    """
    dim = 1 << spectrum.n_qubits
    v = np.zeros(dim, dtype=complex)
    total = float(sum(weights.values()))
    for j, wj in weights.items():
        if spectrum.labels is not None:
            idx = np.nonzero(spectrum.labels == j)[0]
            vec = np.zeros(dim, dtype=complex)
            if rng is None:
                vec[idx[0]] = 1.0
            else:
                z = rng.normal(size=idx.size) + 1j * rng.normal(size=idx.size)
                vec[idx] = z / np.linalg.norm(z)
        else:
            b = spectrum.vectors[j]
            if rng is None:
                vec = b[:, 0]
            else:
                z = rng.normal(size=b.shape[1]) + 1j * rng.normal(size=b.shape[1])
                vec = b @ (z / np.linalg.norm(z))
        phase = 1.0 if rng is None else np.exp(2j * np.pi * rng.random())
        v += np.sqrt(wj / total) * phase * vec
    return QuantumState.from_vector(v)


__all__ = [name for name in dir() if not name.startswith("_")] + ["_weights"]
