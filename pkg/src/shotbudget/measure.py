"""Single-bit measurement models: Hadamard test, echo verification (EV),
control-free EV and parallel EV.

Only the Hermitian part Re(U) of a Hadamard-test unitary is stored. When the
full complex <U> is needed, U is rebuilt canonically as exp(i arccos Re(U))
on the spectrum of Re(U).
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .qcore import DimensionError, HermitianOperator, _as_vector, expectation

NORM_SLACK = 1e-10


class NormError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MeasurableUnitaryPart:
    """Re(U) for a Hadamard-test unitary U; all eigenvalues lie in [-1, 1]."""

    re_u: HermitianOperator

    def __post_init__(self):
        norm = self.re_u.norm
        if norm > 1.0 + NORM_SLACK:
            raise NormError(f"||Re(U)|| = {norm:.12g} exceeds 1")

    @property
    def n_qubits(self) -> int:
        return self.re_u.n_qubits

    def unitary_phases(self) -> np.ndarray:
        """Eigenphases arccos(lambda_j) of the canonical U, per distinct eigenvalue."""
        return np.arccos(np.clip(self.re_u.spectrum.eigenvalues, -1.0, 1.0))

    def unitary_matrix(self) -> np.ndarray:
        spec = self.re_u.spectrum
        phases = self.unitary_phases()
        dim = self.re_u.dim
        if spec.labels is not None:
            return np.diag(np.exp(1j * phases)[spec.labels])
        u = np.zeros((dim, dim), dtype=complex)
        for ph, b in zip(phases, spec.vectors):
            u += np.exp(1j * ph) * (b @ b.conj().T)
        return u

    def unitary_expectation(self, psi) -> complex:
        """<psi|U|psi> for U = exp(i arccos Re(U))."""
        occ = self.re_u.spectrum.occupations(psi)
        return complex(np.sum(occ * np.exp(1j * self.unitary_phases())))


def as_re_u(op) -> MeasurableUnitaryPart:
    if isinstance(op, MeasurableUnitaryPart):
        return op
    if isinstance(op, HermitianOperator):
        return MeasurableUnitaryPart(op)
    raise TypeError(f"expected HermitianOperator or MeasurableUnitaryPart, got {type(op).__name__}")


@dataclass(frozen=True, eq=False)
class BinaryPovm:
    pi_plus: HermitianOperator
    pi_minus: HermitianOperator

    def __post_init__(self):
        n = self.pi_plus.n_qubits
        if self.pi_minus.n_qubits != n:
            raise DimensionError("POVM elements act on different qubit counts")
        for name, el in (("pi_plus", self.pi_plus), ("pi_minus", self.pi_minus)):
            lo = float(el.spectrum.eigenvalues[0])
            if lo < -NORM_SLACK:
                raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {lo:.3e})")
        resid = (self.pi_plus + self.pi_minus).max_abs_difference(HermitianOperator.identity(n))
        if resid > NORM_SLACK:
            raise ValueError(f"POVM elements do not sum to identity (residual {resid:.3e})")


def povm_from_re_u(re_u) -> BinaryPovm:
    """Pi_pm = M_pm^dag M_pm with M_pm = (1 pm U)/2, i.e. (1 pm Re(U))/2."""
    part = as_re_u(re_u)
    ident = HermitianOperator.identity(part.n_qubits)
    return BinaryPovm(0.5 * (ident + part.re_u), 0.5 * (ident - part.re_u))


def re_u_from_povm(povm: BinaryPovm) -> MeasurableUnitaryPart:
    return MeasurableUnitaryPart(povm.pi_plus - povm.pi_minus)


# ---------------------------------------------------------------------------
# Hadamard test


@dataclass(frozen=True)
class SampleRecord:
    """Outcome counts of m single-shot experiments."""

    counts: dict
    shots: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to the number of shots")

    @property
    def mean(self) -> float:
        return sum(k * v for k, v in self.counts.items()) / self.shots

    def to_rows(self) -> list[tuple[int, int]]:
        return sorted(self.counts.items(), reverse=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["outcome", "count"])
        w.writerows(self.to_rows())
        return buf.getvalue()


def ht_probabilities(re_u, psi) -> tuple[float, float]:
    e = expectation(as_re_u(re_u).re_u, psi)
    e = min(1.0, max(-1.0, e))
    return 0.5 * (1.0 + e), 0.5 * (1.0 - e)


def ht_variance(re_u, psi, m: int) -> float:
    """(1 - <Re U>^2)/m for m Hadamard-test shots."""
    if m < 1:
        raise ValueError("shot count must be >= 1")
    e = expectation(as_re_u(re_u).re_u, psi)
    return max(0.0, 1.0 - e * e) / m


def ht_sample(re_u, psi, m: int, seed) -> SampleRecord:
    if m < 1:
        raise ValueError("shot count must be >= 1")
    p_plus, _ = ht_probabilities(re_u, psi)
    rng = np.random.default_rng(seed)
    k = int(rng.binomial(m, p_plus))
    return SampleRecord({1: k, -1: m - k}, m)


# ---------------------------------------------------------------------------
# echo verification


class EvStatistics(NamedTuple):
    p_plus: float
    p_minus: float
    p_zero: float
    variance: float


def _unitary_expectation(u, psi) -> complex:
    """<U> where ``u`` is a dense unitary matrix or a Re(U) description."""
    if isinstance(u, np.ndarray):
        v = _as_vector(psi)
        if u.shape != (v.shape[0], v.shape[0]):
            raise DimensionError(f"unitary shape {u.shape} does not match state dimension {v.shape[0]}")
        return complex(np.vdot(v, u @ v))
    part = as_re_u(u)
    if part.n_qubits != _as_vector(psi).shape[0].bit_length() - 1:
        raise DimensionError("state and operator dimensions differ")
    return part.unitary_expectation(psi)


def ev_statistics(u, psi, m: int) -> EvStatistics:
    """Ternary EV outcome probabilities and the variance of its estimator.

    p_pm = |<psi|(1 pm U)|psi>|^2 / 4, p_0 the verification-failure remainder.
    The variance is (P_verify - <Re U>^2)/m where P_verify = p_+ + p_-.
    """
    if m < 1:
        raise ValueError("shot count must be >= 1")
    z = _unitary_expectation(u, psi)
    p_plus = 0.25 * abs(1.0 + z) ** 2
    p_minus = 0.25 * abs(1.0 - z) ** 2
    p_zero = max(0.0, 1.0 - p_plus - p_minus)
    var = max(0.0, p_plus + p_minus - z.real**2) / m
    return EvStatistics(p_plus, p_minus, p_zero, var)


def ev_sample(u, psi, m: int, seed) -> SampleRecord:
    st = ev_statistics(u, psi, 1)
    rng = np.random.default_rng(seed)
    p = np.array([st.p_plus, st.p_minus, st.p_zero])
    counts = rng.multinomial(m, p / p.sum())
    return SampleRecord({1: int(counts[0]), -1: int(counts[1]), 0: int(counts[2])}, m)


def cfev_expectation(u, psi, psi_ref, phi_ref: float, atol: float = 1e-8) -> float:
    """Control-free EV signal <psi|Re(U e^{-i phi_ref})|psi>.

    ``psi_ref`` must be an eigenstate of U with eigenvalue exp(i phi_ref) and
    orthogonal to ``psi``.
    """
    v = _as_vector(psi)
    ref = _as_vector(psi_ref)
    if isinstance(u, np.ndarray):
        umat = u
    else:
        umat = as_re_u(u).unitary_matrix()
    if umat.shape != (v.shape[0], v.shape[0]) or ref.shape != v.shape:
        raise DimensionError("unitary, state and reference dimensions differ")
    resid = float(np.linalg.norm(umat @ ref - np.exp(1j * phi_ref) * ref))
    if resid > atol:
        raise ValueError(f"reference state is not an eigenstate with phase {phi_ref} (residual {resid:.3e})")
    if abs(np.vdot(ref, v)) > atol:
        raise ValueError("reference state is not orthogonal to psi")
    # <Phi|X_CFEV|Phi> with |Phi> = (U|psi> + e^{i phi} |ref>)/sqrt(2)
    phi = (umat @ v + np.exp(1j * phi_ref) * ref) / np.sqrt(2.0)
    x_cfev = np.outer(v, ref.conj()) + np.outer(ref, v.conj())
    return float(np.vdot(phi, x_cfev @ phi).real)


# ---------------------------------------------------------------------------
# parallel EV


@dataclass(frozen=True, eq=False)
class ParallelEvTable:
    """Echo-verified probabilities for every sign string sigma in {+1,-1}^K."""

    signs: np.ndarray  # (2^K, K)
    probabilities: np.ndarray  # (2^K,)

    @property
    def k(self) -> int:
        return self.signs.shape[1]

    @property
    def verification_probability(self) -> float:
        return float(self.probabilities.sum())


def parallel_ev_probabilities(unitaries: Sequence[HermitianOperator], psi, atol: float = 1e-9) -> ParallelEvTable:
    """p_sigma = 4^-K |<psi| prod_k (1 + sigma_k U_k) |psi>|^2 for commuting Hermitian reflections."""
    ops = list(unitaries)
    k = len(ops)
    if not 1 <= k <= 10:
        raise ValueError("need 1 <= K <= 10 unitaries")
    v = _as_vector(psi)
    n = ops[0].n_qubits
    ident = HermitianOperator.identity(n)
    for i, op in enumerate(ops):
        if op.n_qubits != n or op.dim != v.shape[0]:
            raise DimensionError("unitaries and state dimensions differ")
        if op.square().max_abs_difference(ident) > atol:
            raise ValueError(f"U_{i} does not square to the identity")
        for j in range(i):
            if not op.commutes_with(ops[j], atol):
                raise ValueError(f"U_{i} and U_{j} do not commute")
    signs = np.array(list(itertools.product((1, -1), repeat=k)), dtype=int)
    probs = np.empty(len(signs))
    for row, sigma in enumerate(signs):
        w = v
        for s, op in zip(sigma, ops):
            w = w + s * op.apply(w)
        probs[row] = abs(np.vdot(v, w)) ** 2 / 4.0**k
    return ParallelEvTable(signs, probs)


class PevEstimate(NamedTuple):
    estimate: float
    variance: float  # first-order propagation through the estimator, authoritative
    variance_closed_form: float  # 2^{K-1}(p_j+ + p_j-) - <Re U_j>, as printed
    clipped: bool


def parallel_ev_estimator(probabilities: np.ndarray, signs: np.ndarray, j: int) -> float:
    """(sum_{sigma_j=+} sqrt p)^2 - (sum_{sigma_j=-} sqrt p)^2."""
    root = np.sqrt(np.clip(probabilities, 0.0, None))
    plus = signs[:, j] == 1
    return float(root[plus].sum() ** 2 - root[~plus].sum() ** 2)


def parallel_ev_estimate_and_variance(table: ParallelEvTable, j: int, m: int, floor: float = 1e-300) -> PevEstimate:
    if not 0 <= j < table.k:
        raise IndexError(f"term index {j} out of range for K={table.k}")
    if m < 1:
        raise ValueError("shot count must be >= 1")
    p = table.probabilities
    clipped = bool(np.any(p < 0.0))
    p = np.clip(p, 0.0, None)
    root = np.sqrt(p)
    sig = table.signs[:, j]
    plus = sig == 1
    s_plus, s_minus = root[plus].sum(), root[~plus].sum()
    estimate = float(s_plus**2 - s_minus**2)

    # gradient of the estimator w.r.t. each p_sigma: sigma_j * S_{sigma_j} / sqrt(p_sigma)
    partner = np.where(plus, s_plus, s_minus)
    live = p > floor
    if not np.all(live):
        clipped = True
    grad = np.zeros_like(p)
    grad[live] = sig[live] * partner[live] / root[live]
    cov = np.diag(p) - np.outer(p, p)
    var = float(grad @ cov @ grad)
    # zero-probability strings: limit of grad^2 * p_sigma is S_{sigma_j}^2
    var += float(np.sum(partner[~live] ** 2))

    p_j_plus, p_j_minus = s_plus**2, s_minus**2
    closed = 2.0 ** (table.k - 1) * (p_j_plus + p_j_minus) - estimate
    return PevEstimate(estimate, max(var, 0.0) / m, closed / m, clipped)
