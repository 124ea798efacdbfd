"""Dense statevector and Hermitian-operator algebra.

Everything here is exact (up to floating point) and serves as the oracle for the
measurement models and decompositions built on top of it.

Basis ordering is little-endian: bit ``j`` of a basis index is the state of
qubit ``j``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
DEGENERACY_RTOL = 1e-9
JACOBI_MAX_DIM = 128

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class DimensionError(ValueError):
    pass


class HermiticityError(ValueError):
    def __init__(self, residual: float):
        super().__init__(f"operator is not Hermitian (max |O - O^dag| = {residual:.3e})")
        self.residual = residual


class EigensolverError(RuntimeError):
    def __init__(self, sweeps: int, off_norm: float):
        super().__init__(f"Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:.3e})")
        self.sweeps = sweeps
        self.off_norm = off_norm


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Normalized pure state on ``n_qubits`` qubits."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        dim = amps.shape[0]
        n = dim.bit_length() - 1
        if dim < 2 or 1 << n != dim:
            raise DimensionError(f"amplitude vector length {dim} is not a power of two >= 2")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (sum |a|^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.shape[0].bit_length() - 1

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @classmethod
    def from_vector(cls, vector, normalize: bool = True) -> "QuantumState":
        v = np.asarray(vector, dtype=complex).reshape(-1)
        if normalize:
            v = v / np.linalg.norm(v)
        return cls(v)

    @classmethod
    def basis(cls, n_qubits: int, index: int = 0) -> "QuantumState":
        v = np.zeros(1 << n_qubits, dtype=complex)
        v[index] = 1.0
        return cls(v)

    @classmethod
    def plus(cls, n_qubits: int) -> "QuantumState":
        dim = 1 << n_qubits
        return cls(np.full(dim, 1 / np.sqrt(dim), dtype=complex))

    @classmethod
    def random(cls, n_qubits: int, rng: np.random.Generator) -> "QuantumState":
        """Haar-random state drawn from ``rng``."""
        dim = 1 << n_qubits
        v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        return cls.from_vector(v)

    def overlap(self, other: "QuantumState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def _as_vector(psi) -> np.ndarray:
    if isinstance(psi, QuantumState):
        return psi.amplitudes
    return np.asarray(psi, dtype=complex).reshape(-1)


# ---------------------------------------------------------------------------
# operators


class HermitianOperator:
    """Hermitian operator stored either as a real diagonal or a dense matrix.

    Instances are immutable; the spectral decomposition is computed lazily and
    cached.
    """

    __slots__ = ("n_qubits", "_diag", "_matrix", "__dict__")

    def __init__(self, n_qubits: int, *, diag=None, matrix=None, check: bool = True):
        if (diag is None) == (matrix is None):
            raise ValueError("give exactly one of diag= or matrix=")
        dim = 1 << n_qubits
        self.n_qubits = int(n_qubits)
        if diag is not None:
            d = np.asarray(diag)
            if np.iscomplexobj(d):
                if check and np.max(np.abs(d.imag), initial=0.0) > HERMITIAN_TOL:
                    raise HermiticityError(float(np.max(np.abs(d.imag))))
                d = d.real
            d = np.array(d, dtype=float).reshape(-1)
            if d.shape[0] != dim:
                raise DimensionError(f"diagonal has length {d.shape[0]}, expected {dim}")
            d.setflags(write=False)
            self._diag, self._matrix = d, None
        else:
            m = np.array(matrix, dtype=complex)
            if m.shape != (dim, dim):
                raise DimensionError(f"matrix has shape {m.shape}, expected {(dim, dim)}")
            if check:
                residual = float(np.max(np.abs(m - m.conj().T), initial=0.0))
                if residual > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(m), initial=0.0))):
                    raise HermiticityError(residual)
            m = 0.5 * (m + m.conj().T)
            m.setflags(write=False)
            self._diag, self._matrix = None, m

    # -- construction helpers

    @classmethod
    def from_matrix(cls, matrix, check: bool = True) -> "HermitianOperator":
        """Wrap an explicit matrix, switching to diagonal storage when possible."""
        m = np.asarray(matrix, dtype=complex)
        dim = m.shape[0]
        n = dim.bit_length() - 1
        if m.ndim != 2 or m.shape[0] != m.shape[1] or 1 << n != dim:
            raise DimensionError(f"matrix shape {m.shape} is not 2^n x 2^n")
        op = cls(n, matrix=m, check=check)
        off = op._matrix - np.diag(np.diag(op._matrix))
        if not np.any(off):
            return cls(n, diag=np.diag(op._matrix).real)
        return op

    @classmethod
    def identity(cls, n_qubits: int, scale: float = 1.0) -> "HermitianOperator":
        return cls(n_qubits, diag=np.full(1 << n_qubits, float(scale)))

    @classmethod
    def zero(cls, n_qubits: int) -> "HermitianOperator":
        return cls(n_qubits, diag=np.zeros(1 << n_qubits))

    # -- basic properties

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    @property
    def is_diagonal(self) -> bool:
        return self._diag is not None

    @property
    def diagonal(self) -> np.ndarray:
        if self._diag is not None:
            return self._diag
        return np.diag(self._matrix).real

    def to_dense(self) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix
        return np.diag(self._diag).astype(complex)

    def __repr__(self):
        kind = "diag" if self.is_diagonal else "dense"
        return f"HermitianOperator(n_qubits={self.n_qubits}, {kind})"

    # -- algebra

    def _check_same(self, other: "HermitianOperator"):
        if other.n_qubits != self.n_qubits:
            raise DimensionError(f"qubit counts differ: {self.n_qubits} vs {other.n_qubits}")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = HermitianOperator.identity(self.n_qubits, other)
        self._check_same(other)
        if self.is_diagonal and other.is_diagonal:
            return HermitianOperator(self.n_qubits, diag=self._diag + other._diag)
        return HermitianOperator(self.n_qubits, matrix=self.to_dense() + other.to_dense(), check=False)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        scalar = float(scalar)
        if self.is_diagonal:
            return HermitianOperator(self.n_qubits, diag=self._diag * scalar)
        return HermitianOperator(self.n_qubits, matrix=self._matrix * scalar, check=False)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def product(self, other: "HermitianOperator") -> np.ndarray:
        """Plain matrix product ``self @ other`` (not Hermitian in general)."""
        self._check_same(other)
        if self.is_diagonal and other.is_diagonal:
            return np.diag(self._diag * other._diag).astype(complex)
        return self.to_dense() @ other.to_dense()

    def square(self) -> "HermitianOperator":
        if self.is_diagonal:
            return HermitianOperator(self.n_qubits, diag=self._diag**2)
        return HermitianOperator(self.n_qubits, matrix=self._matrix @ self._matrix, check=False)

    def apply(self, vector) -> np.ndarray:
        v = _as_vector(vector)
        if v.shape[0] != self.dim:
            raise DimensionError(f"vector length {v.shape[0]} does not match operator dimension {self.dim}")
        if self.is_diagonal:
            return self._diag * v
        return self._matrix @ v

    def commutes_with(self, other: "HermitianOperator", atol: float = 1e-9) -> bool:
        if self.is_diagonal and other.is_diagonal:
            return True
        a, b = self.to_dense(), other.to_dense()
        return float(np.max(np.abs(a @ b - b @ a))) < atol

    def max_abs_difference(self, other: "HermitianOperator") -> float:
        self._check_same(other)
        if self.is_diagonal and other.is_diagonal:
            return float(np.max(np.abs(self._diag - other._diag)))
        return float(np.max(np.abs(self.to_dense() - other.to_dense())))

    # -- spectral

    @functools.cached_property
    def spectrum(self) -> "Spectrum":
        return spectral_decompose(self)

    @property
    def norm(self) -> float:
        """Spectral norm, max_j |lambda_j|."""
        return float(np.max(np.abs(self.spectrum.eigenvalues)))

    def apply_function(self, f: Callable[[np.ndarray], np.ndarray]) -> "HermitianOperator":
        """Return ``sum_j f(lambda_j) Pi_j`` for a real function ``f``."""
        return self.spectrum.apply_function(f)


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Distinct eigenvalues (strictly increasing) with their eigenspace projectors.

    ``labels`` maps each basis index to its eigenvalue index for diagonal
    operators; ``vectors`` holds one orthonormal column block per eigenvalue
    for dense ones. Projectors are materialized lazily from either.
    """

    n_qubits: int
    eigenvalues: np.ndarray
    degeneracy_tolerance: float
    labels: np.ndarray | None = None
    vectors: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_levels(self) -> int:
        return len(self.eigenvalues)

    @property
    def ranks(self) -> list[int]:
        if self.labels is not None:
            return np.bincount(self.labels, minlength=self.n_levels).tolist()
        return [v.shape[1] for v in self.vectors]

    @property
    def projectors(self) -> list[HermitianOperator]:
        if "projectors" not in self._cache:
            if self.labels is not None:
                projs = [HermitianOperator(self.n_qubits, diag=(self.labels == j).astype(float)) for j in range(self.n_levels)]
            else:
                projs = [HermitianOperator(self.n_qubits, matrix=v @ v.conj().T, check=False) for v in self.vectors]
            self._cache["projectors"] = projs
        return self._cache["projectors"]

    def occupations(self, psi) -> np.ndarray:
        """a_j = <psi|Pi_j|psi> for every eigenvalue."""
        v = _as_vector(psi)
        if v.shape[0] != 1 << self.n_qubits:
            raise DimensionError("state and spectrum dimensions differ")
        if self.labels is not None:
            return np.bincount(self.labels, weights=np.abs(v) ** 2, minlength=self.n_levels)
        return np.array([float(np.sum(np.abs(b.conj().T @ v) ** 2)) for b in self.vectors])

    def projector_sum(self, selector: Sequence[float]) -> HermitianOperator:
        """``sum_j selector[j] Pi_j`` without building individual projectors."""
        w = np.asarray(selector, dtype=float)
        if self.labels is not None:
            return HermitianOperator(self.n_qubits, diag=w[self.labels])
        dim = 1 << self.n_qubits
        m = np.zeros((dim, dim), dtype=complex)
        for wj, b in zip(w, self.vectors):
            if wj != 0.0:
                m += wj * (b @ b.conj().T)
        return HermitianOperator(self.n_qubits, matrix=m, check=False)

    def apply_function(self, f) -> HermitianOperator:
        return self.projector_sum(np.asarray(f(self.eigenvalues), dtype=float))

    def reconstruct(self) -> HermitianOperator:
        return self.projector_sum(self.eigenvalues)


def _group_sorted(values: np.ndarray, tol: float) -> list[np.ndarray]:
    """Split sorted ``values`` into runs whose consecutive gaps are <= tol."""
    breaks = np.nonzero(np.diff(values) > tol)[0] + 1
    return np.split(np.arange(len(values)), breaks)


def jacobi_eigh(matrix, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi diagonalization of a complex Hermitian matrix.

    Returns (eigenvalues ascending, unitary whose columns are the eigenvectors).
    Each rotation first removes the phase of the pivot, then applies the real
    symmetric 2x2 rotation.
    """
    a = np.array(matrix, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = max(np.linalg.norm(a), 1e-300)
    off = 0.0
    for sweep in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r <= 1e-300 or r < 1e-18 * scale:
                    continue
                phase = apq / r
                app, aqq = a[p, p].real, a[q, q].real
                theta = (aqq - app) / (2.0 * r)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # G = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                g = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]], dtype=complex)
                idx = [p, q]
                a[:, idx] = a[:, idx] @ g
                a[idx, :] = g.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                v[:, idx] = v[:, idx] @ g
    else:
        raise EigensolverError(max_sweeps, float(off))
    w = np.diag(a).real
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def spectral_decompose(op: HermitianOperator, method: str = "auto") -> Spectrum:
    """Exact spectral decomposition with degenerate eigenvalues merged.

    ``method`` selects the dense eigensolver: ``"jacobi"``, ``"lapack"`` or
    ``"auto"`` (Jacobi up to dimension ``JACOBI_MAX_DIM``). Diagonal operators
    never reach an eigensolver.
    """
    if op.is_diagonal:
        d = op.diagonal
        order = np.argsort(d, kind="stable")
        norm = float(np.max(np.abs(d)))
        tol = DEGENERACY_RTOL * max(1.0, norm)
        groups = _group_sorted(d[order], tol)
        eigenvalues = np.array([d[order[g]].mean() for g in groups])
        labels = np.empty(len(d), dtype=np.intp)
        for j, g in enumerate(groups):
            labels[order[g]] = j
        return Spectrum(op.n_qubits, eigenvalues, tol, labels=labels)

    if method == "auto":
        method = "jacobi" if op.dim <= JACOBI_MAX_DIM else "lapack"
    if method == "jacobi":
        w, vecs = jacobi_eigh(op.to_dense())
    elif method == "lapack":
        w, vecs = np.linalg.eigh(op.to_dense())
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    norm = float(np.max(np.abs(w)))
    tol = DEGENERACY_RTOL * max(1.0, norm)
    groups = _group_sorted(w, tol)
    eigenvalues = np.array([w[g].mean() for g in groups])
    vectors = tuple(np.ascontiguousarray(vecs[:, g]) for g in groups)
    return Spectrum(op.n_qubits, eigenvalues, tol, vectors=vectors)


# ---------------------------------------------------------------------------
# expectation values


def expectation(op: HermitianOperator, psi) -> float:
    v = _as_vector(psi)
    if v.shape[0] != op.dim:
        raise DimensionError(f"state dimension {v.shape[0]} does not match operator dimension {op.dim}")
    if op.is_diagonal:
        return float(np.dot(op.diagonal, np.abs(v) ** 2))
    val = np.vdot(v, op.apply(v))
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ArithmeticError(f"expectation has imaginary residual {val.imag:.3e}")
    return float(val.real)


def von_neumann_variance(op: HermitianOperator, psi) -> float:
    """<O^2> - <O>^2, the single-shot variance of a projective measurement of O."""
    v = _as_vector(psi)
    if v.shape[0] != op.dim:
        raise DimensionError(f"state dimension {v.shape[0]} does not match operator dimension {op.dim}")
    ov = op.apply(v)
    mean = float(np.vdot(v, ov).real)
    second = float(np.vdot(ov, ov).real)
    var = second - mean * mean
    if var < -1e-10 * max(1.0, second):
        raise ArithmeticError(f"negative variance {var:.3e}")
    return max(var, 0.0)


# ---------------------------------------------------------------------------
# operator builders


def z_diagonal(n_qubits: int, qubit: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    return 1.0 - 2.0 * ((idx >> qubit) & 1)


def weighted_z(weights: Sequence[float]) -> HermitianOperator:
    """sum_j w_j Z_j, stored diagonally."""
    w = np.asarray(weights, dtype=float)
    n = len(w)
    d = np.zeros(1 << n)
    for j, wj in enumerate(w):
        d += wj * z_diagonal(n, j)
    return HermitianOperator(n, diag=d)


def pauli_string(label: str) -> np.ndarray:
    """Dense matrix for a Pauli label; character ``j`` acts on qubit ``j``."""
    m = np.eye(1, dtype=complex)
    for ch in label:
        # later characters land on more significant index bits
        m = np.kron(_PAULI[ch.upper()], m)
    return m


def pauli_sum(terms: dict[str, float]) -> HermitianOperator:
    labels = list(terms)
    n = len(labels[0])
    m = np.zeros((1 << n, 1 << n), dtype=complex)
    for label, coeff in terms.items():
        if len(label) != n:
            raise ValueError("Pauli labels must all have the same length")
        m += coeff * pauli_string(label)
    return HermitianOperator.from_matrix(m)


def xx_plus_yy() -> HermitianOperator:
    return pauli_sum({"XX": 1.0, "YY": 1.0})


def xxyy_reflection(variant: str, sign: int) -> HermitianOperator:
    """(1/2)[(XX + YY) + sign * B] with B = Z1 + 1Z ("z") or ZZ + 11 ("zz")."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if variant == "z":
        extra = {"ZI": 1.0, "IZ": 1.0}
    elif variant == "zz":
        extra = {"ZZ": 1.0, "II": 1.0}
    else:
        raise ValueError(f"unknown XX+YY variant {variant!r}")
    terms = {"XX": 0.5, "YY": 0.5}
    for k, v in extra.items():
        terms[k] = terms.get(k, 0.0) + 0.5 * sign * v
    return pauli_sum(terms)


def heisenberg3() -> HermitianOperator:
    """(1/3) sum_{m<l} (X_m X_l + Y_m Y_l + Z_m Z_l) on three spins."""
    terms = {}
    for a, b in [(0, 1), (0, 2), (1, 2)]:
        for p in "XYZ":
            label = ["I"] * 3
            label[a] = label[b] = p
            terms["".join(label)] = 1.0 / 3.0
    return pauli_sum(terms)


def build_operator(descriptor: dict) -> HermitianOperator:
    """Build an operator from a config descriptor ``{"kind": ..., ...}``.

    Kinds: ``weighted-z`` (weights), ``z-sum`` / ``linear-z`` / ``power2-z``
    (qubits), ``xx+yy``, ``xxyy-z`` / ``xxyy-zz`` (sign), ``heisenberg3``,
    ``matrix`` (matrix as nested lists, complex entries as [re, im] pairs).
    """
    kind = descriptor.get("kind")
    if kind == "weighted-z":
        return weighted_z(descriptor["weights"])
    if kind == "z-sum":
        return weighted_z(np.ones(int(descriptor["qubits"])))
    if kind == "linear-z":
        return weighted_z(np.arange(1, int(descriptor["qubits"]) + 1))
    if kind == "power2-z":
        return weighted_z(2.0 ** np.arange(int(descriptor["qubits"])))
    if kind == "xx+yy":
        return xx_plus_yy()
    if kind in ("xxyy-z", "xxyy-zz"):
        return xxyy_reflection(kind.split("-")[1], int(descriptor.get("sign", 1)))
    if kind == "heisenberg3":
        return heisenberg3()
    if kind == "matrix":
        m = np.asarray(descriptor["matrix"], dtype=float)
        if m.ndim == 3:
            m = m[..., 0] + 1j * m[..., 1]
        return HermitianOperator.from_matrix(m)
    raise ValueError(f"unknown operator kind {kind!r}")


def operator_family(kind: str) -> Callable[[int], HermitianOperator]:
    """N -> operator for the scalable benchmark observables."""
    if kind not in ("z-sum", "linear-z", "power2-z"):
        raise ValueError(f"operator kind {kind!r} is not a scalable family")
    return lambda n: build_operator({"kind": kind, "qubits": n})
