"""Seeded hardware-efficient-ansatz states.

Each layer applies RY(theta) then RZ(theta') to every qubit, followed by a CZ
chain (q, q+1). Angles are uniform on [0, 2pi). State ``index`` of an ensemble
draws from ``PCG64(SeedSequence([seed, index]))``, so ensembles are
reproducible and each state is independent of the others.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qcore import QuantumState

DEFAULT_LAYERS = 5


@dataclass(frozen=True)
class AnsatzConfig:
    n_qubits: int
    n_layers: int = DEFAULT_LAYERS
    seed: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def state_rng(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def _apply_1q(state: np.ndarray, gate: np.ndarray, qubit: int, n: int) -> np.ndarray:
    psi = state.reshape(1 << (n - 1 - qubit), 2, 1 << qubit)
    return np.einsum("ab,ibj->iaj", gate, psi).reshape(-1)


def _cz_chain_phases(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    parity = np.zeros(idx.shape, dtype=int)
    for q in range(n - 1):
        parity ^= ((idx >> q) & 1) & ((idx >> (q + 1)) & 1)
    return 1.0 - 2.0 * parity


def _ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def draw_angles(config: AnsatzConfig, index: int = 0) -> np.ndarray:
    """Angles of shape (layers, qubits, 2): [..., 0] for RY, [..., 1] for RZ."""
    rng = state_rng(config.seed, index)
    return rng.uniform(0.0, 2 * np.pi, size=(config.n_layers, config.n_qubits, 2))


def circuit_state(n_qubits: int, angles: np.ndarray) -> QuantumState:
    angles = np.asarray(angles, dtype=float)
    if angles.ndim != 3 or angles.shape[1:] != (n_qubits, 2):
        raise ValueError(f"angles must have shape (layers, {n_qubits}, 2)")
    psi = np.zeros(1 << n_qubits, dtype=complex)
    psi[0] = 1.0
    cz = _cz_chain_phases(n_qubits)
    for layer in angles:
        for q in range(n_qubits):
            psi = _apply_1q(psi, _rz(layer[q, 1]) @ _ry(layer[q, 0]), q, n_qubits)
        psi = psi * cz
    return QuantumState.from_vector(psi, normalize=False)


def random_he_state(config: AnsatzConfig, index: int = 0, zero_angles: bool = False) -> QuantumState:
    """State ``index`` of the ensemble defined by ``config``.

    ``zero_angles`` skips sampling and sets every rotation to 0 (debug hook).
    """
    if zero_angles:
        angles = np.zeros((config.n_layers, config.n_qubits, 2))
    else:
        angles = draw_angles(config, index)
    return circuit_state(config.n_qubits, angles)


def ensemble(config: AnsatzConfig, n_states: int) -> list[QuantumState]:
    return [random_he_state(config, i) for i in range(n_states)]
