import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shotbudget import ansatz, qcore
from shotbudget.ansatz import AnsatzConfig


def test_zero_angles_give_all_zero_state():
    psi = ansatz.random_he_state(AnsatzConfig(4, 3, 11), zero_angles=True)
    assert psi.amplitudes[0] == 1 and np.allclose(psi.amplitudes[1:], 0)


def test_same_seed_same_bits():
    cfg = AnsatzConfig(5, 5, 2**63 + 17)
    a = ansatz.random_he_state(cfg, 4)
    b = ansatz.random_he_state(cfg, 4)
    assert a.amplitudes.tobytes() == b.amplitudes.tobytes()


def test_indices_are_independent_streams():
    cfg = AnsatzConfig(3, 2, 0)
    assert not np.allclose(ansatz.draw_angles(cfg, 0), ansatz.draw_angles(cfg, 1))


def test_config_validation():
    with pytest.raises(ValueError):
        AnsatzConfig(3, 0)
    with pytest.raises(ValueError):
        AnsatzConfig(0, 1)
    with pytest.raises(ValueError):
        AnsatzConfig(2, 1, seed=-1)


def test_single_qubit_rotations():
    # RY(pi) |0> = |1>, then RZ only adds a phase
    angles = np.array([[[np.pi, 0.7]]])
    psi = ansatz.circuit_state(1, angles)
    assert abs(psi.amplitudes[1]) == pytest.approx(1)


def test_cz_chain_phase():
    # all qubits rotated to |1>: CZ(0,1) and CZ(1,2) give (-1)^2
    angles = np.zeros((1, 3, 2))
    angles[0, :, 0] = np.pi
    psi = ansatz.circuit_state(3, angles)
    assert psi.amplitudes[7] == pytest.approx(1.0)
    angles = np.zeros((1, 2, 2))
    angles[0, :, 0] = np.pi
    assert ansatz.circuit_state(2, angles).amplitudes[3] == pytest.approx(-1.0)


def test_ensemble_z_mean_near_zero():
    cfg = AnsatzConfig(4, 5, 99)
    op = qcore.weighted_z([1] * 4)
    vals = np.array([qcore.expectation(op, psi) for psi in ansatz.ensemble(cfg, 100)])
    assert abs(vals.mean()) < 4 * vals.std(ddof=1) / np.sqrt(len(vals))


@pytest.mark.parametrize("n", [3, 5])
def test_ensemble_non_degenerate(n):
    states = np.array([p.amplitudes for p in ansatz.ensemble(AnsatzConfig(n, 5, 1), 100)])
    fid = np.abs(states.conj() @ states.T) ** 2
    np.fill_diagonal(fid, 0)
    assert fid.max() < 0.999


@given(seed=st.integers(0, 2**64 - 1), n=st.integers(1, 6), layers=st.integers(1, 4))
def test_norm_preserved(seed, n, layers):
    angles = ansatz.draw_angles(AnsatzConfig(n, layers, seed))
    for l in range(1, layers + 1):
        psi = ansatz.circuit_state(n, angles[:l])
        assert abs(np.linalg.norm(psi.amplitudes) - 1) < 1e-12
