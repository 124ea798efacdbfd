import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from shotbudget import measure, qcore
from shotbudget.decomp import xi_decomposition
from shotbudget.qcore import HermitianOperator, QuantumState

Z = qcore.weighted_z([1])
ZERO, ONE, PLUS = QuantumState.basis(1, 0), QuantumState.basis(1, 1), QuantumState.plus(1)


def random_subunit(n, rng, lo=0.05):
    a = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
    h = a + a.conj().T
    h *= rng.uniform(lo, 1.0) / np.max(np.abs(np.linalg.eigvalsh(h)))
    return HermitianOperator.from_matrix(h)


def xi_terms_n2():
    return [t.re_u for t in xi_decomposition(qcore.weighted_z([1, 1])).terms]


class TestPovm:
    def test_z(self):
        p = measure.povm_from_re_u(Z)
        assert p.pi_plus.diagonal.tolist() == [1, 0]
        assert p.pi_minus.diagonal.tolist() == [0, 1]

    def test_zero_operator(self):
        p = measure.povm_from_re_u(HermitianOperator.zero(2))
        assert np.allclose(p.pi_plus.diagonal, 0.5) and np.allclose(p.pi_minus.diagonal, 0.5)

    def test_xi1_minus_projects_on_11(self):
        xi1, _ = xi_terms_n2()
        assert measure.povm_from_re_u(xi1).pi_minus.diagonal.tolist() == [0, 0, 0, 1]

    def test_norm_violation(self):
        with pytest.raises(measure.NormError):
            measure.povm_from_re_u(2 * Z)

    def test_inverse_examples(self):
        p0 = measure.BinaryPovm(HermitianOperator(1, diag=np.array([1.0, 0.0])), HermitianOperator(1, diag=np.array([0.0, 1.0])))
        assert measure.re_u_from_povm(p0).re_u.diagonal.tolist() == [1, -1]
        half = HermitianOperator.identity(1, 0.5)
        assert np.allclose(measure.re_u_from_povm(measure.BinaryPovm(half, half)).re_u.diagonal, 0)

    def test_rejects_invalid(self):
        with pytest.raises(ValueError):
            measure.BinaryPovm(HermitianOperator(1, diag=np.array([1.5, 0.0])), HermitianOperator(1, diag=np.array([-0.5, 1.0])))

    @given(seed=st.integers(0, 2**32 - 1))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        w, v = np.linalg.eigh(a + a.conj().T)
        pi_plus = HermitianOperator.from_matrix((v * np.clip(w, 0, 1)) @ v.conj().T)
        povm = measure.BinaryPovm(pi_plus, HermitianOperator.identity(2) - pi_plus)
        back = measure.povm_from_re_u(measure.re_u_from_povm(povm))
        assert back.pi_plus.max_abs_difference(povm.pi_plus) < 1e-10
        assert back.pi_minus.max_abs_difference(povm.pi_minus) < 1e-10


class TestHadamardTest:
    def test_probabilities(self):
        assert measure.ht_probabilities(Z, ZERO) == (1.0, 0.0)
        assert measure.ht_probabilities(Z, PLUS) == pytest.approx((0.5, 0.5))

    def test_xi2_probabilities(self):
        _, xi2 = xi_terms_n2()
        psi = QuantumState.from_vector([1, 1, 0, 0])
        assert measure.ht_probabilities(xi2, psi) == pytest.approx((0.5, 0.5))

    def test_variance(self):
        assert measure.ht_variance(Z, PLUS, 1) == pytest.approx(1.0)
        assert measure.ht_variance(Z, ZERO, 10) == 0.0
        with pytest.raises(ValueError):
            measure.ht_variance(Z, PLUS, 0)

    def test_dimension_mismatch(self):
        with pytest.raises(qcore.DimensionError):
            measure.ht_probabilities(Z, QuantumState.plus(2))

    def test_sample_deterministic_edge(self):
        assert measure.ht_sample(Z, ZERO, 50, seed=1).counts == {1: 50, -1: 0}
        a = measure.ht_sample(Z, PLUS, 1000, seed=9)
        assert a == measure.ht_sample(Z, PLUS, 1000, seed=9)

    def test_sample_concentration(self):
        m = 100_000
        rec = measure.ht_sample(Z, PLUS, m, seed=3)
        assert abs(rec.mean) < 4 / np.sqrt(m)

    def test_empirical_variance(self, rng):
        op = random_subunit(2, rng)
        psi = QuantumState.random(2, rng)
        m = 100_000
        rec = measure.ht_sample(op, psi, m, seed=5)
        mean = rec.mean
        emp = 1 - mean**2  # per-shot variance of the +-1 outcome
        exact = measure.ht_variance(op, psi, 1)
        e = qcore.expectation(op, psi)
        # delta method: Var(1 - xbar^2) ~ 4 e^2 (1 - e^2) / m
        se = np.sqrt(4 * e * e * (1 - e * e) / m) + 1 / m
        assert abs(emp - exact) < 3 * se

    def test_sample_csv(self):
        rec = measure.SampleRecord({1: 3, -1: 2}, 5)
        assert rec.to_csv() == "outcome,count\n1,3\n-1,2\n"

    @given(seed=st.integers(0, 2**32 - 1))
    def test_variance_bounds_von_neumann(self, seed):
        rng = np.random.default_rng(seed)
        op = random_subunit(2, rng)
        psi = QuantumState.random(2, rng)
        assert measure.ht_variance(op, psi, 1) >= qcore.von_neumann_variance(op, psi) - 1e-12

    def test_reflection_saturates(self, rng):
        psi = QuantumState.random(2, rng)
        op = qcore.weighted_z([1, 0])
        assert measure.ht_variance(op, psi, 1) == pytest.approx(qcore.von_neumann_variance(op, psi), abs=1e-12)


class TestEchoVerification:
    def test_eigenstate(self):
        st_ = measure.ev_statistics(Z, ZERO, 1)
        assert st_ == pytest.approx((1, 0, 0, 0))

    def test_plus(self):
        st_ = measure.ev_statistics(Z, PLUS, 4)
        assert st_ == pytest.approx((0.25, 0.25, 0.5, 0.5 / 4))

    def test_difference_is_re_u(self, rng):
        op = random_subunit(2, rng)
        psi = QuantumState.random(2, rng)
        st_ = measure.ev_statistics(op, psi, 1)
        assert st_.p_plus - st_.p_minus == pytest.approx(qcore.expectation(op, psi), abs=1e-10)

    def test_accepts_dense_unitary(self, rng):
        op = random_subunit(1, rng)
        psi = QuantumState.random(1, rng)
        u = measure.as_re_u(op).unitary_matrix()
        assert measure.ev_statistics(u, psi, 1) == pytest.approx(measure.ev_statistics(op, psi, 1))

    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3))
    def test_sandwich(self, seed, n):
        rng = np.random.default_rng(seed)
        op = random_subunit(n, rng)
        psi = QuantumState.random(n, rng)
        ht = measure.ht_variance(op, psi, 1)
        ev = measure.ev_statistics(op, psi, 1).variance
        assert ht / 2 - 1e-10 <= ev <= ht + 1e-10


class TestControlFreeEv:
    # Re(U) = [(XX+YY) + s(ZZ+II)]/2 is a reflection with |00> at eigenvalue s
    @pytest.mark.parametrize("sign,phi_ref", [(1, 0.0), (-1, np.pi)])
    def test_reference_phase(self, rng, sign, phi_ref):
        op = qcore.xxyy_reflection("zz", sign)
        ref = QuantumState.basis(2, 0)
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        v[0] = 0
        psi = QuantumState.from_vector(v)
        got = measure.cfev_expectation(op, psi, ref, phi_ref)
        u = measure.as_re_u(op).unitary_matrix()
        direct = float(np.real(np.exp(-1j * phi_ref) * np.vdot(psi.amplitudes, u @ psi.amplitudes)))
        assert got == pytest.approx(direct, abs=1e-12)
        assert got == pytest.approx(sign * qcore.expectation(op, psi), abs=1e-12)

    def test_eigenstate_phase(self):
        # U = diag(e^{i a}, e^{i b}) with reference on a third level
        phases = np.array([0.3, 1.1, -0.7, 2.0])
        u = np.diag(np.exp(1j * phases))
        psi, ref = QuantumState.basis(2, 1), QuantumState.basis(2, 2)
        assert measure.cfev_expectation(u, psi, ref, -0.7) == pytest.approx(np.cos(1.1 + 0.7))

    def test_rejects_non_eigenstate(self):
        with pytest.raises(ValueError, match="eigenstate"):
            measure.cfev_expectation(qcore.xx_plus_yy() / 2, QuantumState.basis(2, 1), QuantumState.basis(2, 0), 0.0)

    def test_rejects_overlap(self):
        op = qcore.xxyy_reflection("zz", 1)
        with pytest.raises(ValueError, match="orthogonal"):
            measure.cfev_expectation(op, QuantumState.from_vector([1, 1, 0, 0]), QuantumState.basis(2, 0), 0.0)


class TestParallelEv:
    def test_single_eigenstate(self):
        t = measure.parallel_ev_probabilities([Z], ZERO)
        assert dict(zip(t.signs[:, 0], t.probabilities)) == pytest.approx({1: 1.0, -1: 0.0})

    def test_k1_matches_ev(self, rng):
        op = qcore.xxyy_reflection("z", 1)
        psi = QuantumState.random(2, rng)
        t = measure.parallel_ev_probabilities([op], psi)
        ev = measure.ev_statistics(op, psi, 1)
        assert t.probabilities == pytest.approx([ev.p_plus, ev.p_minus])
        est = measure.parallel_ev_estimate_and_variance(t, 0, 1)
        assert est.estimate == pytest.approx(ev.p_plus - ev.p_minus)
        assert est.variance == pytest.approx(ev.variance, abs=1e-12)

    def test_two_z(self):
        t = measure.parallel_ev_probabilities([qcore.weighted_z([1, 0]), qcore.weighted_z([0, 1])], QuantumState.basis(2, 0))
        assert t.probabilities.tolist() == pytest.approx([1, 0, 0, 0])

    def test_rejects_non_commuting(self):
        x = HermitianOperator.from_matrix(np.array([[0, 1], [1, 0]]))
        with pytest.raises(ValueError, match="commute"):
            measure.parallel_ev_probabilities([Z, x], PLUS)

    def test_rejects_non_reflection(self):
        with pytest.raises(ValueError, match="identity"):
            measure.parallel_ev_probabilities([Z / 2], PLUS)

    def test_estimate_exact_and_non_decreasing(self, rng):
        from shotbudget.bench import random_reflection_set

        refl = random_reflection_set(3, 3, rng)
        psi = QuantumState.random(3, rng)
        u0 = qcore.expectation(refl[0], psi)
        prev = -np.inf
        for k in (1, 2, 3):
            est = measure.parallel_ev_estimate_and_variance(measure.parallel_ev_probabilities(refl[:k], psi), 0, 1)
            assert est.estimate == pytest.approx(u0, abs=1e-9)
            assert est.variance >= prev - 1e-12
            # propagated variance = 2^{K-1} (1 + u^2)/2 - u^2
            assert est.variance == pytest.approx(2 ** (k - 1) * (1 + u0**2) / 2 - u0**2, abs=1e-10)
            prev = est.variance

    def test_closed_form_reported(self, rng):
        psi = QuantumState.random(1, rng)
        t = measure.parallel_ev_probabilities([Z], psi)
        est = measure.parallel_ev_estimate_and_variance(t, 0, 1)
        u = qcore.expectation(Z, psi)
        assert est.variance_closed_form == pytest.approx((1 + u**2) / 2 - u)


def _cases(n_cases=20):
    rng = np.random.default_rng(777)
    for i in range(n_cases):
        n = 1 + i % 3
        yield i, random_subunit(n, rng), QuantumState.random(n, rng)


@pytest.mark.parametrize("i,op,psi", list(_cases()))
def test_chi_square_ht_and_ev(i, op, psi):
    m = 100_000
    ht = measure.ht_sample(op, psi, m, seed=i)
    p = np.array(measure.ht_probabilities(op, psi))
    assert stats.chisquare([ht.counts[1], ht.counts[-1]], p * m).pvalue > 1e-4
    ev = measure.ev_sample(op, psi, m, seed=i)
    s = measure.ev_statistics(op, psi, 1)
    q = np.array([s.p_plus, s.p_minus, s.p_zero])
    keep = q > 0
    obs = np.array([ev.counts[1], ev.counts[-1], ev.counts[0]])
    assert stats.chisquare(obs[keep], q[keep] / q[keep].sum() * m).pvalue > 1e-4
