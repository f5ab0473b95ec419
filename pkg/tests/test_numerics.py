import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import expit

from src.errors import ContractViolationError, DegenerateInputError, DimensionMismatchError
from src.numerics import (covariance, entropy, l2_norm, linf_norm, residual_norms, sigmoid, softmax,
                          symmetric_eig)


def random_symmetric(rng, d):
    a = rng.normal(size=(d, d))
    return (a + a.T) / 2.0


class TestSymmetricEig:
    def test_residuals_and_trace_on_random_matrices(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            m = random_symmetric(rng, int(rng.integers(1, 9)))
            dec = symmetric_eig(m)
            assert np.max(residual_norms(m, dec)) <= 1e-8
            assert abs(dec.eigenvalues.sum() - np.trace(m)) <= 1e-8

    def test_converges_on_ill_conditioned_covariance(self):
        # Shaped like a trained encoder's embedding covariance: d = 32, norm ~5, eigenvalues 4 down to 1e-4
        rng = np.random.default_rng(8)
        q, _ = np.linalg.qr(rng.normal(size=(32, 32)))
        spectrum = np.geomspace(4.0, 1e-4, 32)
        m = (q * spectrum) @ q.T
        m = (m + m.T) / 2.0
        dec = symmetric_eig(m)
        assert np.max(residual_norms(m, dec)) <= 1e-8
        assert_allclose(dec.eigenvalues, spectrum, rtol=1e-6, atol=1e-12)

    def test_converges_on_sample_covariance(self):
        rng = np.random.default_rng(9)
        scales = np.geomspace(2.0, 0.01, 32)
        data = np.tanh(rng.normal(size=(2000, 32)) * scales + 0.3)
        m = covariance(data)
        dec = symmetric_eig(m)
        assert np.max(residual_norms(m, dec)) <= 1e-8
        assert abs(dec.eigenvalues.sum() - np.trace(m)) <= 1e-8

    def test_eigenvectors_orthonormal(self):
        m = random_symmetric(np.random.default_rng(1), 7)
        q = symmetric_eig(m).eigenvectors
        assert_allclose(q.T @ q, np.eye(7), atol=1e-8)

    def test_ordered_by_magnitude(self):
        dec = symmetric_eig(np.diag([1.0, -5.0, 3.0]))
        assert_allclose(dec.eigenvalues, [-5.0, 3.0, 1.0])
        assert_allclose(np.abs(dec.vector(0)), [0.0, 1.0, 0.0])

    def test_reconstruct(self):
        m = random_symmetric(np.random.default_rng(2), 5)
        assert_allclose(symmetric_eig(m).reconstruct(), m, atol=1e-10)

    def test_matches_numpy_spectrum(self):
        m = random_symmetric(np.random.default_rng(4), 6)
        ours = np.sort(symmetric_eig(m).eigenvalues)
        assert_allclose(ours, np.linalg.eigvalsh(m), atol=1e-9)

    def test_deterministic_signs(self):
        m = random_symmetric(np.random.default_rng(5), 4)
        q = symmetric_eig(m).eigenvectors
        idx = np.argmax(np.abs(q), axis=0)
        assert np.all(q[idx, np.arange(4)] > 0)

    def test_non_symmetric_rejected(self):
        with pytest.raises(ContractViolationError):
            symmetric_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_non_square_rejected(self):
        with pytest.raises(DimensionMismatchError):
            symmetric_eig(np.ones((2, 3)))


class TestCovariance:
    def test_population_divisor(self):
        x = np.random.default_rng(0).normal(size=(30, 4))
        assert_allclose(covariance(x), np.cov(x.T, bias=True), atol=1e-12)

    def test_exactly_symmetric(self):
        c = covariance(np.random.default_rng(1).normal(size=(20, 5)))
        assert np.array_equal(c, c.T)

    def test_needs_two_samples(self):
        with pytest.raises(DegenerateInputError):
            covariance(np.ones((1, 3)))


class TestActivations:
    def test_sigmoid_values(self):
        assert_allclose(sigmoid(np.array([0.0, 2.0])), [0.5, 0.8807970779778823])

    def test_sigmoid_extreme_inputs_finite(self):
        out = sigmoid(np.array([-1000.0, 1000.0]))
        assert np.all(np.isfinite(out))
        assert_allclose(out, [0.0, 1.0])

    def test_sigmoid_matches_expit(self):
        z = np.linspace(-30.0, 30.0, 121)
        assert_allclose(sigmoid(z), expit(z), rtol=1e-12)

    def test_softmax_mask(self):
        p = softmax(np.array([[1.0, 2.0, 3.0]]), axis=1, mask=np.array([[True, False, True]]))
        assert p[0, 1] == 0.0
        assert_allclose(p.sum(), 1.0)
        assert_allclose(p[0, 2] / p[0, 0], np.e ** 2)

    def test_entropy_zero_log_zero(self):
        assert entropy(np.array([1.0, 0.0])) == 0.0
        assert_allclose(entropy(np.array([0.5, 0.5])), np.log(2.0))


class TestNorms:
    def test_closed_form(self):
        assert l2_norm([3.0, 4.0]) == 5.0
        assert linf_norm([3.0, -4.0]) == 4.0
        assert linf_norm([]) == 0.0
