import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad, quad_vec
from scipy.special import gamma

from fracevo.families import (check_envelope, cosine_family, cosine_family_grid,
                              estimate_envelope, rl_family, rl_family_derivative,
                              rl_family_grid, sine_family, sine_family_grid)
from fracevo.grid import TimeGrid
from fracevo.mlfunc import ml_scalar
from fracevo.quadrature import fractional_integral

from conftest import ml_eig

MATS = [np.array([[-1.0, 0.0], [0.0, -2.0]]), np.array([[-1.0, 1.0], [0.0, -1.0]]),
        np.array([[0.0, 1.0], [-2.0, 0.0]]), np.array([[0.3, -0.5], [0.8, -1.2]])]


class TestCosine:
    def test_identity_at_zero(self):
        np.testing.assert_array_equal(cosine_family(1.3, MATS[2], 0.0), np.eye(2))

    def test_classical(self):
        w0, t = 1.7, 0.9
        np.testing.assert_allclose(cosine_family(2, -w0**2 * np.eye(2), t),
                                   math.cos(w0 * t) * np.eye(2), atol=1e-13)

    def test_diagonal(self):
        C = cosine_family(1.5, MATS[0], 1.0)
        np.testing.assert_allclose(np.diag(C), [ml_scalar(1.5, 1, -1), ml_scalar(1.5, 1, -2)], atol=1e-14)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            cosine_family(1.5, MATS[0], -1.0)


class TestSine:
    def test_zero(self):
        np.testing.assert_array_equal(sine_family(1.5, MATS[3], 0.0), 0.0)

    def test_classical(self):
        np.testing.assert_allclose(sine_family(2, -np.eye(2), 1.2), math.sin(1.2) * np.eye(2), atol=1e-13)

    def test_integral_of_cosine(self):
        A = MATS[1]
        ref, _ = quad_vec(lambda s: cosine_family(1.7, A, s), 0, 0.5, epsabs=1e-14, epsrel=1e-13)
        np.testing.assert_allclose(sine_family(1.7, A, 0.5), ref, atol=1e-12)


class TestRL:
    def test_equals_sine_at_two(self):
        np.testing.assert_allclose(rl_family(2, MATS[3], 0.8), sine_family(2, MATS[3], 0.8), atol=1e-15)

    def test_zero_operator(self):
        np.testing.assert_allclose(rl_family(1.5, np.zeros((2, 2)), 4.0), 2 / gamma(1.5) * np.eye(2))

    def test_discrete_fractional_integral_oracle(self):
        # T = I^{alpha-1} C, evaluated with a fine product rule on C samples
        g = TimeGrid(1.0, 4096)
        C = cosine_family_grid(1.5, [[-2.0]], g).values[:, 0, 0]
        ref = fractional_integral(0.5, C, g)[-1]
        assert rl_family(1.5, [[-2.0]], 1.0)[0, 0] == pytest.approx(ref, abs=1e-6)

    def test_grid_matches_pointwise(self):
        g = TimeGrid(1.5, 6)
        T = rl_family_grid(1.4, MATS[2], g).values
        for i, t in enumerate(g.nodes):
            np.testing.assert_allclose(T[i], rl_family(1.4, MATS[2], t), atol=1e-13)


class TestRLDerivative:
    def test_classical(self):
        np.testing.assert_allclose(rl_family_derivative(2, MATS[2], 0.7), cosine_family(2, MATS[2], 0.7),
                                   atol=1e-13)

    def test_zero_operator(self):
        np.testing.assert_allclose(rl_family_derivative(1.5, np.zeros((1, 1)), 1.0), 1 / gamma(0.5))

    def test_finite_difference_oracle(self):
        h = 1e-5
        fd = (rl_family(1.8, [[-1.0]], 0.7 + h) - rl_family(1.8, [[-1.0]], 0.7 - h)) / (2 * h)
        np.testing.assert_allclose(rl_family_derivative(1.8, [[-1.0]], 0.7), fd, atol=1e-8)

    @pytest.mark.parametrize("alpha,t", [(1.25, 0.4), (1.6, 1.1), (1.9, 2.0)])
    def test_two_forms_agree(self, alpha, t):
        A = MATS[3]
        np.testing.assert_allclose(rl_family_derivative(alpha, A, t, form="convolution"),
                                   rl_family_derivative(alpha, A, t), atol=1e-9)

    def test_requires_positive_time(self):
        with pytest.raises(ValueError):
            rl_family_derivative(1.5, MATS[0], 0.0)


class TestInvariants:
    @pytest.mark.parametrize("A", MATS)
    def test_commutation(self, A):
        for t in (0.3, 1.0, 2.5):
            C = cosine_family(1.6, A, t)
            err = np.linalg.norm(A @ C - C @ A, 2)
            assert err <= 1e-12 * np.linalg.norm(A, 2) * max(1.0, np.linalg.norm(C, 2))

    def test_derivative_chain(self):
        # d/dt C = A T
        A, t, h = MATS[3], 0.9, 1e-5
        fd = (cosine_family(1.5, A, t + h) - cosine_family(1.5, A, t - h)) / (2 * h)
        np.testing.assert_allclose(fd, A @ rl_family(1.5, A, t), atol=1e-8)

    def test_eigen_oracle(self):
        A = MATS[3]
        np.testing.assert_allclose(cosine_family(1.3, A, 1.4), ml_eig(1.3, 1, A, 1.4**1.3), atol=1e-12)

    def test_laplace_transform(self):
        a, alpha, lam = -1.0, 1.5, 3.0
        val, _ = quad(lambda t: math.exp(-lam * t) * ml_scalar(alpha, 1, a * t**alpha), 0, 15,
                      limit=200)
        assert val == pytest.approx(lam ** (alpha - 1) / (lam**alpha - a), rel=1e-6)

    def test_integral_identity(self):
        g = TimeGrid(1.0, 512)
        A = MATS[2]
        C = cosine_family_grid(1.5, A, g).values
        lhs = C - np.eye(2)
        rhs = np.einsum("ab,mbc->mac", A, fractional_integral(1.5, C, g))
        assert np.abs(lhs - rhs).max() < 1e-4


class TestEnvelope:
    def test_spectral_rate(self):
        env = estimate_envelope(1.5, MATS[2], TimeGrid(1.0, 64))
        assert env.omega == pytest.approx(2 ** (1 / 3) * 0.5, rel=1e-12)
        assert env.M >= 1.0

    def test_stable_matrix(self):
        env = estimate_envelope(1.5, MATS[0], TimeGrid(3.0, 64))
        assert env.omega == 0.0 and env.M == pytest.approx(1.0)

    def test_certified_on_grid(self):
        g = TimeGrid(2.0, 128)
        for A in MATS:
            assert check_envelope(1.7, A, g, estimate_envelope(1.7, A, g)).size == 0


@settings(max_examples=25, deadline=None)
@given(st.floats(1.05, 2.0), st.floats(0.0, 2.0),
       st.lists(st.floats(-1.5, 1.5), min_size=4, max_size=4))
def test_sine_grid_is_time_times_e2(alpha, t, entries):
    A = np.reshape(entries, (2, 2))
    g = TimeGrid(max(t, 0.1), 4)
    S = sine_family_grid(alpha, A, g).values
    for i, s in enumerate(g.nodes):
        np.testing.assert_allclose(S[i], sine_family(alpha, A, s), atol=1e-12)
