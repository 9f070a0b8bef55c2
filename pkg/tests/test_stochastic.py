import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochrb.errors import ConfigurationError
from stochrb.stochastic import (
    Y_MAX,
    build_double_orthogonal_basis,
    draw_mc_samples,
    sg_expectation_vector,
    sg_mode_reaction_coefficients,
)


def test_samples_shape_and_moments():
    s = draw_mc_samples(1024, 5, 7)
    y = s.samples
    assert y.shape == (1024, 5)
    assert np.all(np.abs(y) <= Y_MAX)
    assert np.all(np.abs(y.mean(axis=0)) <= 4 / np.sqrt(1024))
    assert np.all((y.var(axis=0, ddof=1) > 0.8) & (y.var(axis=0, ddof=1) < 1.2))


def test_samples_deterministic():
    a = draw_mc_samples(64, 5, 3).samples
    b = draw_mc_samples(64, 5, 3).samples
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, draw_mc_samples(64, 5, 4).samples)


def test_too_few_samples():
    with pytest.raises(ConfigurationError):
        draw_mc_samples(1, 5, 0)


def test_d2_nodes():
    b = build_double_orthogonal_basis(2, 1)
    np.testing.assert_allclose(b.diag_values, [-3 / np.sqrt(5), 0, 3 / np.sqrt(5)], atol=1e-14)
    gauss = np.polynomial.legendre.leggauss(3)[0] * np.sqrt(3)
    np.testing.assert_allclose(b.diag_values, gauss, atol=1e-14)


def test_d0():
    b = build_double_orthogonal_basis(0, 4)
    np.testing.assert_array_equal(b.Q, [[1.0]])
    np.testing.assert_array_equal(b.diag_values, [0.0])
    np.testing.assert_array_equal(sg_expectation_vector(b), [1.0])
    np.testing.assert_array_equal(sg_mode_reaction_coefficients(b, [0, 0, 0, 0]), 0)


@pytest.mark.parametrize("d", [0, 1, 2, 3, 5])
def test_double_orthogonality(d):
    b = build_double_orthogonal_basis(d, 1)
    np.testing.assert_allclose(b.Q.T @ b.Q, np.eye(d + 1), atol=1e-12)
    x, w = np.polynomial.legendre.leggauss(d + 2)
    y, w = Y_MAX * x, w / 2
    P = b.evaluate_1d(y)
    np.testing.assert_allclose((P * w[:, None]).T @ P, np.eye(d + 1), atol=1e-12)
    np.testing.assert_allclose((P * (w * y)[:, None]).T @ P, np.diag(b.diag_values), atol=1e-12)
    e = b.expectation_weights
    assert np.all(e >= 0)
    assert np.sum(e**2) == pytest.approx(1.0, abs=1e-12)


def test_reaction_coefficients():
    b = build_double_orthogonal_basis(2, 2)
    np.testing.assert_allclose(sg_mode_reaction_coefficients(b, [0, 0]), [-3 / np.sqrt(5)] * 2, atol=1e-14)
    assert sg_mode_reaction_coefficients(b, [1, 2])[0] == 0
    with pytest.raises(IndexError):
        sg_mode_reaction_coefficients(b, [3, 0])


def test_expectation_vector():
    b1 = build_double_orthogonal_basis(2, 1)
    np.testing.assert_allclose(sg_expectation_vector(b1), b1.Q[0])
    b5 = build_double_orthogonal_basis(2, 5)
    E = sg_expectation_vector(b5)
    assert E.size == 243
    assert np.sum(E**2) == pytest.approx(1.0, abs=1e-12)


def test_moment_reproduction():
    # g(y) = y1^2 has E[g] = 1; its coefficients are E[g psi_j], computed by tensor Gauss quadrature
    b = build_double_orthogonal_basis(2, 2)
    x, w = np.polynomial.legendre.leggauss(4)
    y1, w1 = Y_MAX * x, w / 2
    Y = np.array([(a, c) for a in y1 for c in y1])
    W = np.outer(w1, w1).ravel()
    coef = (b.evaluate(Y) * (W * Y[:, 0] ** 2)[:, None]).sum(axis=0)
    assert coef @ sg_expectation_vector(b) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(0, 4), st.integers(1, 3), st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_tensor_basis_orthonormal(d, K, seed):
    b = build_double_orthogonal_basis(d, K)
    rng = np.random.default_rng(seed)
    m, n = rng.integers(b.M_SG, size=2)
    x, w = np.polynomial.legendre.leggauss(d + 2)
    y1, w1 = Y_MAX * x, w / 2
    grids = np.meshgrid(*([y1] * K), indexing="ij")
    Y = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.meshgrid(*([w1] * K), indexing="ij"), axis=0).ravel()
    psi = b.evaluate(Y)
    assert (W * psi[:, m] * psi[:, n]).sum() == pytest.approx(float(m == n), abs=1e-12)
