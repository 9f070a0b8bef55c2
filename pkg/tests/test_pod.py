import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import subspace_angles

from stochrb.errors import ConfigurationError
from stochrb.linalg import BlockCholeskyFactor
from stochrb.pod import compute_pod, projection_error


def _spd(n, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    return A @ A.T + n * np.eye(n)


def test_diagonal_case():
    pod = compute_pod(np.array([[2.0, 0.0], [0.0, 1.0]]), np.eye(2), np.eye(2))
    np.testing.assert_allclose(pod.singular_values, [2, 1])
    np.testing.assert_allclose(pod.Phi[:, 0], [1, 0])


def test_weighted_hand_computation():
    S = np.diag([4.0, 1.0])
    pod = compute_pod(np.array([[2.0, 0.0], [0.0, 1.0]]), S, np.eye(2))
    np.testing.assert_allclose(pod.singular_values, [4, 1])
    np.testing.assert_allclose(pod.Phi[:, 0], [0.5, 0])
    assert pod.Phi[:, 0] @ S @ pod.Phi[:, 0] == pytest.approx(1.0)


def test_scaling_by_n():
    U = np.random.default_rng(0).standard_normal((6, 9))
    pod = compute_pod(U, np.eye(6), np.eye(9) / 9)
    np.testing.assert_allclose(pod.singular_values, np.linalg.svd(U / 3, compute_uv=False), rtol=1e-12)
    # scalar and diagonal weights take the same path as the full matrix
    np.testing.assert_allclose(compute_pod(U, np.eye(6), 1 / 9).singular_values, pod.singular_values, rtol=1e-12)
    np.testing.assert_allclose(compute_pod(U, np.eye(6), np.full(9, 1 / 9)).singular_values, pod.singular_values, rtol=1e-12)


def test_projection_error_limits():
    rng = np.random.default_rng(1)
    U, S = rng.standard_normal((5, 8)), _spd(5, 1)
    pod = compute_pod(U, S, 1 / 8)
    assert projection_error(U, S, 1 / 8, pod, pod.R_max) <= 1e-20
    assert projection_error(U, S, 1 / 8, pod, 0) == pytest.approx(np.einsum("in,ij,jn->", U, S, U) / 8)
    with pytest.raises(IndexError):
        projection_error(U, S, 1 / 8, pod, 6)


@given(st.integers(2, 9), st.integers(1, 12), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_optimality_identity(M, N, seed):
    rng = np.random.default_rng(seed)
    U, S = rng.standard_normal((M, N)), _spd(M, seed)
    W = rng.uniform(0.1, 1.0, N)
    pod = compute_pod(U, S, W)
    assert np.all(np.diff(pod.singular_values) <= 1e-14 * pod.singular_values[0])
    np.testing.assert_allclose(pod.Phi.T @ S @ pod.Phi, np.eye(pod.R_max), atol=1e-10)
    total = np.sum(pod.singular_values**2)
    prev = np.inf
    for R in range(pod.R_max + 1):
        err = projection_error(U, S, W, pod, R)
        assert abs(err - np.sum(pod.singular_values[R:] ** 2)) <= 1e-10 * total
        assert err <= prev + 1e-12 * total
        prev = err


def test_column_reordering_invariance():
    rng = np.random.default_rng(4)
    U, S = rng.standard_normal((10, 7)), _spd(10, 4)
    a = compute_pod(U, S, 1 / 7)
    b = compute_pod(U[:, rng.permutation(7)], S, 1 / 7)
    np.testing.assert_allclose(a.singular_values, b.singular_values, rtol=1e-12)
    St = np.linalg.cholesky(S).T
    for R in range(1, 7):
        ang = subspace_angles(St @ a.Phi[:, :R], St @ b.Phi[:, :R])
        assert np.max(ang) <= 1e-8


def test_block_weight_matches_dense():
    rng = np.random.default_rng(5)
    G = _spd(4, 5)
    U = rng.standard_normal((12, 3))
    a = compute_pod(U, BlockCholeskyFactor(G, 3), 1 / 3)
    b = compute_pod(U, np.kron(np.eye(3), G), 1 / 3)
    np.testing.assert_allclose(a.singular_values, b.singular_values, rtol=1e-12)
    np.testing.assert_allclose(np.abs(a.Phi.T @ np.kron(np.eye(3), G) @ b.Phi), np.eye(3), atol=1e-10)


def test_rank_warning():
    U = np.outer(np.arange(1.0, 5.0), np.ones(3))
    with pytest.warns(RuntimeWarning, match="numerical rank 1"):
        pod = compute_pod(U, np.eye(4), 1.0)
    assert pod.numerical_rank == 1


def test_rejects_bad_weights():
    with pytest.raises(ConfigurationError):
        compute_pod(np.ones((2, 2)), np.diag([1.0, -1.0]), 1.0)
    with pytest.raises(ConfigurationError):
        compute_pod(np.ones((2, 2)), np.eye(2), -1.0)
