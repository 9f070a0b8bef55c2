import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from stochrb.errors import ConfigurationError
from stochrb.fem import (
    assemble_full_operator,
    assemble_operators,
    assemble_output_functional,
    build_mesh,
    load_vector,
    mass_matrix,
)
from stochrb.linalg import smallest_generalized_eigenvalue, sparse_solve
from stochrb.random_field import build_kl_2d


@pytest.mark.parametrize("n, m_fe", [(2, 1), (16, 225), (32, 961)])
def test_dof_counts(n, m_fe):
    assert build_mesh(n).n_dofs == m_fe


def test_smallest_mesh():
    mesh = build_mesh(2)
    assert len(mesh.triangles) == 8
    assert np.isclose(mesh.signed_areas().sum(), 1.0, rtol=1e-12)


@pytest.mark.parametrize("n", [0, 3, -2])
def test_bad_mesh_size(n):
    with pytest.raises(ConfigurationError):
        build_mesh(n)


@pytest.mark.parametrize("n", [2, 8, 16])
def test_mesh_geometry(n):
    mesh = build_mesh(n)
    areas = mesh.signed_areas()
    assert np.all(areas > 0)
    assert abs(areas.sum() - 1.0) < 1e-12
    on_bdry = np.any(np.isclose(np.abs(mesh.nodes), 0.5), axis=1)
    np.testing.assert_array_equal(on_bdry, mesh.boundary_node_flags)
    assert mesh.n_dofs == (n - 1) ** 2


def test_mesh_conforming():
    mesh = build_mesh(8)
    edges = {}
    for t in mesh.triangles:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            e = tuple(sorted((t[a], t[b])))
            edges[e] = edges.get(e, 0) + 1
    bdry = mesh.boundary_node_flags
    for (a, b), count in edges.items():
        x = mesh.nodes[[a, b]]
        on_boundary_edge = bdry[a] and bdry[b] and np.any(np.isclose(x[0], x[1]) & np.isclose(np.abs(x[0]), 0.5))
        assert count == (1 if on_boundary_edge else 2)


def test_single_hat_load_and_output():
    mesh = build_mesh(2)
    # hat support is 6 triangles of area 1/8; integral = area/3
    assert load_vector(mesh)[0] == pytest.approx(0.25, rel=1e-14)
    # two of the six support triangles lie in the NE quadrant: 2 * (1/8) / 3
    assert assemble_output_functional(mesh)[0] == pytest.approx(1 / 12, rel=1e-14)


def test_output_functional_support(ops16):
    mesh = build_mesh(16)
    x = mesh.nodes[mesh.interior]
    outside = (x[:, 0] < 0) | (x[:, 1] < 0)
    # nodes on x=0 or y=0 lines touch the box; strictly negative coordinates do not
    assert np.all(ops16.l_vec[outside] == 0)
    assert 0 < ops16.l_vec.sum() <= 0.25


def test_output_functional_quadrature_oracle():
    # per-triangle exact integral of each interior hat restricted to the box
    n = 16
    mesh = build_mesh(n)
    ref = np.zeros(len(mesh.nodes))
    for t, a in zip(mesh.triangles, mesh.signed_areas()):
        c = mesh.nodes[t].mean(axis=0)
        if c[0] > 0 and c[1] > 0:
            ref[t] += a / 3
    np.testing.assert_allclose(assemble_output_functional(mesh), ref[mesh.interior], rtol=1e-13, atol=1e-16)


def test_symmetry_and_skewness(ops8):
    for A in (ops8.A0, ops8.gram_X, ops8.mass_L2, *ops8.Ay):
        assert abs(A - A.T).max() <= 1e-13 * abs(A).max()
    for A in ops8.Amu:
        assert abs(A + A.T).max() <= 1e-13 * abs(A).max()


@given(st.lists(st.floats(-10, 10), min_size=49, max_size=49))
@settings(max_examples=25, deadline=None)
def test_convection_energy_vanishes(v):
    from stochrb.fem import convection_matrix

    v = np.asarray(v)
    A = convection_matrix(build_mesh(8), 0)
    assert abs(v @ (A @ v)) <= 1e-12 * max(1.0, v @ v)


def test_coercivity_without_randomness(kl5):
    ops = assemble_operators(build_mesh(8), kl5, -1000.0, 0.0)
    alpha = smallest_generalized_eigenvalue(ops.A0, ops.gram_X)
    assert alpha >= 1 - 1e-10


def test_affine_matches_direct_assembly(ops8, kl5, rng):
    mesh = build_mesh(8)
    for _ in range(3):
        y = rng.uniform(-np.sqrt(3), np.sqrt(3), 5)
        mu = rng.uniform(-200, 200, 2)
        direct = assemble_full_operator(mesh, kl5, -1000.0, 200.0, y, mu)
        diff = abs(direct - ops8.matrix(y, mu)).max()
        assert diff <= 1e-14 * abs(direct).max() * 10


def test_mu_drops_out_of_energy(ops8, rng):
    y = rng.uniform(-1, 1, 5)
    v = rng.standard_normal(ops8.M_FE)
    e0 = v @ (ops8.matrix(y, (0, 0)) @ v)
    e1 = v @ (ops8.matrix(y, (150, -80)) @ v)
    assert abs(e0 - e1) <= 1e-12 * abs(e0)


def test_theta_batches(ops8):
    th = ops8.theta(np.zeros((4, 5)), np.array([1.0, 2.0]))
    assert th.shape == (4, 8)
    np.testing.assert_array_equal(th[:, 0], 1)
    np.testing.assert_array_equal(th[:, -2:], [[1, 2]] * 4)


def test_second_order_output_convergence(kl5):
    y = np.array([0.3, -0.5, 1.0, 0.2, -1.2])
    mu = np.array([40.0, -70.0])
    outs = []
    for n in (8, 16, 32):
        ops = assemble_operators(build_mesh(n), kl5, -1000.0, 200.0)
        outs.append(ops.l_vec @ sparse_solve(ops.matrix(y, mu), ops.f_vec))
    ratio = (outs[1] - outs[0]) / (outs[2] - outs[1])
    assert 3 <= ratio <= 5


def test_mass_matrix_integrates_constants():
    # 1^T M 1 over all nodes is the area; restricted to interior it is smaller
    M = mass_matrix(build_mesh(8))
    assert sp.issparse(M)
    assert 0 < M.sum() < 1


def test_kl_sign_flip_invariance(rng):
    # flipping one eigenfunction and the matching y leaves the operator unchanged
    kl = build_kl_2d(1.0, 3)
    ops = assemble_operators(build_mesh(8), kl, -1000.0, 200.0)
    y = rng.uniform(-1.7, 1.7, 3)
    A_ref = ops.matrix(y, (10, 20))
    y2 = y.copy()
    y2[1] *= -1
    Ay2 = (ops.Ay[0], -ops.Ay[1], ops.Ay[2])
    A2 = ops.A0 + sum(yk * A for yk, A in zip(y2, Ay2)) + 10 * ops.Amu[0] + 20 * ops.Amu[1]
    assert abs(A2 - A_ref).max() <= 1e-12 * abs(A_ref).max()
