"""P1 finite elements on a uniform triangulation of (-0.5, 0.5)^2.

Boundary nodes are eliminated; every matrix and vector lives on the interior
degrees of freedom, numbered row-major (x1 fastest).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .random_field import KlExpansion

DOMAIN = (-0.5, 0.5)
OUTPUT_BOX = (0.0, 0.5)


@dataclass(frozen=True)
class Triangulation:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_node_flags: np.ndarray
    n_cells_per_side: int

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_node_flags)

    @property
    def n_dofs(self) -> int:
        return int((~self.boundary_node_flags).sum())

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_mesh(n_cells_per_side: int) -> Triangulation:
    """Uniform mesh; every square cell is cut along its SW-NE diagonal."""
    n = int(n_cells_per_side)
    if n != n_cells_per_side or n < 2 or n % 2:
        raise ConfigurationError(
            f"n_cells_per_side must be an even integer >= 2 (got {n_cells_per_side}); "
            "evenness keeps x1=0, x2=0 on mesh lines"
        )
    lo, hi = DOMAIN
    t = np.linspace(lo, hi, n + 1)
    X1, X2 = np.meshgrid(t, t, indexing="xy")
    nodes = np.column_stack([X1.ravel(), X2.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # idx[j, i]: x2 index j, x1 index i
    sw = idx[:-1, :-1].ravel()
    se = idx[:-1, 1:].ravel()
    nw = idx[1:, :-1].ravel()
    ne = idx[1:, 1:].ravel()
    tris = np.concatenate([np.column_stack([sw, se, ne]), np.column_stack([sw, ne, nw])])
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    bnd = ((ii == 0) | (ii == n) | (jj == 0) | (jj == n)).ravel()
    return Triangulation(nodes=nodes, triangles=tris, boundary_node_flags=bnd, n_cells_per_side=n)


def _p1_geometry(mesh: Triangulation):
    """Areas and constant gradients of the three local hat functions."""
    p = mesh.nodes[mesh.triangles]  # (T, 3, 2)
    area = mesh.signed_areas()
    # grad phi_a = rot90(p_b - p_c) / (2 area), (a, b, c) cyclic
    grads = np.empty_like(p)
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        e = p[:, b] - p[:, c]
        grads[:, a, 0] = e[:, 1]
        grads[:, a, 1] = -e[:, 0]
    grads /= (2 * area)[:, None, None]
    return area, grads


def _restrict(mesh: Triangulation, rows, cols, vals) -> sp.csr_matrix:
    nn = mesh.nodes.shape[0]
    full = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(nn, nn)).tocsr()
    inner = mesh.interior
    out = full[inner][:, inner].tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def _local_index(mesh: Triangulation):
    t = mesh.triangles
    rows = np.repeat(t[:, :, None], 3, axis=2)  # rows[T, a, b] = t[T, a]
    cols = np.repeat(t[:, None, :], 3, axis=1)
    return rows, cols


def stiffness_matrix(mesh: Triangulation) -> sp.csr_matrix:
    area, g = _p1_geometry(mesh)
    loc = np.einsum("tad,tbd->tab", g, g) * area[:, None, None]
    return _restrict(mesh, *_local_index(mesh), loc)


def mass_matrix(mesh: Triangulation) -> sp.csr_matrix:
    area, _ = _p1_geometry(mesh)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    loc = area[:, None, None] * ref[None]
    return _restrict(mesh, *_local_index(mesh), loc)


def _edge_midpoints(mesh: Triangulation):
    """Midpoints of the local edges opposite vertex 0, 1, 2 and hat values there."""
    p = mesh.nodes[mesh.triangles]
    mids = np.stack([(p[:, 1] + p[:, 2]) / 2, (p[:, 2] + p[:, 0]) / 2, (p[:, 0] + p[:, 1]) / 2], axis=1)
    # phi_a at midpoint q is 1/2 unless q is opposite a
    vals = 0.5 * (1.0 - np.eye(3))  # vals[q, a]
    return mids, vals


def weighted_mass_matrix(mesh: Triangulation, weight) -> sp.csr_matrix:
    """Mass matrix with a pointwise weight, by the 3-point edge-midpoint rule.

    ``weight`` maps an (n, 2) array of points to n values.
    """
    area, _ = _p1_geometry(mesh)
    mids, vals = _edge_midpoints(mesh)
    T = mids.shape[0]
    w = np.asarray(weight(mids.reshape(-1, 2)), dtype=float).reshape(T, 3)
    loc = np.einsum("tq,qa,qb->tab", w, vals, vals) * (area / 3.0)[:, None, None]
    return _restrict(mesh, *_local_index(mesh), loc)


def convection_matrix(mesh: Triangulation, direction: int) -> sp.csr_matrix:
    """Entries ``int d_p(phi_j) phi_i``; rows are test functions."""
    area, g = _p1_geometry(mesh)
    loc = np.broadcast_to((area / 3.0)[:, None, None], (len(area), 3, 3)) * g[:, None, :, direction]
    return _restrict(mesh, *_local_index(mesh), loc)


def load_vector(mesh: Triangulation) -> np.ndarray:
    area, _ = _p1_geometry(mesh)
    nn = mesh.nodes.shape[0]
    f = np.bincount(mesh.triangles.ravel(), weights=np.repeat(area / 3.0, 3), minlength=nn)
    return f[mesh.interior]


def assemble_output_functional(mesh: Triangulation) -> np.ndarray:
    """Exact integrals of the hat functions over (0, 0.5)^2."""
    lo, hi = OUTPUT_BOX
    cen = mesh.nodes[mesh.triangles].mean(axis=1)
    inside = (cen[:, 0] > lo) & (cen[:, 0] < hi) & (cen[:, 1] > lo) & (cen[:, 1] < hi)
    area, _ = _p1_geometry(mesh)
    nn = mesh.nodes.shape[0]
    tri = mesh.triangles[inside]
    l = np.bincount(tri.ravel(), weights=np.repeat(area[inside] / 3.0, 3), minlength=nn)
    return l[mesh.interior]


@dataclass(frozen=True)
class AffineOperatorSet:
    """Affine pieces of ``A(y, mu) = A0 + sum_k y_k Ay[k] + sum_p mu_p Amu[p]``."""

    A0: sp.csr_matrix
    Ay: tuple[sp.csr_matrix, ...]
    Amu: tuple[sp.csr_matrix, ...]
    f_vec: np.ndarray
    l_vec: np.ndarray
    gram_X: sp.csr_matrix
    mass_L2: sp.csr_matrix

    @property
    def M_FE(self) -> int:
        return self.A0.shape[0]

    @property
    def K(self) -> int:
        return len(self.Ay)

    @property
    def terms(self) -> list[sp.csr_matrix]:
        """All affine terms in the order (A0, Ay..., Amu...)."""
        return [self.A0, *self.Ay, *self.Amu]

    def theta(self, y, mu) -> np.ndarray:
        """Coefficient vector(s) matching :attr:`terms`; batches along leading axes."""
        y = np.asarray(y, dtype=float)
        mu = np.asarray(mu, dtype=float)
        lead = np.broadcast_shapes(y.shape[:-1], mu.shape[:-1])
        y = np.broadcast_to(y, lead + y.shape[-1:])
        mu = np.broadcast_to(mu, lead + mu.shape[-1:])
        return np.concatenate([np.ones(lead + (1,)), y, mu], axis=-1)

    def matrix(self, y, mu) -> sp.csr_matrix:
        A = self.A0.copy()
        for yk, Ak in zip(np.atleast_1d(y), self.Ay):
            A = A + yk * Ak
        for mp, Ap in zip(np.atleast_1d(mu), self.Amu):
            A = A + mp * Ap
        return A.tocsr()


def assemble_operators(mesh: Triangulation, kl: KlExpansion, kappa0: float, sigma: float) -> AffineOperatorSet:
    K_stiff = stiffness_matrix(mesh)
    M = mass_matrix(mesh)
    A0 = (K_stiff - kappa0 * M).tocsr()
    Ay = []
    for k in range(kl.K):
        scale = sigma * np.sqrt(kl.lambdas[k])
        Ay.append((scale * weighted_mass_matrix(mesh, lambda x, k=k: kl.eigenfunction(k, x))).tocsr())
    Amu = tuple(convection_matrix(mesh, p) for p in range(2))
    return AffineOperatorSet(
        A0=A0,
        Ay=tuple(Ay),
        Amu=Amu,
        f_vec=load_vector(mesh),
        l_vec=assemble_output_functional(mesh),
        gram_X=(K_stiff + M).tocsr(),
        mass_L2=M,
    )


def assemble_full_operator(mesh: Triangulation, kl: KlExpansion, kappa0: float, sigma: float, y, mu) -> sp.csr_matrix:
    """Assemble the bilinear form directly at one parameter point (no affine split).

    The random terms enter as ``+ y_k a_y^k``, so the reaction weight equals
    ``-kappa(x; -y)``; with symmetric y-distributions this is statistically
    the same field.
    """
    from .random_field import evaluate_kl_field

    y = np.asarray(y, dtype=float)
    area, g = _p1_geometry(mesh)
    stiff = np.einsum("tad,tbd->tab", g, g) * area[:, None, None]
    conv = (area / 3.0)[:, None, None] * np.einsum("d,tbd->tb", np.asarray(mu, float), g)[:, None, :]
    mids, vals = _edge_midpoints(mesh)
    kap = evaluate_kl_field(kl, kappa0, sigma, mids.reshape(-1, 2), -y).reshape(-1, 3)
    react = -np.einsum("tq,qa,qb->tab", kap, vals, vals) * (area / 3.0)[:, None, None]
    return _restrict(mesh, *_local_index(mesh), stiff + conv + react)
