"""Monte Carlo sample sets and the double-orthogonal polynomial basis.

Random inputs are i.i.d. uniform on ``[-sqrt(3), sqrt(3)]`` (zero mean, unit
variance). Samples are drawn with numpy's PCG64 bit generator
(``numpy.random.Generator(PCG64(seed)).uniform``), filling an
``(N_xi, K)`` array row-major: sample index outer, dimension inner.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre

from .errors import ConfigurationError

Y_MAX = np.sqrt(3.0)
PRNG_NAME = "numpy.random.PCG64"


@dataclass(frozen=True)
class SampleSet:
    samples: np.ndarray
    seed: int

    @property
    def N_xi(self) -> int:
        return self.samples.shape[0]

    @property
    def K(self) -> int:
        return self.samples.shape[1]


def draw_mc_samples(N_xi: int, K: int, seed: int) -> SampleSet:
    if N_xi < 2:
        raise ConfigurationError("N_xi must be >= 2 (the variance estimator needs two samples)")
    if K < 1:
        raise ConfigurationError("K must be >= 1")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    y = rng.uniform(-Y_MAX, Y_MAX, size=(int(N_xi), int(K)))
    return SampleSet(samples=y, seed=int(seed))


def uniform_points(n: int, lo: float, hi: float, dim: int, seed: int) -> np.ndarray:
    """``n`` points uniform on ``[lo, hi]^dim`` from a PCG64 stream."""
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    return rng.uniform(lo, hi, size=(int(n), int(dim)))


def legendre_jacobi_matrix(d: int) -> np.ndarray:
    """``E[y p_m p_n]`` for orthonormal Legendre polynomials on the uniform law."""
    k = np.arange(d)
    off = Y_MAX * (k + 1) / np.sqrt((2 * k + 1) * (2 * k + 3))
    return np.diag(off, 1) + np.diag(off, -1)


def orthonormal_legendre(y, d: int) -> np.ndarray:
    """Values ``p_0(y) .. p_d(y)``; returns shape ``y.shape + (d + 1,)``."""
    t = np.asarray(y, dtype=float) / Y_MAX
    out = np.empty(t.shape + (d + 1,))
    for m in range(d + 1):
        c = np.zeros(m + 1)
        c[m] = 1.0
        out[..., m] = np.sqrt(2 * m + 1) * legendre.legval(t, c)
    return out


@dataclass(frozen=True)
class DoubleOrthogonalBasis:
    """Tensor basis ``psi_j(y) = prod_k psi_{j_k}(y_k)`` of degree ``d`` per direction.

    ``Q[:, m]`` holds the orthonormal-Legendre coefficients of ``psi_m``.
    """

    d: int
    K: int
    Q: np.ndarray
    diag_values: np.ndarray
    expectation_weights: np.ndarray

    @property
    def multi_indices(self) -> np.ndarray:
        return np.array(list(itertools.product(range(self.d + 1), repeat=self.K)), dtype=int).reshape(-1, self.K)

    @property
    def M_SG(self) -> int:
        return (self.d + 1) ** self.K

    def evaluate_1d(self, y) -> np.ndarray:
        return orthonormal_legendre(y, self.d) @ self.Q

    def evaluate(self, y) -> np.ndarray:
        """``psi_j(y)`` for points of shape (n, K); returns (n, M_SG)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        uni = self.evaluate_1d(y)  # (n, K, d+1)
        idx = self.multi_indices
        out = np.ones((y.shape[0], len(idx)))
        for k in range(self.K):
            out *= uni[:, k, idx[:, k]]
        return out


def build_double_orthogonal_basis(d: int, K: int) -> DoubleOrthogonalBasis:
    if d < 0:
        raise ConfigurationError("polynomial degree must be >= 0")
    if K < 1:
        raise ConfigurationError("K must be >= 1")
    Y = legendre_jacobi_matrix(d)
    vals, Q = np.linalg.eigh(Y)
    for m in range(d + 1):
        col = Q[:, m]
        if abs(col[0]) > 1e-14:
            s = np.sign(col[0])
        else:
            s = np.sign(col[np.argmax(np.abs(col))])
        Q[:, m] = s * col
    # exact symmetric spectrum: remove roundoff around 0
    vals = np.where(np.abs(vals) < 1e-14, 0.0, vals)
    return DoubleOrthogonalBasis(d=d, K=K, Q=Q, diag_values=vals, expectation_weights=Q[0].copy())


def sg_mode_reaction_coefficients(basis: DoubleOrthogonalBasis, mode) -> np.ndarray:
    mode = np.asarray(mode, dtype=int)
    if mode.shape != (basis.K,) or mode.min() < 0 or mode.max() > basis.d:
        raise IndexError(f"multi-index {mode.tolist()} outside {{0..{basis.d}}}^{basis.K}")
    return basis.diag_values[mode]


def sg_expectation_vector(basis: DoubleOrthogonalBasis) -> np.ndarray:
    idx = basis.multi_indices
    return np.prod(basis.expectation_weights[idx], axis=1)


def sg_reaction_table(basis: DoubleOrthogonalBasis) -> np.ndarray:
    """Reaction coefficients of all modes, shape (M_SG, K)."""
    return basis.diag_values[basis.multi_indices]
