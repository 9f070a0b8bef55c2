"""Weighted proper orthogonal decomposition via Cholesky factors and an SVD."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .linalg import BlockCholeskyFactor, CholeskyFactor


@dataclass(frozen=True)
class PodBasis:
    """``Phi`` is S-orthonormal; columns ordered by decreasing singular value."""

    Phi: np.ndarray
    singular_values: np.ndarray
    gram_ref: str = "X"
    numerical_rank: int | None = None

    @property
    def R_max(self) -> int:
        return self.Phi.shape[1]


def _factor(S):
    if isinstance(S, (CholeskyFactor, BlockCholeskyFactor)):
        return S
    if sp.issparse(S):
        S = S.toarray()
    return CholeskyFactor(S)


def _weight_factor_t(W, N):
    """Return ``Wt^T`` (so that the SVD input is ``St U Wt^T``).

    ``W`` may be a full SPD matrix, a 1-D array of diagonal weights or a scalar.
    """
    if np.isscalar(W):
        if W <= 0:
            raise ConfigurationError("snapshot weight must be positive")
        return np.sqrt(float(W))
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        if W.shape != (N,) or np.any(W <= 0):
            raise ConfigurationError("diagonal snapshot weights must be positive, one per snapshot")
        return np.sqrt(W)
    if W.shape != (N, N):
        raise ConfigurationError(f"snapshot weighting must be {N}x{N}")
    return CholeskyFactor(W).upper.T


def _scaled(SU, Wt_T):
    if np.isscalar(Wt_T):
        return SU * Wt_T
    if Wt_T.ndim == 1:
        return SU * Wt_T[None, :]
    return SU @ Wt_T


def _fix_signs(Phi):
    idx = np.argmax(np.abs(Phi), axis=0)
    s = np.sign(Phi[idx, np.arange(Phi.shape[1])])
    s[s == 0] = 1.0
    return Phi * s


def compute_pod(U, S, W, gram_ref: str = "X") -> PodBasis:
    """POD of the snapshot columns of ``U`` (M x N).

    ``S`` is the SPD spatial weighting (dense, sparse or a Cholesky factor
    object), ``W`` the SPD snapshot weighting. Keeps ``min(M, N)`` modes.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] < 1:
        raise ConfigurationError("snapshot matrix must be 2-D with at least one column")
    M, N = U.shape
    St = _factor(S)
    if St.size != M:
        raise ConfigurationError(f"spatial weighting has size {St.size}, snapshots have length {M}")
    X = _scaled(St.apply(U), _weight_factor_t(W, N))
    Phi_t, sig, _ = np.linalg.svd(X, full_matrices=False)
    Phi = _fix_signs(St.solve(Phi_t))
    tol = sig[0] * max(M, N) * np.finfo(float).eps if sig.size and sig[0] > 0 else 0.0
    rank = int(np.sum(sig > tol)) if sig.size and sig[0] > 0 else 0
    if rank < sig.size:
        warnings.warn(
            f"POD ({gram_ref}): snapshots have numerical rank {rank} < {sig.size}; "
            "trailing modes span round-off directions",
            RuntimeWarning,
            stacklevel=2,
        )
    return PodBasis(Phi=Phi, singular_values=sig, gram_ref=gram_ref, numerical_rank=rank)


def projection_error(U, S, W, basis: PodBasis, R: int) -> float:
    """Weighted mean-square S-norm error of projecting the snapshots onto ``Phi[:, :R]``."""
    if not 0 <= R <= basis.R_max:
        raise IndexError(f"R={R} outside 0..{basis.R_max}")
    U = np.asarray(U, dtype=float)
    St = _factor(S)
    SU = St.apply(U)
    if R > 0:
        # S-orthogonal projection: Phi (Phi^T S U), with Phi^T S U = (St Phi)^T (St U)
        SPhi = St.apply(basis.Phi[:, :R])
        E = SU - SPhi @ (SPhi.T @ SU)
    else:
        E = SU
    X = _scaled(E, _weight_factor_t(W, U.shape[1]))
    return float(np.sum(X * X))
