"""Numerical kernels: direct solves, Cholesky factors, eigenvalues, dual norms."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .errors import ConfigurationError, SolverError

DENSE_EIG_LIMIT = 2500


def _as_dense(A) -> np.ndarray:
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def sparse_solve(A, b):
    """Direct solve of ``A x = b`` (``b`` may hold several columns)."""
    b = np.asarray(b, dtype=float)
    try:
        if sp.issparse(A):
            lu = spla.splu(sp.csc_matrix(A))
            x = lu.solve(b)
        else:
            x = sla.solve(np.asarray(A, dtype=float), b)
    except (RuntimeError, sla.LinAlgError) as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("solution is not finite (singular matrix?)")
    res = np.linalg.norm(A @ x - b)
    nA = sp.linalg.norm(A) if sp.issparse(A) else np.linalg.norm(A)
    tol = 1e-10 * (nA * np.linalg.norm(x) + np.linalg.norm(b))
    if res > tol:
        cond = np.linalg.cond(_as_dense(A)) if A.shape[0] <= 2000 else float("nan")
        raise SolverError(f"residual {res:.3e} exceeds {tol:.3e}; condition estimate {cond:.3e}")
    return x


def smallest_generalized_eigenvalue(A_sym, B, tol: float = 1e-8, maxiter: int = 1000) -> float:
    """Smallest eigenvalue of the symmetric pencil ``A v = lam B v`` (``B`` SPD).

    Moderate sizes use a dense symmetric-definite solver; larger ones use
    shift-invert Lanczos about zero. The returned value is the Rayleigh
    quotient of the computed eigenvector.
    """
    n = A_sym.shape[0]
    if n <= DENSE_EIG_LIMIT:
        Ad, Bd = _as_dense(A_sym), _as_dense(B)
        try:
            w, v = sla.eigh(Ad, Bd, subset_by_index=[0, 0])
        except sla.LinAlgError as exc:
            raise SolverError(f"generalized eigensolver failed: {exc}") from exc
        x = v[:, 0]
        return float(x @ Ad @ x / (x @ Bd @ x))
    try:
        w, v = spla.eigsh(sp.csc_matrix(A_sym), k=1, M=sp.csc_matrix(B), sigma=0.0, which="LM",
                          tol=tol, maxiter=maxiter)
    except spla.ArpackNoConvergence as exc:
        raise SolverError("shift-invert iteration did not converge") from exc
    x = v[:, 0]
    return float(x @ (A_sym @ x) / (x @ (B @ x)))


class CholeskyFactor:
    """Upper factor ``St`` of an SPD matrix ``S = St^T St`` with the two products POD needs."""

    def __init__(self, S):
        S = _as_dense(S)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ConfigurationError("weighting matrix must be square")
        try:
            self.upper = sla.cholesky(S, lower=False)
        except sla.LinAlgError as exc:
            raise ConfigurationError(f"weighting matrix is not SPD: {exc}") from exc
        self.size = S.shape[0]

    def apply(self, U):
        """``St @ U``"""
        return self.upper @ U

    def solve(self, Y):
        """``St^{-1} @ Y``"""
        return sla.solve_triangular(self.upper, Y, lower=False)

    def matrix(self):
        return self.upper.T @ self.upper


class BlockCholeskyFactor:
    """Factor of ``I_m (x) S`` for coefficient vectors ordered block-by-block."""

    def __init__(self, S, n_blocks: int):
        self.inner = S if isinstance(S, CholeskyFactor) else CholeskyFactor(S)
        self.n_blocks = int(n_blocks)
        self.size = self.n_blocks * self.inner.size

    def _blocks(self, U):
        U = np.asarray(U)
        cols = U.shape[1] if U.ndim == 2 else 1
        # (n_blocks, M, cols) -> (M, n_blocks * cols)
        B = U.reshape(self.n_blocks, self.inner.size, cols).transpose(1, 0, 2)
        return B.reshape(self.inner.size, -1), U.shape

    def _unblocks(self, B, shape):
        cols = shape[1] if len(shape) == 2 else 1
        out = B.reshape(self.inner.size, self.n_blocks, cols).transpose(1, 0, 2).reshape(shape)
        return np.ascontiguousarray(out)

    def apply(self, U):
        B, shape = self._blocks(U)
        return self._unblocks(self.inner.apply(B), shape)

    def solve(self, Y):
        B, shape = self._blocks(Y)
        return self._unblocks(self.inner.solve(B), shape)

    def matrix(self):
        return np.kron(np.eye(self.n_blocks), self.inner.matrix())


class RieszContext:
    """Dual norms ``sqrt(F^T G^{-1} F)`` for a fixed SPD Gram matrix ``G``.

    With ``n_blocks > 1`` the Gram matrix is ``I (x) G`` and vectors of length
    ``n_blocks * M`` are split block-wise.
    """

    def __init__(self, gram, n_blocks: int = 1):
        self.gram = gram
        self.factor = CholeskyFactor(gram)
        self.n_blocks = int(n_blocks)

    @property
    def size(self) -> int:
        return self.n_blocks * self.factor.size

    def dual_norm(self, F) -> np.ndarray | float:
        """Dual norm of one functional (1-D input) or of each column (2-D input)."""
        F = np.asarray(F, dtype=float)
        single = F.ndim == 1
        F2 = F[:, None] if single else F
        if F2.shape[0] != self.size:
            raise ConfigurationError(f"functional has length {F2.shape[0]}, expected {self.size}")
        M = self.factor.size
        cols = F2.shape[1]
        blocks = F2.reshape(self.n_blocks, M, cols).transpose(1, 0, 2).reshape(M, -1)
        # G = St^T St  =>  F^T G^{-1} F = |St^{-T} F|^2
        Z = sla.solve_triangular(self.factor.upper, blocks, trans="T", lower=False)
        sq = (Z * Z).reshape(M, self.n_blocks, cols).sum(axis=(0, 1))
        out = np.sqrt(sq)
        return float(out[0]) if single else out

    def riesz_representer(self, F) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        M = self.factor.size
        shape = F.shape
        cols = shape[1] if F.ndim == 2 else 1
        blocks = F.reshape(self.n_blocks, M, cols).transpose(1, 0, 2).reshape(M, -1)
        Z = sla.cho_solve((self.factor.upper, False), blocks)
        return Z.reshape(M, self.n_blocks, cols).transpose(1, 0, 2).reshape(shape)


def riesz_dual_norm(ctx: RieszContext, F) -> float:
    return ctx.dual_norm(F)


class BandedAffineSolver:
    """Batched direct solves for matrices ``sum_q theta_q A_q`` sharing a band.

    One LU factorization per parameter point serves both ``A x = b`` and
    ``A^T z = c``.
    """

    def __init__(self, terms):
        terms = [sp.csr_matrix(t) for t in terms]
        n = terms[0].shape[0]
        lower = upper = 0
        for t in terms:
            coo = t.tocoo()
            if coo.nnz:
                off = coo.col - coo.row
                upper = max(upper, int(off.max()))
                lower = max(lower, int(-off.min()))
        self.n = n
        self.kl, self.ku = lower, upper
        rows = 2 * lower + upper + 1
        bands = np.zeros((len(terms), rows, n))
        for q, t in enumerate(terms):
            coo = t.tocoo()
            bands[q, lower + upper + coo.row - coo.col, coo.col] = coo.data
        self.bands = bands
        self._flat = bands.reshape(len(terms), -1)

    def factor(self, theta):
        ab = (np.asarray(theta, dtype=float) @ self._flat).reshape(self.bands.shape[1:])
        lu, piv, info = lapack.dgbtrf(ab, self.kl, self.ku, overwrite_ab=1)
        if info != 0:
            raise SolverError(f"banded LU failed (info={info}); matrix singular")
        return lu, piv

    def _trs(self, lu, piv, rhs, trans):
        x, info = lapack.dgbtrs(lu, self.kl, self.ku, rhs, piv, trans=trans)
        if info != 0:
            raise SolverError(f"banded solve failed (info={info})")
        return x

    def solve(self, theta, rhs, rhs_t=None):
        """Solve at one or many parameter points.

        ``theta`` has shape (Q,) or (B, Q); ``rhs`` (and ``rhs_t`` for the
        transposed system) have shape (n,) shared by all points or (B, n).
        Returns ``x`` (and ``z`` if ``rhs_t`` given) with a matching batch axis.
        """
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        th = theta[None] if single else theta
        B = th.shape[0]
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (B, self.n))
        X = np.empty((B, self.n))
        Z = np.empty((B, self.n)) if rhs_t is not None else None
        if rhs_t is not None:
            rhs_t = np.broadcast_to(np.asarray(rhs_t, dtype=float), (B, self.n))
        for b in range(B):
            lu, piv = self.factor(th[b])
            X[b] = self._trs(lu, piv, rhs[b][:, None], 0)[:, 0]
            if Z is not None:
                Z[b] = self._trs(lu, piv, rhs_t[b][:, None], 1)[:, 0]
        if single:
            X = X[0]
            Z = Z[0] if Z is not None else None
        return (X, Z) if rhs_t is not None else X
