"""Stochastic Galerkin FE model and its reduced basis counterpart.

With the double-orthogonal basis the SG system is block diagonal: mode ``m``
(multi-index ``j``) carries ``A_m(mu) = A0 + sum_k d_{j_k} Ay[k] + sum_p mu_p Amu[p]``
and load ``E_m f``. SG coefficient vectors are stored mode-major, i.e. block
``m`` occupies entries ``m*M_FE : (m+1)*M_FE``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import CoercivityError, ConfigurationError
from .fem import AffineOperatorSet
from .linalg import BandedAffineSolver, BlockCholeskyFactor, RieszContext, smallest_generalized_eigenvalue
from .mcrb import McEstimate
from .pod import PodBasis, compute_pod
from .stochastic import (
    DoubleOrthogonalBasis,
    legendre_jacobi_matrix,
    sg_expectation_vector,
    sg_reaction_table,
)

log = logging.getLogger(__name__)

N_SG_SPACES = 4


class SgSystem:
    """Block-diagonal SGFE operator for a given spatial discretization and SG basis."""

    def __init__(self, ops: AffineOperatorSet, basis: DoubleOrthogonalBasis):
        if basis.K != ops.K:
            raise ConfigurationError(f"SG basis has K={basis.K}, operators have K={ops.K}")
        self.ops = ops
        self.basis = basis
        self.reaction = sg_reaction_table(basis)
        self.E = sg_expectation_vector(basis)
        self.M_FE = ops.M_FE
        self.M_SG = basis.M_SG
        self._solver = None
        self._riesz = None

    @property
    def M_total(self) -> int:
        return self.M_FE * self.M_SG

    @property
    def solver(self) -> BandedAffineSolver:
        if self._solver is None:
            self._solver = BandedAffineSolver(self.ops.terms)
        return self._solver

    @property
    def riesz(self) -> RieszContext:
        if self._riesz is None:
            self._riesz = RieszContext(self.ops.gram_X.toarray(), n_blocks=self.M_SG)
        return self._riesz

    def mode_theta(self, mu) -> np.ndarray:
        return self.ops.theta(self.reaction, np.asarray(mu, dtype=float))

    def f_bar(self) -> np.ndarray:
        return np.kron(self.E, self.ops.f_vec)

    def l_bar(self) -> np.ndarray:
        return np.kron(self.E, self.ops.l_vec)

    def blocks(self, x) -> np.ndarray:
        """View a coefficient vector (or a matrix of column vectors) mode-wise."""
        x = np.asarray(x)
        return x.reshape((self.M_SG, self.M_FE) + x.shape[1:])

    def mode_outputs(self, x) -> np.ndarray:
        """``l(x_m)`` for every mode (and column)."""
        return np.tensordot(self.blocks(x), self.ops.l_vec, axes=(1, 0))

    def apply(self, mu, x, transpose: bool = False) -> np.ndarray:
        """``A(mu) x`` (or its transpose) for SG vectors ``x`` of shape (M_total,) or (M_total, n)."""
        X = self.blocks(x)
        theta = self.mode_theta(mu)
        out = np.zeros_like(X, dtype=float)
        for q, A in enumerate(self.ops.terms):
            Aq = A.T if transpose else A
            # (M_SG, M, ...) -> apply spatial operator along axis 1
            Y = np.moveaxis(X, 1, 0)
            Yq = (Aq @ Y.reshape(self.M_FE, -1)).reshape(Y.shape)
            Yq = np.moveaxis(Yq, 0, 1)
            w = theta[:, q].reshape((-1,) + (1,) * (X.ndim - 1))
            out += w * Yq
        return out.reshape(np.shape(x))

    def block_term(self, q_mu: int | None) -> sp.csr_matrix:
        """Sparse SG matrix of one mu-affine term: the mu-free part (``None``) or ``I (x) Amu[p]``."""
        eye = sp.identity(self.M_SG, format="csr")
        if q_mu is None:
            mats = [sp.kron(eye, self.ops.A0)]
            for k, Ak in enumerate(self.ops.Ay):
                mats.append(sp.kron(sp.diags(self.reaction[:, k]), Ak))
            return sum(mats[1:], mats[0]).tocsr()
        return sp.kron(eye, self.ops.Amu[q_mu]).tocsr()


def solve_sgfe(sg: SgSystem, mu, adjoint_rhs=None):
    """Solve all mode systems ``A_m(mu) u_m = E_m f``.

    With ``adjoint_rhs`` (an SG vector) the transposed systems are solved with
    the same factorizations and both solutions are returned.
    """
    theta = sg.mode_theta(mu)
    rhs = sg.E[:, None] * sg.ops.f_vec[None]
    if adjoint_rhs is None:
        return sg.solver.solve(theta, rhs).ravel()
    X, Z = sg.solver.solve(theta, rhs, sg.blocks(adjoint_rhs))
    return X.ravel(), Z.ravel()


def solve_sgfe_adjoint(sg: SgSystem, mu, rhs) -> np.ndarray:
    theta = sg.mode_theta(mu)
    _, Z = sg.solver.solve(theta, np.zeros(sg.M_FE), sg.blocks(rhs))
    return Z.ravel()


def sg_output_moments(basis_or_E, l_vec, u_bar) -> tuple[float, float]:
    """Exact mean and variance of ``l(u)`` for an SG expansion ``u_bar``."""
    E = sg_expectation_vector(basis_or_E) if isinstance(basis_or_E, DoubleOrthogonalBasis) else np.asarray(basis_or_E)
    o = np.asarray(u_bar).reshape(len(E), -1) @ l_vec
    mean = float(E @ o)
    return mean, float(o @ o - mean**2)


def coercivity_factor_sg(sg: SgSystem, mu=None) -> float:
    """Minimum over modes of the smallest eigenvalue of ``(sym A_m, gram_X)``; mu-independent."""
    if getattr(sg, "_alpha_bar", None) is None:
        ops = sg.ops
        vals = []
        for m in range(sg.M_SG):
            A = ops.A0.copy()
            for yk, Ak in zip(sg.reaction[m], ops.Ay):
                A = A + yk * Ak
            vals.append(smallest_generalized_eigenvalue(0.5 * (A + A.T), ops.gram_X))
        a = min(vals)
        if a <= 0:
            raise CoercivityError(f"coercivity lost for the SG operator: alpha_bar={a:.3e}")
        sg._alpha_bar = a
    return sg._alpha_bar


def continuity_factor_gamma2(l_vec, gram_X) -> float:
    """``sup E[l(w) l(v)] / (|w| |v|)`` for deterministic ``l``: equals ``|l|_{X'}^2``."""
    l_vec = np.asarray(l_vec, dtype=float)
    if not np.any(l_vec):
        return 0.0
    G = gram_X.toarray() if sp.issparse(gram_X) else np.asarray(gram_X)
    return float(RieszContext(G).dual_norm(l_vec) ** 2)


@dataclass
class SgrbRom:
    """Reduced data for the primal SG space (index 0) and three dual spaces.

    Affine terms in mu are ``q = 0`` (mu-free block-diagonal part), ``1, 2``
    (convection). ``red_A[0, q] = V^T A_q V``, ``red_A[i, q] = V_i^T A_q^T V_i``,
    ``cross[i - 1, q] = V_i^T A_q V`` and ``Lmap[i][m, r] = l(mode m of V_i[:, r])``.
    """

    bases: list[np.ndarray]
    singular_values: list[np.ndarray]
    red_A: np.ndarray
    cross: np.ndarray
    red_f: np.ndarray
    red_l: np.ndarray
    Lmap: np.ndarray
    alpha_bar: float
    gamma2: float
    system: SgSystem | None = None

    @property
    def R_max(self) -> int:
        return min(b.shape[1] for b in self.bases)

    def check_R(self, R: int):
        if not 1 <= R <= self.R_max:
            raise IndexError(f"R={R} outside 1..{self.R_max}")


@dataclass
class SgrbChain:
    R: int
    mu: np.ndarray
    u: np.ndarray
    z: list[np.ndarray]
    mode_out: np.ndarray
    mean_out: float
    r_z: np.ndarray
    dual3_prefactor: float


def _mu_theta(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    return np.array([1.0, mu[0], mu[1]])


def _red(T, th, R):
    return np.tensordot(th, T[:, :R, :R], axes=(0, 0))


def solve_sgrb_chain(rom: SgrbRom, mu, R: int) -> SgrbChain:
    """Reduced primal and dual solves for one mu; cost depends on R only."""
    rom.check_R(R)
    th = _mu_theta(mu)
    solve = np.linalg.solve
    u = solve(_red(rom.red_A[0], th, R), rom.red_f[0, :R])
    z1 = solve(_red(rom.red_A[1], th, R), -rom.red_l[1, :R])

    def r_at(i, z):
        return float(z @ rom.red_f[i, :R] - z @ (_red(rom.cross[i - 1], th, R) @ u))

    o = rom.Lmap[0][:, :R] @ u
    mean = float(rom.red_l[0, :R] @ u)
    r1 = r_at(1, z1)
    z2 = solve(_red(rom.red_A[2], th, R), -2.0 * (rom.Lmap[2][:, :R].T @ o))
    c3 = 2.0 * (mean - r1)
    z3 = solve(_red(rom.red_A[3], th, R), -c3 * rom.red_l[3, :R])
    r_z = np.array([r1, r_at(2, z2), r_at(3, z3)])
    return SgrbChain(R=R, mu=np.asarray(mu, float), u=u, z=[z1, z2, z3], mode_out=o, mean_out=mean,
                     r_z=r_z, dual3_prefactor=c3)


def sgrb_estimates(chain: SgrbChain) -> tuple[float, float]:
    """Corrected expectation and variance; reduced quantities only."""
    var_red = float(chain.mode_out @ chain.mode_out - chain.mean_out**2)
    r1, r2, r3 = chain.r_z
    return chain.mean_out - r1, var_red + r1**2 - r2 + r3


def sg_residual_norms(rom: SgrbRom, chain: SgrbChain) -> dict:
    """Full-order dual norms of the primal, dual-1 and dual-2 minus dual-3 residuals."""
    sg = rom.system
    if sg is None:
        raise ConfigurationError("SGRB model has no attached SG system; residual norms need it")
    R, mu = chain.R, chain.mu
    lift = [rom.bases[0][:, :R] @ chain.u] + [rom.bases[i][:, :R] @ chain.z[i - 1] for i in range(1, 4)]
    l_bar = sg.l_bar()
    r = sg.f_bar() - sg.apply(mu, lift[0])
    r1 = -l_bar - sg.apply(mu, lift[1], transpose=True)
    r2 = -2.0 * np.kron(chain.mode_out, sg.ops.l_vec) - sg.apply(mu, lift[2], transpose=True)
    r3 = -chain.dual3_prefactor * l_bar - sg.apply(mu, lift[3], transpose=True)
    nr = sg.riesz.dual_norm(np.stack([r, r1, r2 - r3], axis=1))
    return {"primal": float(nr[0]), "dual1": float(nr[1]), "dual2_minus_dual3": float(nr[2])}


def expectation_with_bound_sg(rom: SgrbRom, mu, R: int, chain: SgrbChain | None = None,
                              norms: dict | None = None) -> McEstimate:
    chain = chain or solve_sgrb_chain(rom, mu, R)
    norms = norms or sg_residual_norms(rom, chain)
    corrected, _ = sgrb_estimates(chain)
    bound = norms["primal"] * norms["dual1"] / rom.alpha_bar
    return McEstimate(value=chain.mean_out, corrected_value=float(corrected), bound=float(bound),
                      components={"primal_residual": norms["primal"], "dual_residual": norms["dual1"],
                                  "alpha_bar": rom.alpha_bar})


def variance_with_bound_sg(rom: SgrbRom, mu, R: int, chain: SgrbChain | None = None,
                           norms: dict | None = None) -> McEstimate:
    chain = chain or solve_sgrb_chain(rom, mu, R)
    norms = norms or sg_residual_norms(rom, chain)
    _, corrected = sgrb_estimates(chain)
    a = rom.alpha_bar
    rp, r1, r23 = norms["primal"], norms["dual1"], norms["dual2_minus_dual3"]
    t1 = rom.gamma2 * rp**2 / a**2
    t2 = rp**2 * r1**2 / a**2
    t3 = r23 * rp / a
    value = float(chain.mode_out @ chain.mode_out - chain.mean_out**2)
    return McEstimate(value=value, corrected_value=float(corrected), bound=float(t1 + t2 + t3),
                      components={"continuity_term": float(t1), "squared_residual_term": float(t2),
                                  "dual_difference_term": float(t3)})


def _reduce_sg(sg: SgSystem, bases):
    V = bases[0]
    mats = [sg.block_term(None), sg.block_term(0), sg.block_term(1)]
    AV = [A @ V for A in mats]
    R = V.shape[1]
    n = len(bases)
    red_A = np.empty((n, 3, R, R))
    cross = np.empty((n - 1, 3, R, R))
    red_A[0] = np.stack([V.T @ x for x in AV])
    for i in range(1, n):
        Vi = bases[i]
        red_A[i] = np.stack([Vi.T @ (A.T @ Vi) for A in mats])
        cross[i - 1] = np.stack([Vi.T @ x for x in AV])
    red_f = np.stack([B.T @ sg.f_bar() for B in bases])
    red_l = np.stack([B.T @ sg.l_bar() for B in bases])
    Lmap = np.stack([sg.mode_outputs(B) for B in bases])
    return red_A, cross, red_f, red_l, Lmap


def build_sgrb_offline(sg: SgSystem, P_train, R_max: int | None = None,
                       snapshot_sink: dict | None = None) -> SgrbRom:
    """Primal and dual-1 SGFE snapshots over ``P_train``; then dual-2 and dual-3
    snapshots whose data involve the reduced primal and dual-1 models at ``R_max``.

    ``snapshot_sink`` (a dict) receives the four snapshot matrices and the weight.
    """
    P_train = np.atleast_2d(np.asarray(P_train, dtype=float))
    N = P_train.shape[0]
    l_bar = sg.l_bar()
    U = np.empty((sg.M_total, N))
    Z1 = np.empty((sg.M_total, N))
    for j, mu in enumerate(P_train):
        U[:, j], Z1[:, j] = solve_sgfe(sg, mu, adjoint_rhs=-l_bar)
    log.info("SGRB: %d primal and dual-1 SGFE snapshots", N)
    S = BlockCholeskyFactor(sg.ops.gram_X.toarray(), sg.M_SG)
    w = 1.0 / N
    pods: list[PodBasis] = [compute_pod(U, S, w, "Xbar primal"), compute_pod(Z1, S, w, "Xbar dual1")]
    r_cap = min(p.R_max for p in pods) if R_max is None else min(R_max, *(p.R_max for p in pods))

    partial = SgrbRom(
        bases=[p.Phi[:, :r_cap] for p in pods] * 2,
        singular_values=[], red_A=None, cross=None, red_f=None, red_l=None, Lmap=None,
        alpha_bar=np.nan, gamma2=np.nan,
    )
    partial.red_A, partial.cross, partial.red_f, partial.red_l, partial.Lmap = _reduce_sg(sg, partial.bases)
    Z2 = np.empty_like(Z1)
    Z3 = np.empty_like(Z1)
    o_full = sg.mode_outputs(U)
    for j, mu in enumerate(P_train):
        ch = solve_sgrb_chain(partial, mu, r_cap)
        rhs2 = -np.kron(o_full[:, j] + ch.mode_out, sg.ops.l_vec)
        Z2[:, j] = solve_sgfe_adjoint(sg, mu, rhs2)
        # the dual-3 data is a multiple of l_bar, so its solution scales the dual-1 snapshot
        c3 = sg.E @ o_full[:, j] + ch.mean_out - 2.0 * ch.r_z[0]
        Z3[:, j] = c3 * Z1[:, j]
    pods.append(compute_pod(Z2, S, w, "Xbar dual2"))
    pods.append(compute_pod(Z3, S, w, "Xbar dual3"))
    if snapshot_sink is not None:
        snapshot_sink.update(snapshots=[U, Z1, Z2, Z3], weight=w)
    r_cap = min(r_cap, *(p.R_max for p in pods))
    bases = [p.Phi[:, :r_cap] for p in pods]
    red_A, cross, red_f, red_l, Lmap = _reduce_sg(sg, bases)
    return SgrbRom(
        bases=bases,
        singular_values=[p.singular_values for p in pods],
        red_A=red_A, cross=cross, red_f=red_f, red_l=red_l, Lmap=Lmap,
        alpha_bar=coercivity_factor_sg(sg),
        gamma2=continuity_factor_gamma2(sg.ops.l_vec, sg.ops.gram_X),
        system=sg,
    )


def kronecker_system(ops: AffineOperatorSet, d: int, mu):
    """Dense coupled SG matrix and load in the tensor orthonormal-Legendre basis.

    Independent of the double-orthogonal rotation; intended for tiny sizes.
    Returns ``(A, b)`` with mode-major ordering (last stochastic index fastest).
    """
    K = ops.K
    n1 = d + 1
    J = legendre_jacobi_matrix(d)
    I1 = np.eye(n1)
    e0 = np.zeros(n1)
    e0[0] = 1.0
    A0 = ops.A0.toarray()
    Msg = n1**K
    A = np.kron(np.eye(Msg), A0 + sum(m * Amu.toarray() for m, Amu in zip(mu, ops.Amu)))
    for k in range(K):
        Gk = np.array([[1.0]])
        for kk in range(K):
            Gk = np.kron(Gk, J if kk == k else I1)
        A += np.kron(Gk, ops.Ay[k].toarray())
    e = np.array([1.0])
    for _ in range(K):
        e = np.kron(e, e0)
    return A, np.kron(e, ops.f_vec)


def legendre_to_double_orthogonal(basis: DoubleOrthogonalBasis, coeffs, M_FE: int) -> np.ndarray:
    """Map SG coefficients from the Legendre tensor basis to the rotated basis."""
    Qk = np.array([[1.0]])
    for _ in range(basis.K):
        Qk = np.kron(Qk, basis.Q)
    C = np.asarray(coeffs).reshape(-1, M_FE)
    return (Qk.T @ C).ravel()
