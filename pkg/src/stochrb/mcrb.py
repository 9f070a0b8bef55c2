"""Monte Carlo reduced basis models with residual-corrected statistics.

Conventions: ``A(y, mu) u = f`` is the primal system and dual problems read
``A(y, mu)^T z = -c l``. Functionals are stored as coefficient vectors, so
``F(v) = F @ v``. The five reduced spaces are indexed 0 (primal) and 1..4
(duals).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import CoercivityError, ConfigurationError
from .fem import AffineOperatorSet
from .linalg import BandedAffineSolver, RieszContext, smallest_generalized_eigenvalue, sparse_solve
from .pod import PodBasis, compute_pod
from .stochastic import SampleSet

log = logging.getLogger(__name__)

N_SPACES = 5
_CHUNK = 256


@dataclass
class McEstimate:
    value: float
    corrected_value: float
    bound: float
    components: dict = field(default_factory=dict)


def mc_estimators(samples_of_g) -> tuple[float, float, float]:
    """Return ``(E[g], E_[g], V[g])`` with ``E_`` the ``1/(N-1)`` sum."""
    g = np.asarray(samples_of_g, dtype=float)
    N = g.shape[0]
    if N < 2:
        raise ConfigurationError("at least two samples are needed")
    s = g.sum(axis=0)
    E = s / N
    Eu = s / (N - 1)
    V = (g * g).sum(axis=0) / (N - 1) - Eu * E
    return E, Eu, V


def _means(g):
    # a single sample has no 1/(N-1) mean; duals 3 and 4 then reuse the plain mean
    if g.shape[0] < 2:
        return float(g.mean()), float(g.mean())
    E, Eu, _ = mc_estimators(g)
    return E, Eu


def solve_mcfe(ops: AffineOperatorSet, y, mu) -> np.ndarray:
    return sparse_solve(ops.matrix(y, mu), ops.f_vec)


def mcfe_outputs(ops: AffineOperatorSet, samples, mu, solver: BandedAffineSolver | None = None) -> np.ndarray:
    """Outputs ``l(u(y, mu))`` for every row of ``samples``."""
    solver = solver or BandedAffineSolver(ops.terms)
    X = solver.solve(ops.theta(np.asarray(samples), np.asarray(mu, dtype=float)), ops.f_vec)
    return X @ ops.l_vec


_alpha_cache: dict = {}


def coercivity_factor_point(ops: AffineOperatorSet, y, mu=None) -> float:
    """Smallest generalized eigenvalue of ``(sym A(y, mu), gram_X)``.

    Convection is skew-symmetric, so the value does not depend on ``mu`` and is
    cached per ``y``.
    """
    y = np.asarray(y, dtype=float)
    key = (id(ops), y.tobytes())
    if key not in _alpha_cache:
        A = ops.A0.copy()
        for yk, Ak in zip(y, ops.Ay):
            A = A + yk * Ak
        A = 0.5 * (A + A.T)
        a = smallest_generalized_eigenvalue(A, ops.gram_X)
        if a <= 0:
            raise CoercivityError(f"coercivity lost at y={y.tolist()}: alpha={a:.3e}")
        _alpha_cache[key] = a
    return _alpha_cache[key]


@dataclass
class McrbRom:
    """Reduced data for the primal space (index 0) and four dual spaces.

    ``red_A[i, q]`` is ``V_0^T A_q V_0`` for ``i = 0`` and ``V_i^T A_q^T V_i``
    otherwise; ``cross[i - 1, q] = V_i^T A_q V_0``. ``AV[q] = A_q V_0`` and
    ``AtV[i - 1, q] = A_q^T V_i`` are kept for full-order residuals.
    """

    bases: list[np.ndarray]
    singular_values: list[np.ndarray]
    red_A: np.ndarray
    cross: np.ndarray
    red_f: np.ndarray
    red_l: np.ndarray
    AV: np.ndarray
    AtV: np.ndarray
    f_vec: np.ndarray
    l_vec: np.ndarray
    gram: np.ndarray
    samples: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self._riesz = None

    @property
    def R_max(self) -> int:
        return min(b.shape[1] for b in self.bases)

    @property
    def riesz(self) -> RieszContext:
        if self._riesz is None:
            self._riesz = RieszContext(self.gram)
        return self._riesz

    def check_R(self, R: int):
        if not 1 <= R <= self.R_max:
            raise IndexError(f"R={R} outside 1..{self.R_max}")


def _reduced_tensors(ops, bases):
    terms = ops.terms
    V0 = bases[0]
    AV = np.stack([np.asarray(t @ V0) for t in terms])
    AtV = np.stack([np.stack([np.asarray(t.T @ Vi) for t in terms]) for Vi in bases[1:]])
    red_A = np.empty((N_SPACES, len(terms), V0.shape[1], V0.shape[1]))
    red_A[0] = np.einsum("mr,qms->qrs", V0, AV)
    for i, Vi in enumerate(bases[1:], start=1):
        red_A[i] = np.einsum("mr,qms->qrs", Vi, AtV[i - 1])
    cross = np.stack([np.einsum("mr,qms->qrs", Vi, AV) for Vi in bases[1:]])
    red_f = np.stack([Vi.T @ ops.f_vec for Vi in bases])
    red_l = np.stack([Vi.T @ ops.l_vec for Vi in bases])
    return red_A, cross, red_f, red_l, AV, AtV


def _affine_apply(theta, T, x):
    """``sum_q theta[b, q] T[q] @ x[b]`` for each batch row ``b``."""
    Y = np.tensordot(T, x, axes=(2, 1))  # (Q, rows, B)
    return np.einsum("qmb,bq->bm", Y, theta)


def _batched_solve(red_A_i, theta, rhs, R):
    """Solve ``sum_q theta_q red_A_i[q, :R, :R] x = rhs`` for each row of theta."""
    A = np.tensordot(theta, red_A_i[:, :R, :R], axes=(1, 0))
    rhs = np.broadcast_to(rhs, (theta.shape[0], R))
    return np.linalg.solve(A, rhs[..., None])[..., 0]


@dataclass
class McrbChain:
    """Reduced coefficients of the primal and dual solutions at every sample."""

    R: int
    theta: np.ndarray
    u: np.ndarray
    z: list[np.ndarray]
    out: np.ndarray
    r_z: np.ndarray
    prefactors: np.ndarray

    @property
    def n(self) -> int:
        return self.u.shape[0]


def solve_mcrb_chain(rom: McrbRom, y, mu, R: int) -> McrbChain:
    """Solve primal, dual 1, then duals 2-4 for all rows of ``y`` at one ``mu``.

    Duals 3 and 4 carry MC aggregates over the rows of ``y``, so ``y`` should be
    the fixed sample set the estimators use.
    """
    rom.check_R(R)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    mu = np.asarray(mu, dtype=float)
    K = y.shape[1]
    theta = np.concatenate([np.ones((y.shape[0], 1)), y, np.broadcast_to(mu, (y.shape[0], 2))], axis=1)
    if theta.shape[1] != rom.red_A.shape[1]:
        raise ConfigurationError(f"samples have {K} dimensions; the model expects {rom.red_A.shape[1] - 3}")
    n = theta.shape[0]
    u = np.empty((n, R))
    z = [np.empty((n, R)) for _ in range(4)]
    base_sol = [np.empty((n, R)) for _ in range(3)]
    for s in range(0, n, _CHUNK):
        th = theta[s:s + _CHUNK]
        u[s:s + _CHUNK] = _batched_solve(rom.red_A[0], th, rom.red_f[0, :R], R)
        z[0][s:s + _CHUNK] = _batched_solve(rom.red_A[1], th, -rom.red_l[1, :R], R)
        for i in range(2, 5):
            base_sol[i - 2][s:s + _CHUNK] = _batched_solve(rom.red_A[i], th, -rom.red_l[i, :R], R)

    def residual_at(i, zi):
        # r(V_i z) = f(V_i z) - (V_i z)^T A V_0 u
        Au = _affine_apply(theta, rom.cross[i - 1, :, :R, :R], u)
        return zi @ rom.red_f[i, :R] - np.sum(zi * Au, axis=1)

    out = u @ rom.red_l[0, :R]
    r1 = residual_at(1, z[0])
    g = out - r1
    E, Eu = _means(g)
    pref = np.stack([2 * g, np.full(n, E), np.full(n, Eu)], axis=1)
    for i in range(2, 5):
        z[i - 1] = pref[:, i - 2:i - 1] * base_sol[i - 2]
    r_z = np.stack([r1] + [residual_at(i, z[i - 1]) for i in range(2, 5)], axis=1)
    return McrbChain(R=R, theta=theta, u=u, z=z, out=out, r_z=r_z, prefactors=pref)


def residual_dual_norms(rom: McrbRom, chain: McrbChain) -> dict:
    """Full-order dual norms of the primal residual, dual-1 residual and the
    dual-2/3/4 combination entering the variance bound."""
    R = chain.R
    th = chain.theta
    n = chain.n
    N = n
    res = np.empty((n, 3))
    for s in range(0, n, _CHUNK):
        sl = slice(s, s + _CHUNK)
        t = th[sl]
        r = rom.f_vec[None] - _affine_apply(t, rom.AV[:, :, :R], chain.u[sl])
        dual = []
        for i in range(1, 5):
            c = np.ones(t.shape[0]) if i == 1 else chain.prefactors[sl, i - 2]
            dual.append(-c[:, None] * rom.l_vec[None]
                        - _affine_apply(t, rom.AtV[i - 1, :, :, :R], chain.z[i - 1][sl]))
        combo = dual[1] - dual[2] - (N - 1) / N * dual[3]
        res[sl, 0] = rom.riesz.dual_norm(r.T)
        res[sl, 1] = rom.riesz.dual_norm(dual[0].T)
        res[sl, 2] = rom.riesz.dual_norm(combo.T)
    return {"primal": res[:, 0], "dual1": res[:, 1], "dual234": res[:, 2]}


def output_with_bound(rom: McrbRom, y, mu, R: int, alpha: float | None = None) -> McEstimate:
    """Residual-corrected output at one ``(y, mu)`` with its error bound."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if y.shape[0] != 1:
        raise ConfigurationError("output_with_bound takes a single sample")
    chain = solve_mcrb_chain(rom, y, mu, R)
    norms = residual_dual_norms(rom, chain)
    if alpha is None:
        match = np.flatnonzero(np.all(rom.samples == y, axis=1))
        if match.size == 0:
            raise ConfigurationError("alpha must be given for y outside the stored sample set")
        alpha = rom.alpha[match[0]]
    bound = norms["primal"][0] * norms["dual1"][0] / alpha
    return McEstimate(
        value=float(chain.out[0]),
        corrected_value=float(chain.out[0] - chain.r_z[0, 0]),
        bound=float(bound),
        components={"primal_residual": float(norms["primal"][0]), "dual_residual": float(norms["dual1"][0]),
                    "alpha": float(alpha)},
    )


def statistics_with_bounds(rom: McrbRom, mu, R: int) -> tuple[McEstimate, McEstimate]:
    """Expectation and variance estimates with bounds over the stored sample set."""
    chain = solve_mcrb_chain(rom, rom.samples, mu, R)
    norms = residual_dual_norms(rom, chain)
    return _expectation(chain, norms, rom.alpha), _variance(chain, norms, rom.alpha)


def _expectation(chain, norms, alpha) -> McEstimate:
    E_out = mc_estimators(chain.out)[0]
    E_r1 = mc_estimators(chain.r_z[:, 0])[0]
    point = norms["primal"] * norms["dual1"] / alpha
    bound = mc_estimators(point)[0]
    return McEstimate(value=float(E_out), corrected_value=float(E_out - E_r1), bound=float(bound),
                      components={"mean_pointwise_bound": float(bound)})


def _variance(chain, norms, alpha) -> McEstimate:
    V_out = mc_estimators(chain.out)[2]
    V_r1 = mc_estimators(chain.r_z[:, 0])[2]
    Eu_r2 = mc_estimators(chain.r_z[:, 1])[1]
    Eu_r3 = mc_estimators(chain.r_z[:, 2])[1]
    E_r4 = mc_estimators(chain.r_z[:, 3])[0]
    corrected = V_out - V_r1 - Eu_r2 + Eu_r3 + E_r4
    point = norms["primal"] * norms["dual1"] / alpha
    E_p, Eu_p, _ = mc_estimators(point)
    term1 = mc_estimators(point**2)[1]
    term2 = E_p * Eu_p
    term3 = mc_estimators(norms["dual234"] * norms["primal"] / alpha)[1]
    return McEstimate(
        value=float(V_out),
        corrected_value=float(corrected),
        bound=float(term1 + term2 + term3),
        components={"squared_output_term": float(term1), "product_term": float(term2),
                    "dual_combination_term": float(term3)},
    )


def expectation_with_bound(rom: McrbRom, mu, R: int) -> McEstimate:
    return statistics_with_bounds(rom, mu, R)[0]


def variance_with_bound(rom: McrbRom, mu, R: int) -> McEstimate:
    return statistics_with_bounds(rom, mu, R)[1]


def mc_reduced_statistics(rom: McrbRom, mu, R: int) -> tuple[float, float]:
    """Corrected expectation and variance from reduced solves only (no bounds)."""
    chain = solve_mcrb_chain(rom, rom.samples, mu, R)
    E_out, _, V_out = mc_estimators(chain.out)
    E_r1, _, V_r1 = mc_estimators(chain.r_z[:, 0])
    Eu = mc_estimators(chain.r_z)[1]
    E_r4 = mc_estimators(chain.r_z[:, 3])[0]
    return float(E_out - E_r1), float(V_out - V_r1 - Eu[1] + Eu[2] + E_r4)


def build_mcrb_offline(
    ops: AffineOperatorSet,
    sample_set: SampleSet,
    P_train,
    R_max: int | None = None,
    n_snapshot_samples: int | None = None,
    snapshot_sink: dict | None = None,
) -> McrbRom:
    """Snapshots over (snapshot samples) x P_train, POD of primal and dual
    solutions in sequence, reduced operators and per-sample coercivity factors.

    Dual 2-4 right-hand sides are multiples of ``l``, so their full-order
    solutions are the dual-1 snapshots scaled by the prefactors computed with
    the reduced primal and dual-1 models at ``R_max``.

    If ``snapshot_sink`` is a dict it receives the five snapshot matrices
    (key ``"snapshots"``) and the POD weight (``"weight"``).
    """
    samples = sample_set.samples
    P_train = np.atleast_2d(np.asarray(P_train, dtype=float))
    ys = samples if n_snapshot_samples is None else samples[:n_snapshot_samples]
    n_s = ys.shape[0]
    N = n_s * P_train.shape[0]
    solver = BandedAffineSolver(ops.terms)
    M = ops.M_FE
    U = np.empty((M, N))
    Z1 = np.empty((M, N))
    for j, mu in enumerate(P_train):
        X, Z = solver.solve(ops.theta(ys, mu), ops.f_vec, -ops.l_vec)
        U[:, j * n_s:(j + 1) * n_s] = X.T
        Z1[:, j * n_s:(j + 1) * n_s] = Z.T
    log.info("MCRB: %d primal and dual-1 snapshots", N)
    gram = ops.gram_X.toarray()
    w = 1.0 / N
    keep = [] if snapshot_sink is not None else None
    pods: list[PodBasis] = [compute_pod(U, gram, w, "X primal")]
    out_full = ops.l_vec @ U
    if keep is not None:
        keep.append(U)
    del U
    pods.append(compute_pod(Z1, gram, w, "X dual1"))
    r_cap = min(p.R_max for p in pods) if R_max is None else min(R_max, *(p.R_max for p in pods))

    # prefactors of duals 2-4 from the reduced primal/dual-1 models at r_cap
    spans_X = r_cap == M
    if not spans_X:
        partial = _partial_rom(ops, [p.Phi[:, :r_cap] for p in pods], gram)
    pref = np.empty((N, 3))
    for j, mu in enumerate(P_train):
        if spans_X:
            # both bases are complete, so the reduced solutions are the snapshots
            # and the dual-1 residual correction vanishes
            g = out_full[j * n_s:(j + 1) * n_s]
        else:
            g = _primal_dual1(partial, ys, mu, r_cap)
        E, Eu = _means(g)
        pref[j * n_s:(j + 1) * n_s] = np.stack([2 * g, np.full(n_s, E), np.full(n_s, Eu)], axis=1)
    if keep is not None:
        keep.append(Z1)
    for i in range(3):
        Zi = Z1 * pref[:, i][None]
        pods.append(compute_pod(Zi, gram, w, f"X dual{i + 2}"))
        if keep is not None:
            keep.append(Zi)
    del Z1
    if keep is not None:
        snapshot_sink.update(snapshots=keep, weight=w)
    r_cap = min(r_cap, *(p.R_max for p in pods))
    bases = [p.Phi[:, :r_cap] for p in pods]
    red_A, cross, red_f, red_l, AV, AtV = _reduced_tensors(ops, bases)
    alpha = np.array([coercivity_factor_point(ops, y) for y in samples])
    return McrbRom(
        bases=bases,
        singular_values=[p.singular_values for p in pods],
        red_A=red_A, cross=cross, red_f=red_f, red_l=red_l, AV=AV, AtV=AtV,
        f_vec=ops.f_vec.copy(), l_vec=ops.l_vec.copy(), gram=gram,
        samples=samples.copy(), alpha=alpha,
    )


def _partial_rom(ops, bases2, gram):
    """Primal and dual-1 reduced data only (used while building duals 2-4)."""
    V0, V1 = bases2
    terms = ops.terms
    AV = np.stack([np.asarray(t @ V0) for t in terms])
    A0r = np.einsum("mr,qms->qrs", V0, AV)
    A1r = np.stack([V1.T @ np.asarray(t.T @ V1) for t in terms])
    cross = np.einsum("mr,qms->qrs", V1, AV)
    return {"A0": A0r, "A1": A1r, "cross": cross, "f0": V0.T @ ops.f_vec, "l0": V0.T @ ops.l_vec,
            "f1": V1.T @ ops.f_vec, "l1": V1.T @ ops.l_vec}


def _primal_dual1(p, ys, mu, R):
    """``l(u^R) - r(u^R_(1))`` at each sample for one mu."""
    n = ys.shape[0]
    theta = np.concatenate([np.ones((n, 1)), ys, np.broadcast_to(np.asarray(mu, float), (n, 2))], axis=1)
    g = np.empty(n)
    for s in range(0, n, _CHUNK):
        th = theta[s:s + _CHUNK]
        u = _batched_solve(p["A0"], th, p["f0"][:R], R)
        z = _batched_solve(p["A1"], th, -p["l1"][:R], R)
        Au = _affine_apply(th, p["cross"][:, :R, :R], u)
        r1 = z @ p["f1"][:R] - np.sum(z * Au, axis=1)
        g[s:s + _CHUNK] = u @ p["l0"][:R] - r1
    return g
