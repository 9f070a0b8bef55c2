"""Invariant checks run against an offline artifact.

Each check returns a list of ``CheckResult``; a failure records the module,
the invariant name and observed vs. required values.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .artifact import OfflineArtifact
from .experiments import Study, errors_and_bounds, sgrb_online, study_from_artifact
from .fem import assemble_full_operator, assemble_operators, build_mesh
from .linalg import CholeskyFactor, RieszContext, smallest_generalized_eigenvalue
from .mcrb import (
    coercivity_factor_point,
    mc_estimators,
    mcfe_outputs,
    output_with_bound,
    solve_mcfe,
    solve_mcrb_chain,
)
from .pod import compute_pod, projection_error
from .random_field import build_kl_2d
from .sgrb import (
    SgSystem,
    coercivity_factor_sg,
    kronecker_system,
    legendre_to_double_orthogonal,
    sg_output_moments,
    solve_sgfe,
    solve_sgrb_chain,
)
from .stochastic import build_double_orthogonal_basis


@dataclass
class CheckResult:
    module: str
    name: str
    passed: bool
    observed: float
    required: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.module}: {self.name} (observed {self.observed:.3e}, required {self.required:.3e})"


def _le(module, name, observed, required) -> CheckResult:
    observed = float(observed)
    return CheckResult(module, name, bool(np.isfinite(observed) and observed <= required), observed, float(required))


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    nb = np.linalg.norm(b)
    return np.linalg.norm(a - b) / (nb if nb > 0 else 1.0)


def check_geometry(st: Study) -> list[CheckResult]:
    ops = st.ops
    res = [
        _le("geometry-fem", "convection skew-symmetry", max(abs(A + A.T).max() for A in ops.Amu), 1e-14),
        _le("geometry-fem", "stiffness/mass symmetry", abs(ops.gram_X - ops.gram_X.T).max(), 1e-14),
    ]
    rng = np.random.default_rng(0)
    y = rng.uniform(-np.sqrt(3), np.sqrt(3), ops.K)
    mu = rng.uniform(-200, 200, 2)
    m = st.config.model
    direct = assemble_full_operator(build_mesh(st.config.discretization.n_cells), st.kl, m.kappa0, m.sigma, y, mu)
    diff = abs(direct - ops.matrix(y, mu)).max() / abs(direct).max()
    res.append(_le("geometry-fem", "affine vs direct assembly", diff, 1e-12))
    return res


def check_random_field(st: Study) -> list[CheckResult]:
    res = [_le("random-field", f"1D eigen-equation residual mode {i}", abs(md.residual(1.0 / st.kl.L)), 1e-10)
           for i, md in enumerate(st.kl.modes_1d)]
    lam = st.kl.lambdas
    res.append(_le("random-field", "eigenvalues nonincreasing", max(0.0, float(np.max(np.diff(lam)))), 0.0))
    return res


def check_stochastic(st: Study) -> list[CheckResult]:
    b = st.sg.basis
    pts, w = np.polynomial.legendre.leggauss(b.d + 2)
    y = np.sqrt(3) * pts
    P = b.evaluate_1d(y)
    G = (P * (w / 2)[:, None]).T @ P
    Yd = (P * (w / 2 * y)[:, None]).T @ P
    return [
        _le("stochastic-basis", "1D orthonormality", np.abs(G - np.eye(b.d + 1)).max(), 1e-12),
        _le("stochastic-basis", "1D diagonalization", np.abs(Yd - np.diag(b.diag_values)).max(), 1e-12),
        _le("stochastic-basis", "sum of squared expectation weights", abs(np.sum(st.sg.E**2) - 1.0), 1e-12),
    ]


def check_linalg(st: Study) -> list[CheckResult]:
    G = st.ops.gram_X.toarray()
    ctx = RieszContext(G)
    z = np.random.default_rng(1).standard_normal(G.shape[0])
    duality = abs(ctx.dual_norm(G @ z) - np.sqrt(z @ G @ z)) / np.sqrt(z @ G @ z)
    C = CholeskyFactor(G)
    return [
        _le("linalg-core", "dual-norm duality", duality, 1e-10),
        _le("linalg-core", "Cholesky reconstruction", _rel(C.matrix(), G), 1e-12),
    ]


def check_pod(st: Study, art: OfflineArtifact) -> list[CheckResult]:
    res = []
    G = st.ops.gram_X.toarray()
    for i, B in enumerate(art.mcrb.bases):
        res.append(_le("pod", f"MCRB basis {i} X-orthonormality", np.abs(B.T @ G @ B - np.eye(B.shape[1])).max(), 1e-10))
    C = CholeskyFactor(G)
    for i, B in enumerate(art.sgrb.bases):
        SB = np.vstack([C.apply(blk) for blk in st.sg.blocks(B)])
        res.append(_le("pod", f"SGRB basis {i} Xbar-orthonormality", np.abs(SB.T @ SB - np.eye(B.shape[1])).max(), 1e-10))
    # optimality identity on a small fresh snapshot set
    ys = st.samples[:16]
    X = np.stack([solve_mcfe(st.ops, y, mu) for mu in art.P_train[:2] for y in ys], axis=1)
    pod = compute_pod(X, G, 1.0 / X.shape[1])
    worst = 0.0
    for R in range(pod.R_max + 1):
        tail = float(np.sum(pod.singular_values[R:] ** 2))
        total = float(np.sum(pod.singular_values**2))
        worst = max(worst, abs(projection_error(X, G, 1.0 / X.shape[1], pod, R) - tail) / total)
    res.append(_le("pod", "projection error equals discarded energy", worst, 1e-10))
    return res


def check_reduced_affinity(st: Study, art: OfflineArtifact) -> list[CheckResult]:
    rom = art.mcrb
    V = rom.bases[0]
    worst = max(_rel(rom.red_A[0, q], V.T @ (A @ V)) for q, A in enumerate(st.ops.terms))
    for i in range(1, len(rom.bases)):
        Vi = rom.bases[i]
        worst = max(worst, max(_rel(rom.red_A[i, q], Vi.T @ (A.T @ Vi)) for q, A in enumerate(st.ops.terms)))
    res = [_le("mcrb", "reduced operator affinity", worst, 1e-12)]
    srom = art.sgrb
    Vb = srom.bases[0]
    mats = [st.sg.block_term(None), st.sg.block_term(0), st.sg.block_term(1)]
    worst = max(_rel(srom.red_A[0, q], Vb.T @ (A @ Vb)) for q, A in enumerate(mats))
    mu = np.array([73.0, -41.0])
    direct = Vb.T @ st.sg.apply(mu, Vb)
    th = np.array([1.0, *mu])
    worst = max(worst, _rel(np.tensordot(th, srom.red_A[0], axes=(0, 0)), direct))
    res.append(_le("sgrb", "reduced operator affinity", worst, 1e-12))
    return res


def check_estimators() -> list[CheckResult]:
    E, Eu, V = mc_estimators([1.0, 2.0, 3.0])
    err = abs(E - 2) + abs(Eu - 3) + abs(V - 1)
    g = np.random.default_rng(3).standard_normal(50)
    shift = abs(mc_estimators(g)[2] - mc_estimators(g + 7.0)[2])
    return [_le("mcrb", "estimators on (1,2,3)", err, 1e-14), _le("mcrb", "variance shift invariance", shift, 1e-12)]


def check_coercivity(st: Study) -> list[CheckResult]:
    y = st.samples[0]
    a0 = coercivity_factor_point(st.ops, y)
    A = st.ops.matrix(y, (200.0, 0.0))
    a_mu = smallest_generalized_eigenvalue(0.5 * (A + A.T), st.ops.gram_X)
    return [
        _le("mcrb", "alpha independent of mu", abs(a_mu - a0) / a0, 1e-10),
        _le("sgrb", "alpha_bar positive", -coercivity_factor_sg(st.sg), 0.0),
    ]


def check_kronecker(st: Study) -> list[CheckResult]:
    m = st.config.model
    ops = assemble_operators(build_mesh(4), build_kl_2d(m.L, 2), m.kappa0, m.sigma)
    basis = build_double_orthogonal_basis(1, 2)
    mu = (120.0, -35.0)
    A, b = kronecker_system(ops, 1, mu)
    ref = legendre_to_double_orthogonal(basis, np.linalg.solve(A, b), ops.M_FE)
    got = solve_sgfe(SgSystem(ops, basis), mu)
    return [_le("sgrb", "block/Kronecker equivalence", _rel(got, ref), 1e-8)]


def check_sg_vs_mc(st: Study) -> list[CheckResult]:
    mu = st.test_mu[0]
    g = mcfe_outputs(st.ops, st.samples, mu)
    E_mc = g.mean()
    se = g.std(ddof=1) / np.sqrt(g.size)
    E_sg, _ = sg_output_moments(st.sg.E, st.ops.l_vec, solve_sgfe(st.sg, mu))
    return [_le("cross-model", "SG vs MC expectation (standard errors)", abs(E_sg - E_mc) / se, 4.0)]


def check_galerkin(st: Study, art: OfflineArtifact) -> list[CheckResult]:
    rom = art.mcrb
    rng = np.random.default_rng(5)
    y = st.samples[rng.integers(st.samples.shape[0])]
    mu = rng.uniform(-200, 200, 2)
    R = max(1, rom.R_max // 2)
    ch = solve_mcrb_chain(rom, y[None], mu, R)
    V = rom.bases[0][:, :R]
    res_vec = st.ops.f_vec - st.ops.matrix(y, mu) @ (V @ ch.u[0])
    orth = np.abs(V.T @ res_vec).max() / np.abs(st.ops.f_vec).max()
    out = [_le("mcrb", "primal Galerkin orthogonality", orth, 1e-10)]
    srom = art.sgrb
    Rs = max(1, srom.R_max // 2)
    sch = solve_sgrb_chain(srom, mu, Rs)
    Vb = srom.bases[0][:, :Rs]
    r = st.sg.f_bar() - st.sg.apply(mu, Vb @ sch.u)
    out.append(_le("sgrb", "primal Galerkin orthogonality", np.abs(Vb.T @ r).max() / np.abs(st.sg.f_bar()).max(), 1e-10))
    return out


def check_bounds(st: Study, art: OfflineArtifact, n_mu: int = 3) -> list[CheckResult]:
    """Bound validity on a randomized (y, mu, R) grid; slack 1e-12."""
    rng = np.random.default_rng(11)
    lo, hi = art.config.model.P_bounds
    rmax = min(art.mcrb.R_max, art.sgrb.R_max)
    R_list = sorted({1, max(1, rmax // 4), max(1, rmax // 2), rmax})
    worst = -np.inf
    for mu in rng.uniform(lo, hi, (n_mu, 2)):
        tab = errors_and_bounds(art, st, mu, R_list)
        for arr in tab.values():
            worst = max(worst, float(np.max(arr[:, 0] - arr[:, 1])))
    pw = -np.inf
    for _ in range(10):
        y = st.samples[rng.integers(st.samples.shape[0])]
        mu = rng.uniform(lo, hi, 2)
        R = int(rng.integers(1, art.mcrb.R_max + 1))
        est = output_with_bound(art.mcrb, y, mu, R)
        exact = st.ops.l_vec @ solve_mcfe(st.ops, y, mu)
        pw = max(pw, abs(exact - est.corrected_value) - est.bound)
    return [_le("cross-model", "statistics bounds minus errors (max)", worst, 1e-12),
            _le("mcrb", "pointwise output bound minus error (max)", pw, 1e-12)]


def check_reproduction(st: Study, art: OfflineArtifact) -> list[CheckResult]:
    mu = art.P_train[0]
    R = art.sgrb.R_max
    s = sgrb_online(art, mu, R)
    E, V = sg_output_moments(st.sg.E, st.ops.l_vec, solve_sgfe(st.sg, mu))
    return [
        _le("sgrb", "bounds at reproduction", max(s["expectation"]["bound"], s["variance"]["bound"]), 1e-10),
        _le("sgrb", "expectation at reproduction (relative)", abs(s["expectation"]["corrected"] - E) / abs(E), 1e-8),
    ]


def run_validation(art: OfflineArtifact, st: Study | None = None) -> list[CheckResult]:
    st = st or study_from_artifact(art)
    results: list[CheckResult] = []
    for fn in (
        lambda: check_geometry(st),
        lambda: check_random_field(st),
        lambda: check_stochastic(st),
        lambda: check_linalg(st),
        lambda: check_pod(st, art),
        lambda: check_reduced_affinity(st, art),
        check_estimators,
        lambda: check_coercivity(st),
        lambda: check_kronecker(st),
        lambda: check_sg_vs_mc(st),
        lambda: check_galerkin(st, art),
        lambda: check_bounds(st, art),
        lambda: check_reproduction(st, art),
    ):
        results.extend(fn())
    return results


def cmd_validate(art: OfflineArtifact) -> tuple[bool, list[str], float]:
    t0 = time.perf_counter()
    results = run_validation(art)
    return all(r.passed for r in results), [r.line() for r in results], time.perf_counter() - t0
