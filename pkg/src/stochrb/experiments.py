"""Offline build, online evaluation and convergence drivers behind the CLI."""
from __future__ import annotations

import csv
import logging
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .artifact import OfflineArtifact, load_artifact, save_artifact
from .config import StudyConfig
from .errors import ConfigurationError
from .fem import AffineOperatorSet, assemble_operators, build_mesh
from .linalg import BandedAffineSolver
from .mcrb import (
    build_mcrb_offline,
    mc_estimators,
    mcfe_outputs,
    statistics_with_bounds,
)
from .random_field import KlExpansion, build_kl_2d
from .sgrb import (
    SgSystem,
    build_sgrb_offline,
    expectation_with_bound_sg,
    sg_output_moments,
    sg_residual_norms,
    solve_sgfe,
    solve_sgrb_chain,
    variance_with_bound_sg,
)
from .stochastic import SampleSet, build_double_orthogonal_basis, draw_mc_samples, uniform_points

log = logging.getLogger(__name__)

QUANTITIES = ("mcrb_expectation", "mcrb_variance", "sgrb_expectation", "sgrb_variance")


@dataclass
class Study:
    """Full-order ingredients of one configuration."""

    config: StudyConfig
    kl: KlExpansion
    ops: AffineOperatorSet
    sg: SgSystem
    samples: np.ndarray
    P_train: np.ndarray
    test_mu: np.ndarray


def parameter_points(cfg: StudyConfig, n: int, seed: int) -> np.ndarray:
    lo, hi = cfg.model.P_bounds
    return uniform_points(n, lo, hi, 2, seed)


def build_study(cfg: StudyConfig, n_cells: int | None = None, d: int | None = None) -> Study:
    m, disc = cfg.model, cfg.discretization
    kl = build_kl_2d(m.L, m.K)
    ops = assemble_operators(build_mesh(n_cells or disc.n_cells), kl, m.kappa0, m.sigma)
    sg = SgSystem(ops, build_double_orthogonal_basis(disc.d if d is None else d, m.K))
    samples = draw_mc_samples(disc.N_xi, m.K, disc.sample_seed).samples
    test_mu = (np.asarray(cfg.run.test_mu, dtype=float) if cfg.run.test_mu is not None
               else parameter_points(cfg, disc.N_test, disc.test_seed))
    return Study(cfg, kl, ops, sg, samples, parameter_points(cfg, disc.N_train, disc.train_seed), test_mu)


def study_from_artifact(art: OfflineArtifact) -> Study:
    st = build_study(art.config)
    if not np.array_equal(st.samples, art.samples):
        raise ConfigurationError("artifact samples do not match its configuration seed")
    art.sgrb.system = st.sg
    return st


def cmd_offline(cfg: StudyConfig, out_path=None, snapshot_sinks: dict | None = None) -> OfflineArtifact:
    """Build both reduced models; write the artifact when ``out_path`` is given.

    ``snapshot_sinks`` may map ``"mcrb"``/``"sgrb"`` to dicts that receive the
    snapshot matrices (used by POD checks).
    """
    sinks = snapshot_sinks or {}
    t0 = time.perf_counter()
    st = build_study(cfg)
    disc = cfg.discretization
    log.info("offline: M_FE=%d M_SG=%d N_xi=%d N_train=%d", st.ops.M_FE, st.sg.M_SG, disc.N_xi, disc.N_train)
    with warnings.catch_warnings():
        # rank warnings are expected for the scaled dual snapshot sets at small sizes
        warnings.simplefilter("ignore", RuntimeWarning)
        mcrb = build_mcrb_offline(st.ops, SampleSet(st.samples, disc.sample_seed), st.P_train,
                                  n_snapshot_samples=disc.n_snapshot_samples, snapshot_sink=sinks.get("mcrb"))
        t1 = time.perf_counter()
        sgrb = build_sgrb_offline(st.sg, st.P_train, snapshot_sink=sinks.get("sgrb"))
    t2 = time.perf_counter()
    art = OfflineArtifact(
        config=cfg, samples=st.samples, P_train=st.P_train,
        kl_lambdas=st.kl.lambdas, kl_pairs=np.array(st.kl.pairs, dtype=np.int64),
        mcrb=mcrb, sgrb=sgrb,
        meta={"M_FE": st.ops.M_FE, "M_SG": st.sg.M_SG, "R_max_mcrb": mcrb.R_max, "R_max_sgrb": sgrb.R_max,
              "seconds_mcrb": round(t1 - t0, 3), "seconds_sgrb": round(t2 - t1, 3)},
    )
    if out_path is not None:
        save_artifact(art, out_path)
    return art


def load_study(path) -> tuple[OfflineArtifact, Study]:
    art = load_artifact(path)
    return art, study_from_artifact(art)


def _check_mu(cfg: StudyConfig, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (2,):
        raise ConfigurationError("mu must have two components")
    lo, hi = cfg.model.P_bounds
    if np.any(mu < lo) or np.any(mu > hi):
        warnings.warn(f"mu={mu.tolist()} lies outside P=[{lo}, {hi}]^2; extrapolating", UserWarning, stacklevel=2)
    return mu


def _check_R(art: OfflineArtifact, R: int):
    rmax = min(art.mcrb.R_max, art.sgrb.R_max)
    if not 1 <= R <= rmax:
        raise ConfigurationError(f"R={R} outside 1..{rmax}")


def _estimate_record(est) -> dict:
    return {"value": est.value, "corrected": est.corrected_value, "bound": est.bound,
            "components": {k: float(v) for k, v in est.components.items()}}


def sgrb_online(art: OfflineArtifact, mu, R: int) -> dict:
    """SGRB statistics at one mu: one reduced chain, no sample loop."""
    chain = solve_sgrb_chain(art.sgrb, mu, R)
    norms = sg_residual_norms(art.sgrb, chain)
    e = expectation_with_bound_sg(art.sgrb, mu, R, chain=chain, norms=norms)
    v = variance_with_bound_sg(art.sgrb, mu, R, chain=chain, norms=norms)
    return {"expectation": _estimate_record(e), "variance": _estimate_record(v)}


def mcrb_online(art: OfflineArtifact, mu, R: int) -> dict:
    e, v = statistics_with_bounds(art.mcrb, mu, R)
    return {"expectation": _estimate_record(e), "variance": _estimate_record(v)}


def cmd_evaluate(art: OfflineArtifact, mu, R: int) -> dict:
    if art.sgrb.system is None:
        study_from_artifact(art)
    mu = _check_mu(art.config, mu)
    _check_R(art, R)
    return {"mu": mu.tolist(), "R": int(R), "mcrb": mcrb_online(art, mu, R), "sgrb": sgrb_online(art, mu, R)}


def full_order_statistics(st: Study, mu, solver: BandedAffineSolver | None = None) -> dict:
    """MCFE estimates over the study samples and exact SGFE moments."""
    g = mcfe_outputs(st.ops, st.samples, mu, solver=solver)
    E, _, V = mc_estimators(g)
    Es, Vs = sg_output_moments(st.sg.E, st.ops.l_vec, solve_sgfe(st.sg, mu))
    return {"mcfe": (E, V), "sgfe": (Es, Vs)}


def errors_and_bounds(art: OfflineArtifact, st: Study, mu, R_list, reference: dict | None = None) -> dict:
    """Per R: (error, bound) of corrected estimates for the four quantities."""
    ref = reference or full_order_statistics(st, mu)
    out = {q: [] for q in QUANTITIES}
    for R in R_list:
        e, v = statistics_with_bounds(art.mcrb, mu, R)
        out["mcrb_expectation"].append((abs(ref["mcfe"][0] - e.corrected_value), e.bound))
        out["mcrb_variance"].append((abs(ref["mcfe"][1] - v.corrected_value), v.bound))
        s = sgrb_online(art, mu, R)
        out["sgrb_expectation"].append((abs(ref["sgfe"][0] - s["expectation"]["corrected"]), s["expectation"]["bound"]))
        out["sgrb_variance"].append((abs(ref["sgfe"][1] - s["variance"]["corrected"]), s["variance"]["bound"]))
    return {q: np.array(v) for q, v in out.items()}


def pointwise_mu(cfg: StudyConfig, mu=None) -> np.ndarray:
    if mu is not None:
        return np.asarray(mu, dtype=float)
    return parameter_points(cfg, 1, cfg.run.pointwise_seed)[0]


def cmd_convergence(art: OfflineArtifact, mode: str, R_list=None, mu=None, out_dir=None) -> dict:
    """Convergence tables ``R, Error, Bound`` per quantity.

    ``pointwise`` evaluates at one mu; ``l2`` reports root-mean-square error
    and bound over the test parameter set.
    """
    st = study_from_artifact(art)
    R_list = [int(r) for r in (R_list or art.config.run.R_list)]
    rmax = min(art.mcrb.R_max, art.sgrb.R_max)
    if any(not 1 <= r <= rmax for r in R_list):
        raise ConfigurationError(f"R_list entries must lie in 1..{rmax}")
    if mode == "pointwise":
        points = pointwise_mu(art.config, mu)[None]
    elif mode == "l2":
        points = st.test_mu
    else:
        raise ConfigurationError(f"unknown mode {mode!r}; use pointwise or l2")
    per_mu = [errors_and_bounds(art, st, p, R_list) for p in points]
    tables = {}
    for q in QUANTITIES:
        stack = np.stack([d[q] for d in per_mu])  # (n_mu, n_R, 2)
        agg = np.sqrt(np.mean(stack**2, axis=0)) if mode == "l2" else stack[0]
        tables[q] = [(R, float(err), float(bnd)) for R, (err, bnd) in zip(R_list, agg)]
    if out_dir is not None:
        write_tables(tables, Path(out_dir), prefix=f"{mode}_")
    return tables


def write_tables(tables: dict, out_dir: Path, prefix: str = "") -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for q, rows in tables.items():
        p = out_dir / f"{prefix}{q}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["R", "Error", "Bound"])
            for R, err, bnd in rows:
                w.writerow([int(R), repr(float(err)), repr(float(bnd))])
        paths.append(p)
    return paths


def parameter_sweep(st: Study, n_grid: int = 21) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SGFE expectation and variance of the output on an ``n_grid`` x ``n_grid`` mu-grid."""
    lo, hi = st.config.model.P_bounds
    g = np.linspace(lo, hi, n_grid)
    E = np.empty((n_grid, n_grid))
    V = np.empty((n_grid, n_grid))
    for i, m1 in enumerate(g):
        for j, m2 in enumerate(g):
            E[i, j], V[i, j] = sg_output_moments(st.sg.E, st.ops.l_vec, solve_sgfe(st.sg, (m1, m2)))
    return g, E, V
