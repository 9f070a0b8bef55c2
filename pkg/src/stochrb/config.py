"""Study configuration: a JSON file with ``model``, ``discretization`` and ``run`` blocks.

Every block is optional; missing keys take the defaults below. Unknown keys
are rejected so that typos do not silently fall back to a default.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigurationError


@dataclass(frozen=True)
class ModelConfig:
    kappa0: float = -1000.0
    sigma: float = 200.0
    L: float = 1.0
    K: int = 5
    domain: tuple[float, float] = (-0.5, 0.5)
    P_bounds: tuple[float, float] = (-200.0, 200.0)


@dataclass(frozen=True)
class DiscretizationConfig:
    n_cells: int = 16
    N_xi: int = 1024
    d: int = 2
    N_train: int = 64
    N_test: int = 64
    sample_seed: int = 20240601
    train_seed: int = 20240602
    test_seed: int = 20240603
    ref_n_cells: int = 32
    ref_N_xi: int = 16384
    ref_d: int = 3
    ref_sample_seed: int = 20240604
    # snapshot subsampling for MCRB; None uses every sample
    n_snapshot_samples: int | None = None


@dataclass(frozen=True)
class RunConfig:
    R_list: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64)
    test_mu: tuple[tuple[float, float], ...] | None = None
    pointwise_seed: int = 20240605
    out_dir: str = "results"


@dataclass(frozen=True)
class StudyConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_seed_override(self, seed: int) -> "StudyConfig":
        """Derive every seed from one integer (offsets keep the streams distinct)."""
        disc = replace(
            self.discretization,
            sample_seed=seed, train_seed=seed + 1, test_seed=seed + 2, ref_sample_seed=seed + 3,
        )
        return replace(self, discretization=disc, run=replace(self.run, pointwise_seed=seed + 4))


_TUPLE_FIELDS = {"domain", "P_bounds", "R_list"}


def _block(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"config block '{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in '{name}': {', '.join(unknown)}")
    kw = {}
    for k, v in data.items():
        if k in _TUPLE_FIELDS:
            v = tuple(v)
        elif k == "test_mu" and v is not None:
            v = tuple(tuple(float(c) for c in p) for p in v)
        kw[k] = v
    return cls(**kw)


def validate_config(cfg: StudyConfig) -> StudyConfig:
    m, d, r = cfg.model, cfg.discretization, cfg.run
    lo, hi = m.domain
    if hi <= lo:
        raise ConfigurationError("domain bounds must satisfy lo < hi")
    if (lo, hi) != (-0.5, 0.5):
        raise ConfigurationError("only the domain (-0.5, 0.5)^2 is supported")
    if m.P_bounds[1] < m.P_bounds[0]:
        raise ConfigurationError("P bounds must satisfy lo <= hi")
    if m.K < 1 or m.L <= 0 or m.sigma < 0:
        raise ConfigurationError("need K >= 1, L > 0 and sigma >= 0")
    for name in ("n_cells", "ref_n_cells"):
        n = getattr(d, name)
        if n < 2 or n % 2:
            raise ConfigurationError(f"{name} must be even and >= 2 (the output box must align with cells)")
    if d.N_xi < 2 or d.ref_N_xi < 2:
        raise ConfigurationError("N_xi must be >= 2")
    if d.d < 0 or d.ref_d < 0:
        raise ConfigurationError("polynomial degree must be >= 0")
    if d.N_train < 1 or d.N_test < 1:
        raise ConfigurationError("N_train and N_test must be >= 1")
    if d.n_snapshot_samples is not None and not 1 <= d.n_snapshot_samples <= d.N_xi:
        raise ConfigurationError("n_snapshot_samples must lie in 1..N_xi")
    if not r.R_list or min(r.R_list) < 1:
        raise ConfigurationError("R_list must contain positive integers")
    if r.test_mu is not None and any(len(p) != 2 for p in r.test_mu):
        raise ConfigurationError("test_mu entries must be pairs")
    return cfg


def config_from_dict(data: dict) -> StudyConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    unknown = sorted(set(data) - {"model", "discretization", "run"})
    if unknown:
        raise ConfigurationError(f"unknown top-level key(s): {', '.join(unknown)}")
    try:
        cfg = StudyConfig(
            model=_block(ModelConfig, data.get("model"), "model"),
            discretization=_block(DiscretizationConfig, data.get("discretization"), "discretization"),
            run=_block(RunConfig, data.get("run"), "run"),
        )
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
    return validate_config(cfg)


def load_config(path) -> StudyConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def quick_config() -> StudyConfig:
    """Scaled-down study for smoke runs."""
    return StudyConfig(
        discretization=replace(DiscretizationConfig(), n_cells=8, N_xi=64, N_train=8, N_test=8,
                               ref_n_cells=16, ref_N_xi=512, ref_d=2),
        run=RunConfig(R_list=(1, 2, 4, 8)),
    )
