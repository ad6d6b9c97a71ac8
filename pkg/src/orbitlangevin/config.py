"""Flat key-value experiment configuration with dotted sections.

The config format is deliberately trivial: one `key = value` pair per line,
`#` comments, dotted section prefixes (experiment, action.*, potential.*,
beta.*, sde.*, stats.*, ...).  CLI flags override file keys.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .actions import ACTION_KINDS
from .errors import ConfigError

EXPERIMENTS = ("equivalence", "stationary", "orbit_bm", "counterexample",
               "geometry_check", "fully_projected")

STATISTICAL_EXPERIMENTS = ("equivalence", "stationary", "orbit_bm",
                           "counterexample", "fully_projected")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "equivalence"
    action_kind: str = "so_d_rotation"
    action_dim: int = 3
    potential_kind: str = "quadratic"
    potential_coeff: float = 1.0
    potential_quartic: float = 0.0
    alpha_const: float = 1.0
    beta_c: float = 0.5
    beta_bump_lo: float = 0.8
    beta_bump_hi: float = 2.5
    beta_ramp: float = 0.25
    phi_pad: float = 0.3
    epsilon: float = 0.5
    tau0: float | None = None
    tau1: float | None = None
    curvature_source: str = "closed_form"
    dt: float = 1e-3
    group_dt: float = 1e-4
    horizon: float = 1.0
    checkpoints: tuple = (0.25, 0.5, 1.0)
    n_trajectories: int = 4000
    burn_in: float = 20.0
    n_samples: int = 10000
    anchor_radius: float = 2.0
    n_permutations: int = 500
    level: float = 0.01
    n_draws: int = 100
    seed: int = 20250809
    out_dir: str = "runs/latest"
    dump_trajectories: bool = False
    csv_mode: str = "per_trajectory"

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = list(val)
            out[f.name] = val
        return out


# dotted config key -> dataclass field
KEY_MAP = {
    "experiment": "experiment",
    "action.kind": "action_kind",
    "action.dim": "action_dim",
    "potential.kind": "potential_kind",
    "potential.coeff": "potential_coeff",
    "potential.quartic": "potential_quartic",
    "alpha_const": "alpha_const",
    "beta.c": "beta_c",
    "beta.bump_lo": "beta_bump_lo",
    "beta.bump_hi": "beta_bump_hi",
    "beta.ramp": "beta_ramp",
    "phi.pad": "phi_pad",
    "stationary.epsilon": "epsilon",
    "stationary.tau0": "tau0",
    "stationary.tau1": "tau1",
    "geometry.curvature_source": "curvature_source",
    "geometry.n_draws": "n_draws",
    "sde.dt": "dt",
    "sde.group_dt": "group_dt",
    "sde.horizon": "horizon",
    "sde.checkpoints": "checkpoints",
    "sde.n_trajectories": "n_trajectories",
    "sde.burn_in": "burn_in",
    "stats.n_samples": "n_samples",
    "stats.n_permutations": "n_permutations",
    "stats.level": "level",
    "orbit.anchor_radius": "anchor_radius",
    "seed": "seed",
    "out_dir": "out_dir",
    "output.dump_trajectories": "dump_trajectories",
    "output.csv_mode": "csv_mode",
}

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if name == "checkpoints":
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if name in ("tau0", "tau1"):
        return None if raw.lower() in ("none", "") else float(raw)
    if name == "dump_trajectories":
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"boolean expected for {name}, got {raw!r}")
    if name in ("action_dim", "n_trajectories", "n_samples", "n_permutations",
                "n_draws", "seed"):
        return int(raw)
    if name in ("experiment", "action_kind", "potential_kind", "out_dir",
                "csv_mode", "curvature_source"):
        return raw
    return float(raw)


def parse_config(path: str) -> ExperimentConfig:
    """Load a flat key-value config file and validate it."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = body.split("=", 1)
            key = key.strip()
            if key not in KEY_MAP:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            name = KEY_MAP[key]
            try:
                values[name] = _parse_value(name, raw)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    cfg = ExperimentConfig(**values)
    validate_config(cfg)
    return cfg


def with_overrides(cfg: ExperimentConfig, **updates) -> ExperimentConfig:
    updates = {k: v for k, v in updates.items() if v is not None}
    out = replace(cfg, **updates)
    validate_config(out)
    return out


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}; expected one of {EXPERIMENTS}")
    if cfg.action_kind not in ACTION_KINDS:
        raise ConfigError(f"unknown action {cfg.action_kind!r}")
    if cfg.action_dim < 2:
        raise ConfigError("action.dim must be at least 2")
    if cfg.dt <= 0.0 or cfg.group_dt <= 0.0:
        raise ConfigError("dt and group_dt must be positive")
    if cfg.horizon < cfg.dt:
        raise ConfigError("horizon must be at least one step")
    if cfg.experiment in STATISTICAL_EXPERIMENTS and cfg.n_trajectories < 100:
        raise ConfigError("statistical experiments need at least 100 trajectories")
    if not 0.0 < cfg.level < 0.5:
        raise ConfigError("significance level must lie in (0, 0.5)")
    if cfg.n_permutations < 200:
        raise ConfigError("need at least 200 permutations")
    if not 0.0 <= cfg.beta_c <= cfg.alpha_const:
        raise ConfigError("beta dip must satisfy 0 <= c <= alpha_const")
    if cfg.beta_bump_lo >= cfg.beta_bump_hi:
        raise ConfigError("bump support must satisfy bump_lo < bump_hi")
    if cfg.beta_bump_lo - cfg.phi_pad <= 1e-3:
        raise ConfigError("bump support (minus phi pad) must stay strictly inside the regular region")
    if not 0.0 < cfg.epsilon <= 1.0:
        raise ConfigError("epsilon must lie in (0, 1]")
    if cfg.csv_mode not in ("per_trajectory", "long"):
        raise ConfigError("csv_mode must be per_trajectory or long")
    if cfg.curvature_source not in ("closed_form", "curvature_trace"):
        raise ConfigError("curvature source must be closed_form or curvature_trace")
    if cfg.experiment == "equivalence":
        if any(t <= 0 or t > cfg.horizon + 1e-12 for t in cfg.checkpoints):
            raise ConfigError("checkpoints must lie in (0, horizon]")


def stationary_taus(cfg: ExperimentConfig) -> tuple[float, float]:
    """Plateau knots in log-volume units; defaults put the ramp on radii [0.4, 0.6]."""
    d = cfg.action_dim
    tau0 = cfg.tau0 if cfg.tau0 is not None else (d - 1) * float(np.log(0.4))
    tau1 = cfg.tau1 if cfg.tau1 is not None else (d - 1) * float(np.log(0.6))
    if tau0 >= tau1:
        raise ConfigError("need tau0 < tau1")
    return tau0, tau1
