"""Experiment configuration: TOML with strict keys."""
from __future__ import annotations

import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "EXPERIMENTS", "SCHEMA"]

EXPERIMENTS = ("estimate", "localize", "homogenize", "gamma", "jensen", "structure")

# allowed keys per table; a nested dict value means a sub-table with free keys
SCHEMA = {
    "": {"experiment", "seed", "name", "output", "sequence", "estimator", "integrand", "operator",
         "homogenize", "gamma", "jensen", "localize", "structure", "tolerances", "golden"},
    "output": {"dir", "ym", "csv", "summary", "figures"},
    "sequence": {"kind", "schedule", "resolution", "lower", "upper", "params"},
    "estimator": {"torus_resolution", "z_cut", "n_avg", "dust", "atom_factor", "sectors_2d", "oversample",
                  "max_samples"},
    "integrand": {"name"},
    "operator": {"name", "d", "N"},
    "homogenize": {"z", "R", "grid", "x", "restarts", "max_iter"},
    "gamma": {"target", "resolution", "lower", "upper", "schedule", "n_random", "grid", "tail"},
    "gamma.target": {"kind", "value"},
    "jensen": {"integrands"},
    "localize": {"x0", "mode", "radii", "resolution"},
    "structure": {"rho_atom_factor", "expect"},
    "tolerances": {"tau_hom", "tau_j", "tau_gamma", "tau_cone", "tv", "atom_location_cells", "atom_mass_rel",
                   "nu", "a_residual", "representation"},
    "golden": {"reference", "bins"},
}
FREE_TABLES = {"sequence.params"}


class ConfigError(ValueError):
    """Invalid configuration (unknown key, missing field or bad value)."""


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    name: str = "experiment"
    output: dict = field(default_factory=dict)
    sequence: dict = field(default_factory=dict)
    estimator: dict = field(default_factory=dict)
    integrand: dict = field(default_factory=dict)
    operator: dict = field(default_factory=dict)
    homogenize: dict = field(default_factory=dict)
    gamma: dict = field(default_factory=dict)
    jensen: dict = field(default_factory=dict)
    localize: dict = field(default_factory=dict)
    structure: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    golden: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        return self.raw


def _check_keys(table: dict, prefix: str):
    allowed = SCHEMA.get(prefix)
    for key, value in table.items():
        path = f"{prefix}.{key}" if prefix else key
        if allowed is not None and key not in allowed:
            raise ConfigError(f"unknown key {path!r}")
        if isinstance(value, dict) and path not in FREE_TABLES:
            if path not in SCHEMA:
                raise ConfigError(f"key {path!r} must not be a table")
            _check_keys(value, path)


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a parsed TOML document."""
    _check_keys(data, "")
    for key in SCHEMA[""]:
        if key not in ("experiment", "seed", "name") and key in data and not isinstance(data[key], dict):
            raise ConfigError(f"key {key!r} must be a table")
    if "experiment" not in data:
        raise ConfigError("missing key 'experiment'")
    if data["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {data['experiment']!r} (one of {', '.join(EXPERIMENTS)})")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("key 'seed' must be an integer")
    cfg = ExperimentConfig(experiment=data["experiment"], seed=seed, name=str(data.get("name", data["experiment"])),
                           raw=data, **{k: dict(data.get(k, {})) for k in SCHEMA[""]
                                        if k not in ("experiment", "seed", "name")})
    _resolve_names(cfg)
    return cfg


def _resolve_names(cfg: ExperimentConfig):
    """All referenced registry names must resolve."""
    from .integrands import get_integrand
    from .pde import parse_operator
    from .sequences import SEQUENCE_KINDS, parse_schedule
    if cfg.sequence:
        kind = cfg.sequence.get("kind")
        if kind not in SEQUENCE_KINDS or kind in ("custom", "blowup"):
            raise ConfigError(f"unknown sequence kind {kind!r}")
        if "schedule" not in cfg.sequence:
            raise ConfigError("missing key 'sequence.schedule'")
        try:
            parse_schedule(cfg.sequence["schedule"], cfg.sequence.get("params"))
        except Exception as exc:
            raise ConfigError(f"bad 'sequence.schedule': {exc}") from None
    names = []
    if cfg.integrand:
        names.append(cfg.integrand.get("name"))
    names += list(cfg.jensen.get("integrands", []))
    for n in names:
        try:
            get_integrand(str(n))
        except Exception:
            raise ConfigError(f"unknown integrand {n!r}") from None
    if cfg.operator:
        try:
            parse_operator(str(cfg.operator.get("name")), d=cfg.operator.get("d"), N=cfg.operator.get("N"))
        except Exception as exc:
            raise ConfigError(f"bad operator {cfg.operator.get('name')!r}: {exc}") from None
    needs = {
        "estimate": ("sequence",),
        "localize": ("sequence", "localize"),
        "homogenize": ("integrand", "operator", "homogenize"),
        "gamma": ("integrand", "operator", "gamma"),
        "jensen": ("sequence", "operator"),
        "structure": ("sequence", "operator"),
    }[cfg.experiment]
    for key in needs:
        if not getattr(cfg, key):
            raise ConfigError(f"experiment {cfg.experiment!r} needs a [{key}] table")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data)
