"""Run configuration: config-file keys merged with flag overrides.

Config files are either JSON objects or flat ``key = value`` text. Flags win
over file values. Seeds are mandatory (there is no wall-clock default), and
every artifact directory receives the fully resolved configuration.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .losses import LossWeights


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int | None = None
    scale: str = "desk"            # desk | paper
    scenarios: int = 500           # simulations to run (before boundary filter)
    grid: int | None = None        # derived from scale when unset
    cell_size_m: float = 62.5
    base_ros: float | None = None  # derived from scale when unset
    margin_cells: int = 3
    train_fraction: float = 0.8
    batch_size: int = 16
    g_steps: int = 2000
    n_critic: int = 5
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    w_adv: float = 1.0
    w_l1: float = 20.0
    w_dice: float = 0.3
    w_gp: float = 10.0
    ensemble: int = 5
    threshold: float = 15.0 / 255.0
    jobs: int = 1
    checkpoint_every: int = 1000

    def finalize(self) -> "RunConfig":
        if self.seed is None:
            raise ConfigError("seed is required (reproducibility contract); "
                              "set it in the config file or pass --seed")
        if self.scale not in ("desk", "paper"):
            raise ConfigError(f"unknown scale {self.scale!r}; expected desk or paper")
        if self.grid is None:
            self.grid = 32 if self.scale == "desk" else 128
        if self.base_ros is None:
            # keep 12-hour burns inside the site at either extent
            self.base_ros = 0.6 if self.scale == "desk" else 2.5
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        if self.ensemble < 1 or self.jobs < 1:
            raise ConfigError("ensemble and jobs must be >= 1")
        return self

    def loss_weights(self) -> LossWeights:
        return LossWeights(w_adv=self.w_adv, w_l1=self.w_l1,
                           w_dice=self.w_dice, w_gp=self.w_gp)

    def resolved(self) -> dict:
        return asdict(self)

    def write_resolved(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "resolved_config.json").write_text(
            json.dumps(self.resolved(), indent=1, sort_keys=True))


_FIELD_TYPES = {f.name: f.type for f in RunConfig.__dataclass_fields__.values()}
_INT_KEYS = {"seed", "scenarios", "grid", "margin_cells", "batch_size", "g_steps",
             "n_critic", "ensemble", "jobs", "checkpoint_every"}
_FLOAT_KEYS = {"cell_size_m", "base_ros", "train_fraction", "lr", "beta1", "beta2",
               "w_adv", "w_l1", "w_dice", "w_gp", "threshold"}


def _coerce(key: str, value):
    if value is None or key not in _FIELD_TYPES:
        return value
    if isinstance(value, str):
        value = value.strip()
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {value!r}") from exc
    return value


def parse_config_file(path) -> dict:
    """JSON object or flat ``key = value`` lines ('#' starts a comment)."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: JSON config must be an object")
        return {k: _coerce(k, v) for k, v in data.items()}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = _coerce(key, value)
    return out


def resolve_config(config_path=None, overrides: dict | None = None) -> RunConfig:
    """File values first, then non-None overrides (flags win)."""
    cfg = RunConfig()
    merged: dict = {}
    if config_path is not None:
        merged.update(parse_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = _coerce(key, value)
    unknown = set(merged) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, value in merged.items():
        setattr(cfg, key, value)
    return cfg.finalize()
