"""Run configuration: INI-style ``key = value`` sections, strictly validated.

Example::

    [run]
    preset = main
    mode = shared
    t_train = 10
    t_record = 300

    [features]
    k = 3
    n_nn = 2

    [ridge]
    alpha = 0.01

Sections: ``run``, ``model`` (overrides of the preset's Lorenz96 constants),
``features``, ``ridge``, ``sweep``.  Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .errors import InvalidInputError
from .features import FeatureConfig
from .harness import DEFAULT_ALPHA_GRID, ExperimentPreset, get_preset
from .lorenz96 import ModelParams
from .ridge import MODES, RidgeConfig


class ConfigError(InvalidInputError):
    """Malformed or unknown configuration entries."""


_RUN_KEYS = {
    "preset": str, "mode": str, "t_train": float, "t_record": float, "seed_train": int,
    "seed_ic": int, "workers": int, "out": str, "n_train_sets": int, "n_ics": int,
    "shuffle_seed": int, "test_length": float, "steps": int, "cache_dir": str,
}
_MODEL_KEYS = {f.name: f.type for f in dataclasses.fields(ModelParams)}
_FEATURE_KEYS = {"k": int, "n_nn": int, "c": float}
_RIDGE_KEYS = {"alpha": float}
_SWEEP_KEYS = {"axis": str, "values": str, "alpha_grid": str}
_SECTIONS = {"run": _RUN_KEYS, "model": _MODEL_KEYS, "features": _FEATURE_KEYS,
             "ridge": _RIDGE_KEYS, "sweep": _SWEEP_KEYS}
_TYPES = {"int": int, "float": float, "str": str}


def default_workers() -> int:
    raw = os.environ.get("NGRC_WORKERS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"NGRC_WORKERS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("NGRC_WORKERS must be >= 1")
    return n


@dataclass
class RunConfig:
    preset: str = "main"
    model_overrides: Dict[str, object] = field(default_factory=dict)
    features: Optional[FeatureConfig] = None
    ridge: Optional[RidgeConfig] = None
    mode: str = "independent"
    t_train: float = 10.0
    t_record: Optional[float] = None
    test_length: Optional[float] = None
    seed_train: int = 0
    seed_ic: int = 0
    n_train_sets: int = 10
    n_ics: int = 10
    shuffle_seed: int = 0
    workers: int = field(default_factory=default_workers)
    out: str = "."
    steps: Optional[int] = None
    cache_dir: Optional[str] = None
    sweep_axis: str = "alpha"
    sweep_values: Optional[List[float]] = None
    alpha_grid: List[float] = field(default_factory=lambda: list(DEFAULT_ALPHA_GRID))

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.sweep_axis not in ("alpha", "ttrain"):
            raise ConfigError(f"sweep axis must be 'alpha' or 'ttrain', got {self.sweep_axis!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self.resolve_preset()
        return self

    def resolve_preset(self) -> ExperimentPreset:
        """The named preset with every override applied."""
        base = get_preset(self.preset)
        params = dataclasses.replace(base.params, **self.model_overrides)
        changes = {"params": params}
        if self.features is not None:
            changes["features"] = self.features
        if self.ridge is not None:
            changes["alpha"] = self.ridge.alpha
        if self.t_record is not None:
            changes["t_record"] = self.t_record
        if self.test_length is not None:
            changes["test_length"] = self.test_length
        return dataclasses.replace(base, **changes)

    @property
    def alpha(self) -> float:
        return self.resolve_preset().alpha


def _convert(section: str, key: str, raw: str, kind):
    kind = _TYPES.get(kind, kind) if isinstance(kind, str) else kind
    try:
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_floats(raw: str) -> List[float]:
    try:
        return [float(v) for v in raw.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {raw!r}") from None


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values: Dict[str, Dict[str, object]] = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        allowed = _SECTIONS[section]
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[section][key] = _convert(section, key, raw, allowed[key])

    cfg = RunConfig()
    for key, val in values.get("run", {}).items():
        setattr(cfg, key, val)
    cfg.model_overrides = dict(values.get("model", {}))
    if "features" in values:
        cfg.features = FeatureConfig(**{**dataclasses.asdict(FeatureConfig()), **values["features"]})
    if "ridge" in values:
        cfg.ridge = RidgeConfig(**values["ridge"])
    sweep = values.get("sweep", {})
    if "axis" in sweep:
        cfg.sweep_axis = sweep["axis"]
    if "values" in sweep:
        cfg.sweep_values = parse_floats(sweep["values"])
    if "alpha_grid" in sweep:
        cfg.alpha_grid = parse_floats(sweep["alpha_grid"])
    return cfg.validate()
