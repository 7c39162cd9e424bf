"""
Run configuration.

A config file is a flat ``key: value`` mapping (YAML syntax, no nesting).
Every key is optional and falls back to the defaults below; an unknown key
is an error so a typo in a threshold name cannot pass silently.  Relative
data paths resolve against the directory holding the config file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import pandas as pd
import yaml

from .errors import ConfigError

PHASE_NAMES = ("train", "validate", "test")


@dataclass
class Config:
    crsp_path: str = "crsp.csv"
    compustat_path: str = "compustat.csv"
    links_path: str = "links.csv"
    sentiment_path: str | None = "sentiment.csv"
    benchmark_path: str | None = "benchmark.csv"

    # mid-cap band, currency, inclusive
    midcap_min: float = 2e9
    midcap_max: float = 10e9
    risk_aversion: float = 2.0
    z_clip: float = 3.0
    vif_threshold: float = 10.0
    corr_threshold: float = 0.8
    cov_window_months: int = 36
    min_history_months: int = 12
    shrinkage: float = 0.1
    ridge_mu: float = 1e-3
    mu_model: str = "ridge"
    gross_target: float = 1.0
    max_weight: float | None = None
    max_staleness_months: int | None = None

    train_fit_start: str = "2013-01-01"
    train_fit_end: str = "2021-12-31"
    train_eval_start: str = "2013-01-01"
    train_eval_end: str = "2021-12-31"
    validate_fit_start: str = "2013-01-01"
    validate_fit_end: str = "2021-12-31"
    validate_eval_start: str = "2022-01-01"
    validate_eval_end: str = "2022-12-31"
    test_fit_start: str = "2013-01-01"
    test_fit_end: str = "2022-12-31"
    test_eval_start: str = "2023-01-01"
    test_eval_end: str = "2023-12-31"

    seed: int = 0
    synth_n_stocks: int = 500
    synth_n_months: int = 132
    synth_start: str = "2013-01-01"
    planted_beta: float = 0.01

    base_dir: str = dataclasses.field(default=".", repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = [
            "midcap_min", "midcap_max", "risk_aversion", "z_clip", "vif_threshold",
            "corr_threshold", "cov_window_months", "min_history_months", "gross_target",
            "synth_n_stocks", "synth_n_months",
        ]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.midcap_min < self.midcap_max:
            raise ConfigError("midcap_min must be below midcap_max")
        if not 0 <= self.shrinkage <= 1:
            raise ConfigError(f"shrinkage must lie in [0, 1], got {self.shrinkage}")
        if self.ridge_mu < 0:
            raise ConfigError(f"ridge_mu must be non-negative, got {self.ridge_mu}")
        if self.cov_window_months < 2:
            raise ConfigError("cov_window_months must be at least 2")
        if self.max_weight is not None and not self.max_weight > 0:
            raise ConfigError("max_weight must be positive when set")
        if self.mu_model not in ("ridge", "fama_macbeth", "rank_ic"):
            raise ConfigError(f"mu_model must be ridge, fama_macbeth or rank_ic, got {self.mu_model!r}")
        for phase in PHASE_NAMES:
            fs, fe, es, ee = self.phase_dates(phase)
            if not (fs <= fe and es <= ee):
                raise ConfigError(f"{phase} phase dates are not ordered")
            if phase != "train" and not fe < es:
                raise ConfigError(f"{phase} phase: fit window must end before evaluation starts")

    def phase_dates(self, phase: str) -> tuple[pd.Timestamp, ...]:
        try:
            return tuple(
                pd.Timestamp(getattr(self, f"{phase}_{part}"))
                for part in ("fit_start", "fit_end", "eval_start", "eval_end")
            )
        except ValueError as exc:
            raise ConfigError(f"{phase} phase: {exc}") from None

    def resolve(self, name: str) -> Path | None:
        """Absolute path for one of the ``*_path`` keys."""
        value = getattr(self, name)
        if value is None:
            return None
        path = Path(value)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "base_dir"}

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)


def _coerce(name: str, kind: str, value):
    if value is None:
        if "None" in kind:
            return None
        raise ConfigError(f"{name} may not be empty")
    try:
        if kind.startswith("float"):
            return float(value)
        if kind.startswith("int"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"{value} is not an integer")
            return int(value)
        if kind.startswith("str"):
            # YAML turns bare ISO dates into date objects
            return value.isoformat() if hasattr(value, "isoformat") else str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return value


def parse_config(text: str, base_dir=".") -> Config:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not a flat key/value file: {exc}") from None
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a flat mapping of key: value lines")
    known = {f.name: f.type for f in fields(Config) if f.name != "base_dir"}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(map(str, unknown))}")
    values = {}
    for key, raw in data.items():
        if isinstance(raw, (dict, list)):
            raise ConfigError(f"{key}: nested values are not allowed")
        values[key] = _coerce(key, str(known[key]), raw)
    return Config(**values, base_dir=str(base_dir))


def load_config(path) -> Config:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text(), base_dir=path.parent)


def dump_config(config: Config) -> str:
    """Flat text form that :func:`parse_config` reads back to an equal Config."""
    lines = []
    for key, value in config.to_dict().items():
        if value is None:
            text = "null"
        elif isinstance(value, str):
            text = f'"{value}"'
        else:
            text = repr(value)
        lines.append(f"{key}: {text}")
    return "\n".join(lines) + "\n"
