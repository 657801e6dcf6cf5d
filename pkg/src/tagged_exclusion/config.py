"""Experiment configuration read from a TOML file.

Rates are given as an array of tables::

    [[rates]]
    jump = [1]
    rate = 0.7

Every top-level key can be overridden with ``key=value`` strings whose
value is parsed as a TOML literal; dotted keys reach nested tables.
"""

from __future__ import annotations

import copy
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .lattice import JumpRates

OUTPUT_ENV = "TAGGED_EXCLUSION_OUTPUT"


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "dimension": 1,
    "L": None,
    "n": None,
    "rho": 0.5,
    "initial": "stationary",
    "centering": "exact",
    "t_grid": [1.0, 2.0, 5.0, 10.0],
    "trials": 1000,
    "seed": 12345,
    "lambdas": [1.0, 0.1, 0.01],
    "state_cap": 200_000,
    "output_dir": "results",
    "workers": 1,
    "random_functions": 5,
    "identity_sigma": 3.0,
    "quadrature": {"single": None, "double": None, "grading": 4},
    "duality": {"half_width": 2, "max_degree": None},
    "spectral": {"nodes": 1000, "radius": 3, "lambdas": [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6]},
    "bound": {"lambdas": [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
              "t_values": [1.0, 10.0, 100.0, 1000.0, 10000.0],
              "tolerance": 0.05, "control": True},
    "rates": [],
}


@dataclass(frozen=True)
class ExperimentConfig:
    dimension: int
    rates: JumpRates
    rho: float
    raw: dict = field(repr=False)

    def __getattr__(self, name):
        raw = object.__getattribute__(self, "raw")
        if name in raw:
            return raw[name]
        raise AttributeError(name)

    def section(self, name: str) -> dict:
        return self.raw[name]

    def echo(self) -> dict:
        """JSON-friendly copy of the resolved configuration."""
        return copy.deepcopy(self.raw)

    @property
    def output_path(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.raw["output_dir"])


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, value = (s.strip() for s in text.split("=", 1))
    try:
        parsed = tomllib.loads(f"v = {value}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value
    return key.split("."), parsed


def apply_overrides(raw: dict, overrides) -> dict:
    raw = copy.deepcopy(raw)
    for text in overrides or ():
        path, value = parse_override(text)
        node = raw
        for p in path[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override inside non-table key {p!r}")
        node[path[-1]] = value
    return raw


def _rates_from(raw_rates, d: int) -> JumpRates:
    if not raw_rates:
        raise ConfigError("rate list is empty")
    pairs = []
    for entry in raw_rates:
        if isinstance(entry, dict):
            extra = set(entry) - {"jump", "rate"}
            if extra:
                raise ConfigError(f"unknown keys in rate entry: {sorted(extra)}")
            vec, rate = entry.get("jump"), entry.get("rate")
        else:
            vec, rate = entry
        if vec is None or rate is None:
            raise ConfigError(f"rate entry {entry!r} needs 'jump' and 'rate'")
        vec = vec if isinstance(vec, list) else [vec]
        pairs.append((tuple(vec), rate))
    try:
        return JumpRates.from_pairs(d, pairs).validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _positive_list(raw: dict, key: str, where: str = "") -> None:
    vals = raw[key]
    if not isinstance(vals, list) or not vals or any(not isinstance(x, (int, float)) or x <= 0
                                                     for x in vals):
        raise ConfigError(f"{where}{key} must be a nonempty list of positive numbers")


def validate(raw: dict) -> ExperimentConfig:
    d = raw["dimension"]
    if d not in (1, 2):
        raise ConfigError(f"dimension must be 1 or 2, got {d!r}")
    rho = raw["rho"]
    if not isinstance(rho, (int, float)) or not 0.0 <= rho <= 1.0:
        raise ConfigError(f"rho must lie in [0, 1], got {rho!r}")
    rates = _rates_from(raw["rates"], d)
    for key in ("trials", "seed", "state_cap", "workers"):
        if not isinstance(raw[key], int) or raw[key] < (0 if key == "seed" else 1):
            raise ConfigError(f"{key} must be a positive integer")
    _positive_list(raw, "t_grid")
    if any(b <= a for a, b in zip(raw["t_grid"], raw["t_grid"][1:])):
        raise ConfigError("t_grid must be strictly increasing")
    _positive_list(raw, "lambdas")
    _positive_list(raw["bound"], "lambdas", "bound.")
    _positive_list(raw["bound"], "t_values", "bound.")
    _positive_list(raw["spectral"], "lambdas", "spectral.")
    if raw["initial"] not in ("stationary", "canonical"):
        raise ConfigError("initial must be 'stationary' or 'canonical'")
    for key in ("L", "n"):
        if raw[key] is not None and (not isinstance(raw[key], int) or raw[key] < 1):
            raise ConfigError(f"{key} must be a positive integer")
    raw = dict(raw)
    raw["rates"] = [{"jump": list(z), "rate": r} for z, r in rates.items()]
    return ExperimentConfig(d, rates, float(rho), raw)


def load_config(path=None, overrides=None, text: str | None = None) -> ExperimentConfig:
    """Read, merge with defaults, apply ``key=value`` overrides and validate."""
    if text is None and path is not None:
        text = Path(path).read_text()
    try:
        user = tomllib.loads(text or "")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    unknown = set(user) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return validate(apply_overrides(_merge(DEFAULTS, user), overrides))
