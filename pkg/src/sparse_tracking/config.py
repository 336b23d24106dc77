"""Run configuration: YAML schema, defaults and resolution to stage plans.

See ``docs/config.md`` for the documented keys.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .exceptions import ConfigurationError, SparseTrackingError
from .selection import PRESETS, plan_from_blocks, preset
from .solver import SaConfig

DEFAULTS = {
    "data": {
        "prices": None,
        "market_caps": None,
        "date_column": "date",
        "index_column": "index",
    },
    "universe": {"k": 500, "h": 150, "n": None},
    "presets": [],
    "plans": {},
    "estimation": {"lookback": 260, "shrinkage": 0.1, "weighting": "linear"},
    "solver": {
        "seed": 0,
        "restarts": 8,
        "sweeps": 300,
        "cooling": 0.97,
        "moves_per_sweep": None,
        "initial_temperature": None,
        "max_passes": 50,
    },
    "backtest": {
        "rebalance": "quarterly",
        "horizons": [1, 10, 50, 100],
        "long_horizons": {"1y": 250, "2y": 500},
        "sample_size": 200,
        "sampling": "even",
        "weight_window": 250,
    },
    "select": {"as_of": None},
    "synth": {
        "assets": 100,
        "days": 1500,
        "factors": 3,
        "seed": 0,
        "noise": 1.0,
        "mc_exponent": 1.0,
        "start": "2015-01-01",
    },
    "output": "out",
}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key not in base:
            raise ConfigurationError(f"unknown config key {path + key!r}")
        if not path and isinstance(base[key], dict) and base[key] and isinstance(value, dict):
            out[key] = _merge(base[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def _field(raw, dotted, kind, minimum=None):
    node = raw
    for part in dotted.split("."):
        node = node[part]
    if node is None:
        return None
    try:
        value = kind(node)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{dotted}: expected {kind.__name__}, got {node!r}") from None
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"{dotted}: must be at least {minimum}, got {value}")
    return value


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path=None, overrides=None):
        raw = {}
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
            if not isinstance(raw, dict):
                raise ConfigurationError("config file must hold a mapping")
            base = path.parent
        merged = _merge(DEFAULTS, raw)
        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            node = merged
            *parents, leaf = dotted.split(".")
            for part in parents:
                node = node[part]
            node[leaf] = value
        return cls(merged, base)

    def path(self, key):
        value = self.raw["data"][key]
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def output_dir(self):
        p = Path(self.raw["output"])
        return p if p.is_absolute() else self.base_dir / p

    def sa_config(self):
        try:
            return SaConfig(
                initial_temperature=_field(self.raw, "solver.initial_temperature", float),
                cooling_ratio=_field(self.raw, "solver.cooling", float),
                sweeps=_field(self.raw, "solver.sweeps", int, 1),
                moves_per_sweep=_field(self.raw, "solver.moves_per_sweep", int, 1),
                restarts=_field(self.raw, "solver.restarts", int, 1),
                rng_seed=_field(self.raw, "solver.seed", int, 0),
                max_passes=_field(self.raw, "solver.max_passes", int, 1),
            )
        except SparseTrackingError as exc:
            raise ConfigurationError(f"solver: {exc}") from None

    def universe(self, n_assets=None):
        k = _field(self.raw, "universe.k", int, 1)
        h = _field(self.raw, "universe.h", int, 1)
        if n_assets is not None and k > n_assets:
            raise ConfigurationError(f"universe.k: {k} exceeds the {n_assets} assets in the data")
        return k, h

    def plans(self, n_assets=None):
        """Resolved ``{name: StagePlan}`` in configuration order."""
        k, h = self.universe(n_assets)
        out = {}
        for name in self.raw["presets"] or []:
            if str(name).upper() not in PRESETS:
                raise ConfigurationError(f"presets: unknown preset {name!r}")
            out[str(name).upper()] = preset(name, k, h)
        for name, block in (self.raw["plans"] or {}).items():
            if not isinstance(block, dict) or "stages" not in block:
                raise ConfigurationError(f"plans.{name}: a 'stages' list is required")
            n = block.get("n", self.raw["universe"]["n"])
            try:
                out[str(name)] = plan_from_blocks(
                    block["stages"],
                    n_forced=int(n or 0),
                    max_rank=int(block.get("h", h)),
                    n_candidates=int(block.get("k", k)),
                    m_star=int(block.get("m_star", max(int(s["m"]) for s in block["stages"]))),
                )
            except SparseTrackingError as exc:
                raise ConfigurationError(f"plans.{name}: {exc}") from None
        if not out:
            raise ConfigurationError("presets/plans: configure at least one portfolio")
        return out

    def digest(self):
        text = json.dumps(self.raw, sort_keys=True, default=str)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()
