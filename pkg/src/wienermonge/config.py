"""Experiment configuration: YAML in, validated dict out, stable hash."""
import copy
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .errors import InvalidInputError

COMMANDS = ("solve", "rays", "glue", "verify-evolution", "jacobian-sweep", "ladder")

DEFAULT_TOLERANCES = {
    "gap": 1e-9,         # relative duality gap
    "cost": 1e-9,        # glued map vs plan cost (absolute and relative)
    "evolution": 0.02,   # C_hat >= 1/M - tol (quadrature)
    "richardson": 1e-6,  # grid refinement disagreement
    "mc": 0.05,          # C_hat >= 1/M - tol (Monte Carlo)
    "chain": 1e-9,       # pointwise Jacobian chain, relative
}

STANDARD_PAIRS = [
    {"name": "identity", "rho1": {"kind": "constant"}, "rho2": {"kind": "constant"}},
    {"name": "indicator", "rho1": {"kind": "interval", "a": -1.0, "b": 1.0},
     "rho2": {"kind": "interval", "a": 0.0, "b": 2.0}},
    {"name": "sine-tanh", "rho1": {"kind": "sine", "amp": 0.6, "freq": 2.0},
     "rho2": {"kind": "tanh", "amp": 0.5, "scale": 1.5}},
    {"name": "halflines", "rho1": {"kind": "interval", "a": 0.0},
     "rho2": {"kind": "interval", "b": 0.0}},
    {"name": "normals", "rho1": {"kind": "normal", "mean": [0.5], "sd": 0.8},
     "rho2": {"kind": "normal", "mean": [-0.4], "sd": 0.7}},
]

DEFAULTS = {
    "solve": {"instance": {"kind": "bundled", "name": "square2x2"}, "cost": "euclidean",
              "max_cycle": 3},
    "rays": {"instance": {"kind": "bundled", "name": "chain1d"}, "max_cycle_len": 3},
    "glue": {"instance": {"kind": "collinear", "n_lines": 3}, "max_cycle_len": 3},
    "verify-evolution": {"pairs": STANDARD_PAIRS, "n_sets": 50, "n_cells": 10_000,
                         "ts": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], "reverse": True,
                         "monte_carlo": None},
    "jacobian-sweep": {"n_tuples": 10_000, "max_dim": 16,
                       "ts": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
                       "chain_pairs": STANDARD_PAIRS},
    "ladder": {"mu": {"kind": "interval", "a": 0.0}, "nu": {"kind": "sine", "amp": 0.5, "freq": 1.0},
               "dims": [1, 2, 4, 8], "n": 20_000, "subsample": 128, "seeds": None},
}


@dataclass
class ExperimentConfig:
    command: str
    seed: int = 0
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    plots: bool = True

    def as_dict(self):
        return {"command": self.command, "seed": self.seed, "params": self.params,
                "tolerances": self.tolerances, "plots": self.plots}

    @property
    def hash(self):
        # plotting does not change any numeric artifact, so it stays out of the hash
        d = self.as_dict()
        d.pop("plots")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def validate(self):
        if self.command not in COMMANDS:
            raise InvalidInputError(f"unknown command {self.command!r}")
        for k, v in self.tolerances.items():
            if not isinstance(v, (int, float)) or not v > 0:
                raise InvalidInputError(f"tolerance {k!r} must be positive, got {v!r}")
        dims = self.params.get("dims")
        if dims is not None and (list(dims) != sorted(dims) or len(set(dims)) != len(dims)):
            raise InvalidInputError("ladder dims must be strictly ascending")
        if not isinstance(self.seed, int):
            raise InvalidInputError("seed must be an integer")
        return self


def build_config(command, raw=None, seed=None, overrides=()):
    """Merge command defaults, a raw config dict, ``--seed`` and ``--tol-override`` values."""
    raw = dict(raw or {})
    if raw.get("command", command) != command:
        raise InvalidInputError(f"config is for {raw['command']!r}, not {command!r}")
    params = copy.deepcopy(DEFAULTS.get(command, {}))
    params.update(raw.get("params", {}))
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(raw.get("tolerances", {}))
    for item in overrides:
        key, sep, val = item.partition("=")
        if not sep or key not in DEFAULT_TOLERANCES:
            raise InvalidInputError(f"bad --tol-override {item!r}; keys: {sorted(DEFAULT_TOLERANCES)}")
        try:
            tol[key] = float(val)
        except ValueError as exc:
            raise InvalidInputError(f"bad tolerance value in {item!r}") from exc
    s = raw.get("seed", 0) if seed is None else seed
    cfg = ExperimentConfig(command, int(s), params, tol, bool(raw.get("plots", True)))
    return cfg.validate()


def load_yaml(path):
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidInputError("config must be a mapping")
    return doc
