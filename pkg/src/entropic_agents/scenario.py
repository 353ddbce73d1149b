"""Scenario configuration: JSON schema, validation, hashing and model construction."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from .errors import ConfigError, EntropicError
from .space import StrategySpace, sample_densities

DEFAULTS: dict = {
    "space": {"M": 16, "metric": "euclidean", "p": 2.0},
    "kernel": {"tag": "replicator", "scale": 0.05, "width": 1.0},
    "velocity": {"tag": "sum", "terms": [{"tag": "steering", "speed": 0.5},
                                         {"tag": "attraction", "gain": 0.2}]},
    "eps": 0.5,
    "lam": 1.0,
    "C_T": None,
    "N": 64,
    "d": 2,
    "T": 1.0,
    "dt": None,
    "method": "rk4",
    "n_samples": 101,
    "initial": {"positions": {"sampler": "ball", "radius": 1.0},
                "labels": {"sampler": "dirichlet", "concentration": 5.0}},
    "tolerances": {"tol_mass": 1e-10, "solver_tol": 1e-12},
    "fastlimit": {"lambdas": [10.0, 100.0, 1000.0, 10000.0], "t_burn": None,
                  "initial": "minimizer", "n_samples": 51},
    "meanfield": {"Ns": [16, 32, 64, 128, 256], "n_samples": 21},
    "check": {"n_probes": 90, "radii": [1.0, 10.0, 100.0], "n_atoms": 8},
    "output": {"dir": None},
}

_KERNEL_KEYS = {
    "zero": set(),
    "replicator": {"scale", "width", "matrix"},
    "undisclosed": {"payoff", "scale", "width", "values"},
    "penalized": {"payoff", "scale", "width", "values", "c"},
    "integral_tanh": {"payoff", "scale", "width", "values", "c"},
    "markov": {"rates", "imitation", "width"},
}
_VELOCITY_KEYS = {
    "zero": set(),
    "constant": {"c"},
    "attraction": {"gain"},
    "steering": {"speed"},
    "superlinear": {"c"},
    "sum": {"terms"},
}
_POSITION_KEYS = {"ball": {"radius", "center"}, "gaussian": {"std", "center"}, "explicit": {"values"}}
_LABEL_KEYS = {"dirichlet": {"concentration"}, "uniform": set(), "explicit": {"values"}}


def _merge(base: dict, over: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise ConfigError(f"unknown key {path}{key!r}")
        if isinstance(base[key], dict) and key not in ("kernel", "velocity") and isinstance(val, dict):
            if key == "initial":
                out[key] = {**base[key], **val}
                for sub in val:
                    if sub not in base[key]:
                        raise ConfigError(f"unknown key {path}{key}.{sub!r}")
            else:
                out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _tagged(d: dict, table: dict, what: str) -> tuple[str, dict]:
    if not isinstance(d, dict) or "tag" not in d and "sampler" not in d:
        raise ConfigError(f"{what} needs a 'tag'")
    tag = d.get("tag", d.get("sampler"))
    if tag not in table:
        raise ConfigError(f"unknown {what} {tag!r}; choose from {sorted(table)}")
    params = {k: v for k, v in d.items() if k not in ("tag", "sampler")}
    extra = set(params) - table[tag]
    if extra:
        raise ConfigError(f"unknown {what} parameter(s) {sorted(extra)} for {tag!r}")
    return tag, params


def _positive(name, value, allow_zero=False):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ConfigError(f"{name} must be a finite number")
    if value < 0 or (value == 0 and not allow_zero):
        raise ConfigError(f"{name} must be {'non-negative' if allow_zero else 'positive'}")


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Validated scenario; ``data`` holds the fully resolved JSON object."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        if "seed" not in raw:
            raise ConfigError("'seed' is mandatory")
        seed = raw["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        body = {k: v for k, v in raw.items() if k != "seed"}
        data = _merge(DEFAULTS, body, "")
        data["seed"] = seed
        cfg = cls(data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        raw = copy.deepcopy(self.data)
        raw["seed"] = seed
        return ScenarioConfig.from_dict(raw)

    def __getitem__(self, key):
        return self.data[key]

    def canonical(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        d = self.data
        sp = d["space"]
        if not isinstance(sp["M"], int) or sp["M"] < 2:
            raise ConfigError("space.M must be an integer >= 2")
        if sp["metric"] not in ("euclidean", "discrete"):
            raise ConfigError("space.metric must be 'euclidean' or 'discrete'")
        _positive("space.p", sp["p"])
        if sp["p"] < 1:
            raise ConfigError("space.p must be >= 1")
        if not isinstance(d["eps"], (int, float)) or d["eps"] <= 0:
            raise ConfigError("eps must be positive: the entropic box is undefined at eps = 0")
        for name in ("lam", "T"):
            _positive(name, d[name], allow_zero=(name == "T"))
        if d["C_T"] is not None:
            _positive("C_T", d["C_T"], allow_zero=True)
        for name in ("N", "d", "n_samples"):
            if not isinstance(d[name], int) or d[name] < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if d["dt"] is not None:
            _positive("dt", d["dt"])
        if d["method"] not in ("euler", "rk4"):
            raise ConfigError("method must be 'euler' or 'rk4'")
        _tagged(d["kernel"], _KERNEL_KEYS, "kernel")
        self._check_velocity(d["velocity"])
        _tagged(d["initial"]["positions"], _POSITION_KEYS, "position sampler")
        _tagged(d["initial"]["labels"], _LABEL_KEYS, "label sampler")
        for name, val in d["tolerances"].items():
            _positive(f"tolerances.{name}", val)
        fl = d["fastlimit"]
        if fl["initial"] not in ("minimizer", "sampled"):
            raise ConfigError("fastlimit.initial must be 'minimizer' or 'sampled'")
        for lam in fl["lambdas"]:
            _positive("fastlimit.lambdas", lam)
        for n in d["meanfield"]["Ns"]:
            if not isinstance(n, int) or n < 1:
                raise ConfigError("meanfield.Ns must hold positive integers")

    def _check_velocity(self, v):
        tag, params = _tagged(v, _VELOCITY_KEYS, "velocity")
        if tag == "sum":
            for t in params.get("terms", []):
                self._check_velocity(t)

    # -- construction -------------------------------------------------------

    def build_space(self) -> StrategySpace:
        sp = self.data["space"]
        if sp["metric"] == "discrete":
            return StrategySpace.discrete(sp["M"], sp["p"])
        return StrategySpace.uniform_grid(sp["M"], sp["p"])

    def build_operator(self, space: StrategySpace) -> dyn.Operator:
        tag, k = _tagged(self.data["kernel"], _KERNEL_KEYS, "kernel")
        if tag == "zero":
            return dyn.ZeroOperator()
        if tag == "replicator":
            if "matrix" in k:
                return dyn.ReplicatorOperator(dyn.ReplicatorKernel(k["matrix"], k.get("width", math.inf)))
            return dyn.ReplicatorOperator(dyn.ReplicatorKernel.cosine(space, k.get("scale", 1.0), k.get("width", 1.0)))
        if tag == "markov":
            rates = dyn.MarkovRates(k.get("rates", np.ones((space.M, space.M))), k.get("imitation", 0.0),
                                    k.get("width", 1.0))
            return dyn.MarkovOperator(rates, space)
        payoff_tag = k.get("payoff", "alignment")
        if payoff_tag == "alignment":
            payoff = dyn.AlignmentPayoff(k.get("scale", 1.0), k.get("width", 1.0))
        elif payoff_tag == "profile":
            payoff = dyn.ProfilePayoff(k["values"], k.get("width", math.inf))
        else:
            raise ConfigError(f"unknown payoff {payoff_tag!r}")
        if tag == "undisclosed":
            return dyn.UndisclosedOperator(dyn.LinearKernel(payoff))
        if tag == "penalized":
            return dyn.UndisclosedOperator(dyn.PenalizedKernel(payoff, k.get("c", 0.1)))
        return dyn.UndisclosedOperator(dyn.IntegralKernel.tanh(payoff, k.get("c", 0.1), k.get("width", 1.0)))

    def build_velocity(self, spec=None) -> dyn.VelocityField:
        tag, v = _tagged(self.data["velocity"] if spec is None else spec, _VELOCITY_KEYS, "velocity")
        if tag == "zero":
            return dyn.ZeroVelocity()
        if tag == "constant":
            return dyn.ConstantVelocity(v.get("c", [0.0] * self.data["d"]))
        if tag == "attraction":
            return dyn.AttractionVelocity(v.get("gain", 1.0))
        if tag == "steering":
            return dyn.SteeringVelocity(v.get("speed", 1.0))
        if tag == "superlinear":
            return dyn.SuperlinearVelocity(v.get("c", 1.0))
        return dyn.SumVelocity([self.build_velocity(t) for t in v.get("terms", [])])

    def build_system(self, lam: float | None = None) -> dyn.EntropicSystem:
        space = self.build_space()
        try:
            return dyn.EntropicSystem(space, self.build_velocity(), self.build_operator(space),
                                      float(self.data["eps"]), float(self.data["lam"] if lam is None else lam),
                                      self.data["C_T"])
        except EntropicError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.data["seed"])

    def sample_initial(self, system: dyn.EntropicSystem, n: int | None = None,
                       rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Positions then labels, drawn from one stream so prefixes are nested."""
        n = self.data["N"] if n is None else n
        rng = self.rng() if rng is None else rng
        d = self.data["d"]
        ptag, pp = _tagged(self.data["initial"]["positions"], _POSITION_KEYS, "position sampler")
        center = np.asarray(pp.get("center", [0.0] * d), dtype=float)
        if ptag == "explicit":
            X = np.asarray(pp["values"], dtype=float).reshape(-1, d)
            if X.shape[0] < n:
                raise ConfigError(f"explicit positions list {X.shape[0]} agents, {n} needed")
            X = X[:n]
        elif ptag == "ball":
            g = rng.standard_normal((n, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            X = center + pp.get("radius", 1.0) * g * rng.random((n, 1)) ** (1.0 / d)
        else:
            X = center + pp.get("std", 1.0) * rng.standard_normal((n, d))
        sp = system.space
        r, R = system.box.r_eps, system.box.R_eps
        ltag, lp = _tagged(self.data["initial"]["labels"], _LABEL_KEYS, "label sampler")
        if ltag == "explicit":
            L = np.asarray(lp["values"], dtype=float).reshape(-1, sp.M)[:n]
            if L.shape[0] < n:
                raise ConfigError("explicit labels list too few agents")
        elif ltag == "uniform":
            L = np.ones((n, sp.M))
        else:
            L = sample_densities(sp, n, r, R, rng, lp.get("concentration", 5.0))
        return X, L
