"""Experiment configuration: YAML loading, validation, hashing and scale rules."""

from __future__ import annotations

import ast
import copy
import hashlib
import json
import math
import operator
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigInvalid
from .geometry import shape_from_dict

__all__ = ["EXPERIMENTS", "ExperimentConfig", "GeometrySpec", "load_config", "evaluate_rule"]

EXPERIMENTS = (
    "capacity-suite",
    "identity-suite",
    "centering",
    "hard-wall",
    "conditional-tail",
    "repulsion-profile",
)

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.FloorDiv: operator.floordiv,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "floor": math.floor,
    "ceil": math.ceil,
    "min": min,
    "max": max,
    "round": round,
}
_CONSTS = {"pi": math.pi, "e": math.e}


def evaluate_rule(expr, **variables):
    """Evaluate an arithmetic scale rule such as ``"N*exp(-c*u)"``.

    Only numbers, the given variables, ``pi``/``e``, ``+ - * / // **`` and
    the functions ``exp log sqrt floor ceil min max round`` are accepted. A
    leading ``"r = "`` style assignment is ignored.
    """
    if isinstance(expr, (int, float)):
        return float(expr)
    text = str(expr)
    if "=" in text:
        text = text.split("=", 1)[1]
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse rule {expr!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name):
            if node.id in variables:
                return variables[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ValueError(f"unknown name {node.id!r} in rule {expr!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])
        raise ValueError(f"unsupported syntax in rule {expr!r}")

    return float(ev(tree))


@dataclass
class GeometrySpec:
    name: str
    V: dict
    W: dict

    def shapes(self):
        return shape_from_dict(self.V), shape_from_dict(self.W)

    def to_dict(self):
        return {"name": self.name, "V": copy.deepcopy(self.V), "W": copy.deepcopy(self.W)}


_DEFAULT_TOLERANCES = {"exact": 1e-8, "solver": 1e-10, "sigma": 3.0}


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    ``scales`` maps names (``r``, ``r_prime``, ``l``) to rules in ``N``,
    ``u`` and the entries of ``params``; ``replicas`` maps counter names to
    integers scaled by ``--replicas-scale``.
    """

    experiment: str
    seed: int = 0
    geometries: list = field(default_factory=list)
    N: list = field(default_factory=list)
    u: list = field(default_factory=list)
    scales: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    replicas: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=lambda: dict(_DEFAULT_TOLERANCES))
    output: str = "out"

    # -- serialization --------------------------------------------------
    def to_dict(self):
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "geometries": [g.to_dict() for g in self.geometries],
            "N": list(self.N),
            "u": list(self.u),
            "scales": dict(self.scales),
            "params": copy.deepcopy(self.params),
            "replicas": dict(self.replicas),
            "tolerances": dict(self.tolerances),
            "output": self.output,
        }

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigInvalid("top level must be a mapping", field="config")
        known = {"experiment", "seed", "geometries", "N", "u", "scales", "params", "replicas", "tolerances", "output"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigInvalid(f"unknown keys {sorted(unknown)}", field="config")
        if "experiment" not in raw:
            raise ConfigInvalid("missing", field="experiment")
        geoms = []
        for i, g in enumerate(raw.get("geometries") or []):
            if not isinstance(g, dict) or "V" not in g or "W" not in g:
                raise ConfigInvalid("each geometry needs V and W", field=f"geometries[{i}]")
            geoms.append(GeometrySpec(str(g.get("name", f"geometry{i}")), dict(g["V"]), dict(g["W"])))
        tol = dict(_DEFAULT_TOLERANCES)
        tol.update(raw.get("tolerances") or {})
        cfg = cls(
            experiment=raw["experiment"],
            seed=raw.get("seed", 0),
            geometries=geoms,
            N=list(raw.get("N") or []),
            u=list(raw.get("u") or []),
            scales=dict(raw.get("scales") or {}),
            params=dict(raw.get("params") or {}),
            replicas=dict(raw.get("replicas") or {}),
            tolerances=tol,
            output=str(raw.get("output", "out")),
        )
        cfg.validate()
        return cfg

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @property
    def config_hash(self):
        """sha256 of the canonical JSON form; the output directory is left out."""
        d = self.to_dict()
        d.pop("output")
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    # -- validation -----------------------------------------------------
    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigInvalid(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}", field="experiment")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigInvalid("must be an integer in [0, 2^64)", field="seed")
        for i, n in enumerate(self.N):
            if isinstance(n, bool) or not isinstance(n, int) or n < 1:
                raise ConfigInvalid(f"entry {n!r} is not a positive integer", field=f"N[{i}]")
        for i, u in enumerate(self.u):
            if isinstance(u, bool) or not isinstance(u, (int, float)) or not np.isfinite(u):
                raise ConfigInvalid(f"entry {u!r} is not a finite number", field=f"u[{i}]")
        for k, v in self.replicas.items():
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigInvalid(f"{v!r} is not a positive integer", field=f"replicas.{k}")
        for k, v in self.tolerances.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigInvalid(f"{v!r} is not a positive number", field=f"tolerances.{k}")
        probe = {"N": 64.0, "u": 1.0}
        probe.update({k: float(v) for k, v in self.params.items() if isinstance(v, (int, float)) and not isinstance(v, bool)})
        for k, rule in self.scales.items():
            try:
                evaluate_rule(rule, **probe)
            except (ValueError, ZeroDivisionError, OverflowError) as exc:
                raise ConfigInvalid(str(exc), field=f"scales.{k}") from exc
        for i, g in enumerate(self.geometries):
            where = f"geometries[{i}]"
            try:
                V, W = g.shapes()
            except (KeyError, ValueError, TypeError) as exc:
                raise ConfigInvalid(f"invalid shape: {exc}", field=where) from exc
            pts = V.boundary_points(512)
            inside = W.contains(pts)
            if not np.all(inside) or np.min(W.boundary_distance(pts)) <= 0:
                raise ConfigInvalid("containment check failed: V is not contained in W", field=where)
        needs_geom = self.experiment not in ("centering", "identity-suite")
        if needs_geom and not self.geometries:
            raise ConfigInvalid("at least one geometry is required", field="geometries")
        if self.experiment != "identity-suite" and not self.N:
            raise ConfigInvalid("at least one scale is required", field="N")

    # -- helpers --------------------------------------------------------
    def scale(self, name, N, u=0.0, default=None):
        rule = self.scales.get(name, default)
        if rule is None:
            raise KeyError(name)
        vars_ = {k: float(v) for k, v in self.params.items() if isinstance(v, (int, float)) and not isinstance(v, bool)}
        vars_.update(N=float(N), u=float(u))
        return evaluate_rule(rule, **vars_)

    def count(self, name, default, scale=1.0):
        return max(1, int(round(self.replicas.get(name, default) * scale)))


def load_config(path):
    """Read and validate a YAML experiment file."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigInvalid(str(exc), field="path") from exc
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"YAML error: {exc}", field="syntax") from exc
    return ExperimentConfig.from_dict(raw)
