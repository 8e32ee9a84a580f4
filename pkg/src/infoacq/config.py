"""Line-oriented ``key = value`` run configuration."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .grid import GridFunction
from .model import CostSpec, Problem


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _actions(text):
    rows = [r for r in text.split(";") if r.strip()]
    out = []
    for r in rows:
        vals = _floats(r)
        if len(vals) != 2:
            raise ValueError("each action needs two payoffs: state 0, state 1")
        out.append(vals)
    return np.array(out)


# key -> (parser, default)
SCHEMA = {
    "problem.u.kind": (str, "actions"),
    "problem.u.actions": (str, "1,-1; -1,1"),
    "problem.u.table": (str, ""),
    "problem.market.m_A": (_floats, (1.0, 4.0)),
    "problem.market.m_B": (_floats, (4.0, 1.0)),
    "problem.market.var_A": (_floats, (2.0, 2.0)),
    "problem.market.var_B": (_floats, (2.0, 2.0)),
    "problem.market.cov": (_floats, (0.0, 0.0)),
    "problem.market.psi": (float, 0.5),
    "problem.market.s": (float, 0.0),
    "problem.market.z": (float, 0.0),
    "problem.market.variance_mode": (str, "conditional"),
    "problem.cost.kind": (str, "entropy"),
    "problem.cost.scale": (float, 0.1),
    "problem.cost.table": (str, ""),
    "problem.lambda": (float, 0.5),
    "problem.pi": (float, 0.5),
    "problem.r": (float, 1.0),
    "problem.kappa": (float, 0.01),
    "numerics.grid_size": (int, 1001),
    "numerics.tol": (float, 0.0),
    "numerics.max_iter": (int, 10000),
    "numerics.quad_nodes": (int, 64),
    "numerics.cycle_grid": (int, 25),
    "run.seed": (int, 0),
    "run.p0": (float, 0.5),
    "run.horizon": (float, 100.0),
    "run.n_paths": (int, 0),
    "run.times": (_floats, (0.5, 1.0, 2.0, 4.0)),
    "run.lambdas": (_floats, (0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 80.0)),
    "run.kappas": (_floats, (0.02, 0.01, 0.005, 0.002)),
    "run.kappa_small": (float, 1e-3),
    "run.artifact": (str, "auto"),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def canonical(self, prefixes=("",)) -> str:
        lines = []
        for k in sorted(self.values):
            if not k.startswith(prefixes):
                continue
            v = self.values[k]
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def problem_digest(self) -> str:
        """Hash of the keys that determine the value function."""
        return hashlib.sha256(self.canonical(("problem.", "numerics.")).encode()).hexdigest()[:16]

    def provenance(self, command: str) -> str:
        return (f"infoacq {__version__} command={command} config={self.digest()} "
                f"problem={self.problem_digest()}")

    def problem(self) -> Problem:
        v = self.values
        try:
            cost = _cost(v)
            u = _utility(v)
            return Problem.build(u, cost, v["problem.lambda"], v["problem.pi"], v["problem.r"],
                                 v["problem.kappa"], n=v["numerics.grid_size"])
        except ConfigError:
            raise
        except (ValueError, OSError) as exc:
            raise ConfigError(f"problem: {exc}") from exc

    def market(self):
        from .portfolio import MarketSpec

        v = self.values
        try:
            return MarketSpec(m_A=v["problem.market.m_A"], m_B=v["problem.market.m_B"],
                              var_A=v["problem.market.var_A"], var_B=v["problem.market.var_B"],
                              cov=v["problem.market.cov"], psi=v["problem.market.psi"],
                              s=v["problem.market.s"], z=v["problem.market.z"],
                              variance_mode=v["problem.market.variance_mode"])
        except ValueError as exc:
            raise ConfigError(f"problem.{exc}" if str(exc).startswith("market.") else f"problem.market: {exc}") from exc


def _cost(v):
    kind = v["problem.cost.kind"]
    if kind == "none":
        return None
    table = None
    if kind == "custom-table":
        if not v["problem.cost.table"]:
            raise ConfigError("problem.cost.table: required for custom-table cost")
        table = GridFunction.from_csv(v["problem.cost.table"])
    try:
        return CostSpec(kind, v["problem.cost.scale"], table)
    except ValueError as exc:
        raise ConfigError(f"problem.cost: {exc}") from exc


def _utility(v):
    kind = v["problem.u.kind"]
    if kind == "actions":
        try:
            return _actions(v["problem.u.actions"])
        except ValueError as exc:
            raise ConfigError(f"problem.u.actions: {exc}") from exc
    if kind == "table":
        if not v["problem.u.table"]:
            raise ConfigError("problem.u.table: required when problem.u.kind = table")
        return GridFunction.from_csv(v["problem.u.table"])
    if kind == "portfolio":
        from .portfolio import utility_table

        spec = RunConfig(v).market()
        return lambda x: utility_table(spec, x)[0]
    raise ConfigError(f"problem.u.kind: expected actions, table or portfolio, got {kind!r}")


def _parse_value(key, text, where):
    if key not in SCHEMA:
        raise ConfigError(f"{where}: unknown key {key!r}")
    parser = SCHEMA[key][0]
    try:
        return parser(text.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {exc}") from exc


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the file at ``path``, then ``key=value`` overrides."""
    values = {k: d for k, (_, d) in SCHEMA.items()}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = _parse_value(key, val, f"{path}:{n}")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, val = (s.strip() for s in item.split("=", 1))
        values[key] = _parse_value(key, val, f"--set {key}")
    _validate(values)
    return RunConfig(values)


def _validate(v):
    checks = [
        ("problem.lambda", v["problem.lambda"] > 0, "must be positive"),
        ("problem.pi", 0 < v["problem.pi"] < 1, "must lie in (0, 1)"),
        ("problem.r", v["problem.r"] > 0, "must be positive"),
        ("problem.kappa", v["problem.kappa"] >= 0, "must be non-negative"),
        ("numerics.grid_size", v["numerics.grid_size"] >= 3, "must be at least 3"),
        ("numerics.tol", v["numerics.tol"] >= 0, "must be non-negative (0 selects the default)"),
        ("numerics.max_iter", v["numerics.max_iter"] >= 1, "must be at least 1"),
        ("numerics.quad_nodes", v["numerics.quad_nodes"] >= 2, "must be at least 2"),
        ("numerics.cycle_grid", v["numerics.cycle_grid"] >= 3, "must be at least 3"),
        ("run.p0", 0 <= v["run.p0"] <= 1, "must lie in [0, 1]"),
        ("run.horizon", v["run.horizon"] > 0, "must be positive"),
        ("run.n_paths", v["run.n_paths"] >= 0, "must be non-negative"),
        ("run.kappa_small", v["run.kappa_small"] > 0, "must be positive"),
        ("run.artifact", v["run.artifact"] in ("auto", "require", "never"), "must be auto, require or never"),
    ]
    for key, ok, msg in checks:
        if not ok:
            raise ConfigError(f"{key} = {v[key]!r}: {msg}")
