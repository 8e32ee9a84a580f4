"""Bellman operator and the bracketed value iteration."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .envelope import cav_values
from .grid import GridFunction
from .model import Problem, value_bounds


@dataclass(frozen=True, eq=False)
class ValueBracket:
    lower: GridFunction
    upper: GridFunction
    n_iter: int
    gap: float
    converged: bool = True
    history: tuple = field(default=(), repr=False)

    @property
    def error_bound(self) -> float:
        return 0.5 * self.gap


def _values(v, problem):
    if isinstance(v, GridFunction):
        if v.grid.shape != problem.grid.shape:
            v = v(problem.grid)
        else:
            v = v.values
    return np.asarray(v, dtype=float)


def info_value_G(v, problem: Problem) -> GridFunction:
    """Value after the best costly experiment: ``Cav[v - c] + c``."""
    c = problem.c.values
    x = _values(v, problem)
    return GridFunction(problem.grid, cav_values(problem.grid, x - c) + c)


def _u_flows(problem: Problem):
    # segment flows of u depend only on the problem; cache on the instance
    cache = problem.__dict__.setdefault("_solver_cache", {})
    if "fu" not in cache:
        cache["fu"] = problem.drift_grid.segment_flows(problem.u.values).tolist()
        cache["disc"] = problem.drift_grid.disc.tolist()
    return cache["fu"], cache["disc"]


def _sweep(stop, problem: Problem) -> np.ndarray:
    """Backward sweep from pi: best of stopping now or drifting one node on."""
    F, D = _u_flows(problem)
    ip = problem.ip
    s = stop.tolist()
    out = [0.0] * len(s)
    acc = max(F[ip], s[ip])
    out[ip] = acc
    for k in range(ip - 1, -1, -1):
        acc = F[k] + D[k] * acc
        if s[k] >= acc:
            acc = s[k]
        out[k] = acc
    acc = out[ip]
    for k in range(ip + 1, len(s)):
        acc = F[k] + D[k] * acc
        if s[k] >= acc:
            acc = s[k]
        out[k] = acc
    return np.array(out)


def stopping_S(g, problem: Problem) -> GridFunction:
    """Best drift-then-stop value with stopping payoff ``g - kappa``.

    Stopping is allowed at grid nodes on the drift path, or never.
    """
    stop = _values(g, problem) - problem.kappa
    return GridFunction(problem.grid, _sweep(stop, problem))


def bellman_step(v, problem: Problem) -> GridFunction:
    return stopping_S(info_value_G(v, problem), problem)


def _phi(x, problem, c):
    return _sweep(cav_values(problem.grid, x - c) + c - problem.kappa, problem)


def solve(problem: Problem, tol: float | None = None, max_iter: int = 10000,
          bounds: tuple | None = None):
    """Iterate the Bellman operator from both ex-ante bounds.

    Returns ``(bracket, v, w)`` where ``v`` is the bracket midpoint and
    ``w = v - c``. Hitting ``max_iter`` sets ``bracket.converged = False``.
    """
    lo, hi = bounds if bounds is not None else value_bounds(problem)
    lower, upper = lo.values.copy(), hi.values.copy()
    if tol is None:
        tol = 1e-6 * float(upper.max() - lower.min())
        tol = tol if tol > 0 else 1e-12
    if tol <= 0:
        raise ValueError("tol must be positive")
    c = problem.c.values
    gap = float(np.max(upper - lower))
    history = [gap]
    n = 0
    while gap >= tol and n < max_iter:
        lower = _phi(lower, problem, c)
        upper = _phi(upper, problem, c)
        gap = float(np.max(upper - lower))
        history.append(gap)
        n += 1
    grid = problem.grid
    bracket = ValueBracket(GridFunction(grid, lower), GridFunction(grid, upper), n, gap,
                           converged=gap < tol, history=tuple(history))
    v = 0.5 * (lower + upper)
    return bracket, GridFunction(grid, v), GridFunction(grid, v - c)


def write_solution(path, problem: Problem, bracket: ValueBracket, v: GridFunction,
                   w: GridFunction, comment: str | None = None):
    """CSV with belief, v_lower, v_upper, v, w, cav_w, gamma_w."""
    cav_w = cav_values(problem.grid, w.values)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["belief", "v_lower", "v_upper", "v", "w", "cav_w", "gamma_w"])
        for row in zip(problem.grid, bracket.lower.values, bracket.upper.values, v.values,
                       w.values, cav_w, cav_w - w.values):
            wr.writerow([repr(float(a)) for a in row])
