"""Optimal policy read off the net value function."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .envelope import EnvelopeResult, _runs, chord_support, concave_envelope
from .grid import GridFunction
from .model import Problem, wait_time


def residual_value(w: GridFunction) -> GridFunction:
    """``Cav w - w``, exactly zero at contact nodes."""
    env = concave_envelope(w)
    return GridFunction(w.grid, env.gap)


@dataclass(frozen=True, eq=False)
class PolicyMap:
    """Experiment intervals E* and information region I* on a grid.

    ``info_region`` lists closed belief intervals, one per run of adjacent I*
    nodes. ``lam`` and ``pi`` are carried along so the map is self-contained
    for simulation.
    """

    envelope: EnvelopeResult
    info_mask: np.ndarray
    kappa: float
    eps_I: float
    lam: float
    pi: float

    @property
    def grid(self) -> np.ndarray:
        return self.envelope.g.grid

    @property
    def gamma(self) -> np.ndarray:
        return self.envelope.gap

    @property
    def experiment_intervals(self) -> list[tuple[float, float]]:
        return self.envelope.intervals

    @property
    def info_region(self) -> list[tuple[float, float]]:
        x = self.grid
        return [(float(x[s]), float(x[e])) for s, e in _runs(self.info_mask)]

    @property
    def empty(self) -> bool:
        return not self.info_mask.any()

    def in_info_region(self, p, tol: float = 1e-12) -> bool:
        return any(a - tol <= p <= b + tol for a, b in self.info_region)

    def first_hit(self, p: float):
        """First I* belief met by the drift path started at ``p``, or None.

        ``pi`` itself is never reached in finite time, so it only counts when
        ``p == pi``.
        """
        pi = self.pi
        if self.in_info_region(p):
            return float(p)
        if p == pi:
            return None
        best = None
        for a, b in self.info_region:
            if p < pi:
                cand = a if a > p else None
                if cand is not None and cand < pi and (best is None or cand < best):
                    best = cand
            else:
                cand = b if b < p else None
                if cand is not None and cand > pi and (best is None or cand > best):
                    best = cand
        return best

    def summary(self) -> str:
        lines = [f"kappa = {self.kappa:g}", f"I* tolerance = {self.eps_I:.3g}"]
        if not self.experiment_intervals:
            lines.append("no experiment intervals")
        for a, b in self.experiment_intervals:
            lines.append(f"E* interval ({a:.6f}, {b:.6f})")
        if self.empty:
            lines.append("information region empty: information is never acquired")
        for a, b in self.info_region:
            lines.append(f"I* [{a:.6f}, {b:.6f}]")
        return "\n".join(lines)

    def to_csv(self, path, comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["region", "left", "right"])
            for a, b in self.experiment_intervals:
                wr.writerow(["experiment", repr(a), repr(b)])
            for a, b in self.info_region:
                wr.writerow(["information", repr(a), repr(b)])


def extract_policy(w: GridFunction, problem: Problem, gap: float = 0.0) -> PolicyMap:
    """E* from the envelope of ``w``; I* where the residual value equals kappa.

    ``gap`` is the bracket gap of the solve that produced ``w``; it sets the
    knife-edge tolerance ``max(10 gap, 1e-7 kappa)``.
    """
    env = concave_envelope(w)
    eps_I = max(10.0 * gap, 1e-7 * problem.kappa)
    mask = (np.abs(env.gap - problem.kappa) <= eps_I) & env.in_interval()
    return PolicyMap(envelope=env, info_mask=mask, kappa=problem.kappa, eps_I=eps_I,
                     lam=problem.lam, pi=problem.pi)


def optimal_wait_time(p: float, pm: PolicyMap, problem: Problem | None = None) -> float:
    """Time until the drift path from ``p`` enters I*; ``inf`` if it never does."""
    hit = pm.first_hit(p)
    if hit is None:
        return np.inf
    return wait_time(p, hit, problem if problem is not None else pm)


def optimal_experiment(p: float, pm: PolicyMap):
    """Binary experiment ``(posteriors, weights)`` used at ``p`` in I*."""
    if not pm.in_info_region(p):
        raise ValueError(f"belief {p} is not in the information region")
    q0, q1, w1 = chord_support(p, pm.envelope)
    if q0 == q1:
        return np.array([p]), np.array([1.0])
    return np.array([q0, q1]), np.array([1.0 - w1, w1])
