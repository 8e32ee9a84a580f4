"""Concave envelopes of sampled functions and the intervals where they bind."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .grid import GridFunction

CONTACT_RTOL = 1e-9


def upper_hull(x, y) -> np.ndarray:
    """Indices of the vertices of the upper concave hull of ``(x, y)``.

    ``x`` must be strictly increasing. Collinear middle points are dropped, so
    the hull uses the fewest vertices.
    """
    xs = np.asarray(x, dtype=float).tolist()
    ys = np.asarray(y, dtype=float).tolist()
    stack: list[int] = []
    for k in range(len(xs)):
        xk, yk = xs[k], ys[k]
        while len(stack) >= 2:
            i, j = stack[-2], stack[-1]
            # pop j when it lies on or below the chord from i to k
            if (xs[j] - xs[i]) * (yk - ys[i]) - (ys[j] - ys[i]) * (xk - xs[i]) >= 0.0:
                stack.pop()
            else:
                break
        stack.append(k)
    return np.array(stack, dtype=np.intp)


def cav_values(x, y) -> np.ndarray:
    """Concave envelope of the points, sampled back on ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    h = upper_hull(x, y)
    return np.maximum(np.interp(x, x[h], y[h]), y)


@dataclass(frozen=True, eq=False)
class EnvelopeResult:
    """Concave envelope with the open intervals where it lies strictly above.

    ``index_intervals`` holds the grid indices ``(i, j)`` of the contact
    endpoints of each interval; ``intervals`` holds their beliefs.
    """

    g: GridFunction
    cav: GridFunction
    index_intervals: tuple
    tol: float

    @property
    def intervals(self) -> list[tuple[float, float]]:
        x = self.g.grid
        return [(float(x[i]), float(x[j])) for i, j in self.index_intervals]

    @property
    def gap(self) -> np.ndarray:
        return self.cav.values - self.g.values

    def in_interval(self) -> np.ndarray:
        flag = np.zeros(self.g.grid.size, dtype=bool)
        for i, j in self.index_intervals:
            flag[i + 1:j] = True
        return flag

    def interval_of(self, p):
        """Index pair of the open interval containing ``p``, or None."""
        x = self.g.grid
        for i, j in self.index_intervals:
            if x[i] < p < x[j]:
                return i, j
        return None

    def to_csv(self, path, comment: str | None = None):
        flag = self.in_interval()
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["belief", "g", "cav", "in_interval"])
            for x, g, c, f in zip(self.g.grid, self.g.values, self.cav.values, flag):
                wr.writerow([repr(float(x)), repr(float(g)), repr(float(c)), int(f)])


def concave_envelope(g: GridFunction, rtol: float = CONTACT_RTOL) -> EnvelopeResult:
    """Upper concave hull of ``g`` plus its non-contact intervals.

    A node is a contact node when the envelope exceeds ``g`` by at most
    ``rtol`` times the range of ``g``; the envelope is set equal to ``g``
    there. Intervals are maximal runs of non-contact nodes, reported with
    their bounding contact nodes.
    """
    x, y = g.grid, g.values
    cav = cav_values(x, y)
    tol = rtol * float(np.ptp(y))
    contact = cav - y <= tol
    cav = np.where(contact, y, cav)
    runs = _runs(~contact)
    index_intervals = tuple((s - 1, e + 1) for s, e in runs)
    return EnvelopeResult(g=g, cav=GridFunction(x, cav), index_intervals=index_intervals, tol=tol)


def _runs(mask) -> list[tuple[int, int]]:
    """Inclusive index ranges of the True runs in ``mask``."""
    m = np.concatenate(([False], np.asarray(mask, dtype=bool), [False])).astype(np.int8)
    d = np.diff(m)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def chord_support(p: float, env: EnvelopeResult) -> tuple[float, float, float]:
    """Binary posterior support ``(q0, q1, weight on q1)`` of the envelope at ``p``.

    Outside every interval the support degenerates to ``(p, p, 0.0)``.
    """
    hit = env.interval_of(p)
    if hit is None:
        return float(p), float(p), 0.0
    a, b = (float(env.g.grid[k]) for k in hit)
    return a, b, (p - a) / (b - a)
