"""Belief grids and sampled functions on them."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_NODES = 1001
DEFAULT_CLIP = 1e-6


def make_grid(n: int, pi: float, clip: float = 0.0) -> np.ndarray:
    """Uniform belief grid on ``[clip, 1 - clip]`` with ``pi`` as a node.

    If a uniform node already lies within 1e-12 of ``pi`` it is snapped onto
    ``pi``; otherwise ``pi`` is inserted.
    """
    if n < 3:
        raise ValueError(f"grid size must be >= 3, got {n}")
    if not 0.0 <= clip < 0.5:
        raise ValueError(f"clip must lie in [0, 0.5), got {clip}")
    grid = np.linspace(clip, 1.0 - clip, n)
    k = int(np.argmin(np.abs(grid - pi)))
    if abs(grid[k] - pi) <= 1e-12:
        grid[k] = pi
    else:
        grid = np.insert(grid, np.searchsorted(grid, pi), pi)
    return grid


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real function sampled on a strictly increasing belief grid.

    Evaluation between nodes is piecewise linear; at nodes it returns the
    stored sample exactly. Outside the grid the end values are held.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if grid.size < 2:
            raise ValueError("a grid function needs at least 2 nodes")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __call__(self, p):
        out = np.interp(p, self.grid, self.values)
        return float(out) if np.ndim(out) == 0 else out

    def __len__(self):
        return self.grid.size

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def _combine(self, other, op):
        if isinstance(other, GridFunction):
            if other.grid.shape != self.grid.shape or np.any(other.grid != self.grid):
                raise ValueError("grid functions live on different grids")
            other = other.values
        return GridFunction(self.grid, op(self.values, other))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def to_csv(self, path, header: str = "value", comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["belief", header])
            for x, y in zip(self.grid, self.values):
                writer.writerow([repr(float(x)), repr(float(y))])

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        rows = []
        with open(Path(path), newline="") as fh:
            for row in csv.reader(line for line in fh if not line.startswith("#")):
                if not row or row[0] == "belief":
                    continue
                rows.append((float(row[0]), float(row[1])))
        if not rows:
            raise ValueError(f"{path}: no data rows")
        data = np.array(sorted(rows))
        return cls(data[:, 0], data[:, 1])
