"""Problem primitives: belief drift, cost potentials, path integrals and bounds."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi

from .grid import DEFAULT_CLIP, DEFAULT_NODES, GridFunction, make_grid

COST_KINDS = ("entropy", "neg-variance", "log-likelihood-ratio", "custom-table")
QUAD_NODES = 64


# ---------------------------------------------------------------------------
# drift


def drift(p, t, problem):
    """Belief reached from ``p`` after drifting for ``t`` time units."""
    lam, pi = problem.lam, problem.pi
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("drift duration must be non-negative")
    p = np.asarray(p, dtype=float)
    out = np.where(t == 0, p, pi + (p - pi) * np.exp(-lam * t))
    return float(out) if out.ndim == 0 else out


def wait_time(q, p, problem) -> float:
    """Time the drift needs to carry belief ``q`` to ``p``.

    ``p`` has to lie on the segment from ``q`` toward the invariant belief.
    """
    pi, lam = problem.pi, problem.lam
    q, p = float(q), float(p)
    if q == p:
        return 0.0
    dq, dp = pi - q, pi - p
    if dq * dp < 0 or dq == 0:
        raise ValueError(f"beliefs {q} and {p} straddle pi={pi}; drift cannot connect them")
    if abs(dp) > abs(dq):
        raise ValueError(f"belief {p} is farther from pi={pi} than {q}")
    if dp == 0:
        return np.inf
    return float(np.log(dq / dp) / lam)


# ---------------------------------------------------------------------------
# cost potentials


@dataclass(frozen=True)
class CostSpec:
    """Convex certainty potential ``c`` scaled by ``scale``.

    ``custom-table`` takes ``table`` (a GridFunction); its derivative is
    taken by central differences on whatever grid it is sampled onto.
    """

    kind: str = "entropy"
    scale: float = 1.0
    table: GridFunction | None = None

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"cost.kind must be one of {COST_KINDS}, got {self.kind!r}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"cost.scale must be positive, got {self.scale}")
        if self.kind == "custom-table" and self.table is None:
            raise ValueError("custom-table cost needs a table")

    @property
    def diverges(self) -> bool:
        """True when c or c' blows up at the endpoints of [0, 1]."""
        return self.kind in ("entropy", "log-likelihood-ratio")

    def value(self, p):
        p = np.asarray(p, dtype=float)
        b = self.scale
        if self.kind == "entropy":
            with np.errstate(divide="ignore", invalid="ignore"):
                out = b * (_xlogx(p) + _xlogx(1.0 - p))
        elif self.kind == "neg-variance":
            out = -b * p * (1.0 - p)
        elif self.kind == "log-likelihood-ratio":
            with np.errstate(divide="ignore"):
                out = b * (2.0 * p - 1.0) * (np.log(p) - np.log1p(-p))
        else:
            out = b * np.interp(p, self.table.grid, self.table.values)
        return float(out) if out.ndim == 0 else out

    def derivative(self, p):
        p = np.asarray(p, dtype=float)
        b = self.scale
        with np.errstate(divide="ignore"):
            logit = np.log(p) - np.log1p(-p)
        if self.kind == "entropy":
            out = b * logit
        elif self.kind == "neg-variance":
            out = -b * (1.0 - 2.0 * p)
        elif self.kind == "log-likelihood-ratio":
            with np.errstate(divide="ignore", invalid="ignore"):
                out = b * (2.0 * logit + (2.0 * p - 1.0) / (p * (1.0 - p)))
        else:
            grid = np.atleast_1d(p)
            if grid.size < 3:
                raise ValueError("custom-table derivative needs at least 3 sample points")
            out = np.gradient(self.value(grid), grid)
            out = out.reshape(p.shape)
        return float(out) if out.ndim == 0 else out


def _xlogx(x):
    return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


# ---------------------------------------------------------------------------
# exact drift integrals for piecewise-linear integrands


class DriftGrid:
    """Per-node drift geometry on a grid that contains ``pi``.

    Along the drift ``x(t) = pi + (x - pi) e^{-lam t}`` a function that is
    affine in belief becomes ``A + B e^{-lam t}``, so discounted integrals over
    any segment have a closed form. Every node is linked to its neighbour on
    the side of ``pi``; the two nodes adjacent to ``pi`` never reach it and
    carry the infinite-horizon tail instead.
    """

    def __init__(self, grid, lam, pi, r):
        grid = np.asarray(grid, dtype=float)
        hits = np.flatnonzero(grid == pi)
        if hits.size != 1:
            raise ValueError("pi must be a grid node")
        self.grid, self.lam, self.pi, self.r = grid, lam, pi, r
        n = grid.size
        ip = int(hits[0])
        self.ip = ip
        nxt = np.arange(n)
        nxt[:ip] += 1
        nxt[ip + 1:] -= 1
        self.next = nxt
        self.tail = nxt == ip  # includes ip itself
        dist = np.abs(pi - grid)
        step = np.abs(grid[nxt] - grid)
        with np.errstate(divide="ignore", invalid="ignore"):
            logrho = np.where(self.tail, -np.inf, np.log1p(-step / np.where(dist > 0, dist, 1.0)))
        a = r / lam
        self.tau = np.where(self.tail, np.inf, -logrho / lam)
        self.disc = np.where(self.tail, 0.0, np.exp(a * logrho))
        self._e1 = np.where(self.tail, 1.0, -np.expm1(a * logrho))
        e2 = np.where(self.tail, 1.0, -np.expm1((a + 1.0) * logrho))
        # int_0^tau e^{-rt}(1 - e^{-lam t}) dt
        self._h = self._e1 / r - e2 / (r + lam)
        self._h[ip] = 0.0
        self._e1[ip] = 1.0
        self._dist = dist
        self._step = step

    def segment_flows(self, values):
        """Discounted integral of the interpolant from each node to its successor."""
        v = np.asarray(values, dtype=float)
        nxt = self.next
        dv = v[nxt] - v
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(self._step > 0, self._dist / np.where(self._step > 0, self._step, 1.0), 0.0)
        return v * self._e1 / self.r + dv * frac * self._h

    def never_stop(self, values):
        """Discounted integral of the interpolant along the full drift from each node."""
        F = self.segment_flows(values)
        D = self.disc
        out = np.empty_like(F)
        ip = self.ip
        out[ip] = F[ip]
        acc = out[ip]
        Fl, Dl = F.tolist(), D.tolist()
        res = out.tolist()
        for k in range(ip - 1, -1, -1):
            acc = Fl[k] + Dl[k] * acc
            res[k] = acc
        acc = res[ip]
        for k in range(ip + 1, F.size):
            acc = Fl[k] + Dl[k] * acc
            res[k] = acc
        return np.array(res)

    def value_at(self, values, x, nodal=None):
        """Never-stop integral from arbitrary beliefs ``x`` (vectorized)."""
        v = np.asarray(values, dtype=float)
        V = self.never_stop(v) if nodal is None else nodal
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        g, pi, r, lam = self.grid, self.pi, self.r, self.lam
        at_pi = x == pi
        out[at_pi] = v[self.ip] / r
        rest = ~at_pi
        if np.any(rest):
            xs = np.clip(x[rest], g[0], g[-1])
            left = xs < pi
            # node toward pi that closes the segment containing xs
            j = np.where(left, np.searchsorted(g, xs, side="right"), np.searchsorted(g, xs, side="left") - 1)
            j = np.clip(j, 0, g.size - 1)
            # the other end of that segment, away from pi
            i = np.where(left, j - 1, j + 1)
            i = np.clip(i, 0, g.size - 1)
            on_node = g[j] == xs
            slope = np.where(i != j, (v[j] - v[i]) / np.where(i != j, g[j] - g[i], 1.0), 0.0)
            vx = v[j] + slope * (xs - g[j])
            flow, disc = _partial_flow(xs, g[j], vx, slope, pi, r, lam, to_pi=(j == self.ip))
            val = flow + disc * V[j]
            out[rest] = np.where(on_node, V[j], val)
        return out

    def flow_between(self, values, x, y, nodal=None):
        """Discounted integral of the interpolant along the drift from ``x`` to ``y``."""
        V = self.never_stop(values) if nodal is None else nodal
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        dx, dy = self.pi - x, self.pi - y
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = np.where(dx != 0, np.abs(dy / np.where(dx != 0, dx, 1.0)) ** (self.r / self.lam), 1.0)
        return self.value_at(values, x, V) - disc * self.value_at(values, y, V)


def _partial_flow(x, y, vx, slope, pi, r, lam, to_pi):
    """Flow from ``x`` to ``y`` of the affine function ``vx + slope (z - x)``."""
    dist = pi - x
    with np.errstate(divide="ignore", invalid="ignore"):
        logrho = np.where(to_pi, -np.inf, np.log1p(-(y - x) / np.where(dist != 0, dist, 1.0)))
    a = r / lam
    e1 = -np.expm1(a * logrho)
    e2 = -np.expm1((a + 1.0) * logrho)
    h = e1 / r - e2 / (r + lam)
    flow = vx * e1 / r + slope * dist * h
    return flow, np.exp(a * logrho)


# ---------------------------------------------------------------------------
# problem bundle


def _actions_u(actions, p):
    actions = np.asarray(actions, dtype=float)
    return np.max(actions[:, 0][:, None] * (1.0 - p)[None, :] + actions[:, 1][:, None] * p[None, :], axis=0)


@dataclass(frozen=True, eq=False)
class Problem:
    """Primitive bundle sampled on a belief grid.

    Build with :meth:`Problem.build`; ``u_source`` and ``cost`` are kept so
    the problem can be rebuilt with other rates via :meth:`with_params`.
    """

    grid: np.ndarray
    u: GridFunction
    c: GridFunction
    dc: GridFunction
    lam: float
    pi: float
    r: float
    kappa: float = 0.0
    cost: CostSpec | None = None
    n_nodes: int = DEFAULT_NODES
    u_source: object = field(default=None, repr=False)
    actions: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def build(cls, u, cost: CostSpec | None, lam: float, pi: float, r: float,
              kappa: float = 0.0, n: int = DEFAULT_NODES, clip: float | None = None,
              convexity_tol: float = 1e-9) -> "Problem":
        """Sample primitives onto a grid.

        ``u`` is a vectorized callable, a GridFunction, or an ``(n_actions, 2)``
        array of per-state payoffs ``[payoff if state 0, payoff if state 1]``.
        ``cost=None`` means no variable information cost.
        """
        _check_rates(lam, pi, r, kappa)
        if clip is None:
            clip = DEFAULT_CLIP if (cost is not None and cost.diverges) else 0.0
        grid = make_grid(n, pi, clip)
        actions = None
        if isinstance(u, GridFunction):
            uv = u(grid)
        elif callable(u):
            uv = np.asarray(u(grid), dtype=float) * np.ones_like(grid)
        else:
            actions = np.atleast_2d(np.asarray(u, dtype=float))
            if actions.shape[1] != 2:
                raise ValueError("action payoffs must have shape (n_actions, 2)")
            uv = _actions_u(actions, grid)
        if not np.all(np.isfinite(uv)):
            raise ValueError("u must be finite on the grid")
        if cost is None:
            cv, dcv = np.zeros_like(grid), np.zeros_like(grid)
        else:
            cv = cost.value(grid)
            dcv = cost.derivative(grid)
            if not (np.all(np.isfinite(cv)) and np.all(np.isfinite(dcv))):
                raise ValueError("cost potential is not finite on the grid; clip the endpoints")
            slopes = np.diff(cv) / np.diff(grid)
            span = max(float(np.ptp(slopes)), 1e-300)
            if np.any(np.diff(slopes) < -convexity_tol * span):
                raise ValueError("cost potential is not convex on the grid")
        return cls(grid=grid, u=GridFunction(grid, uv), c=GridFunction(grid, cv),
                   dc=GridFunction(grid, dcv), lam=float(lam), pi=float(pi), r=float(r),
                   kappa=float(kappa), cost=cost, n_nodes=int(n), u_source=u, actions=actions)

    def with_params(self, **kw) -> "Problem":
        """Rebuild with some of ``lam, pi, r, kappa, n, cost, u`` replaced."""
        args = dict(u=self.u_source, cost=self.cost, lam=self.lam, pi=self.pi, r=self.r,
                    kappa=self.kappa, n=self.n_nodes, clip=float(self.grid[0]))
        args.update(kw)
        return Problem.build(**args)

    @property
    def ip(self) -> int:
        return self.drift_grid.ip

    @cached_property
    def drift_grid(self) -> DriftGrid:
        return DriftGrid(self.grid, self.lam, self.pi, self.r)

    def grid_function(self, values) -> GridFunction:
        return GridFunction(self.grid, values)

    def cost_value(self, p):
        """c evaluated analytically where possible, else by interpolation."""
        if self.cost is not None and self.cost.kind != "custom-table":
            return self.cost.value(p)
        return self.c(p)


def _check_rates(lam, pi, r, kappa):
    if not (np.isfinite(lam) and lam > 0):
        raise ValueError(f"lambda must be positive, got {lam}")
    if not (0.0 < pi < 1.0):
        raise ValueError(f"pi must lie in (0, 1), got {pi}")
    if not (np.isfinite(r) and r > 0):
        raise ValueError(f"r must be positive, got {r}")
    if not (np.isfinite(kappa) and kappa >= 0):
        raise ValueError(f"kappa must be non-negative, got {kappa}")


# ---------------------------------------------------------------------------
# path integrals, flow payoff, bounds


def discounted_path_integral(g, p, problem, nodes: int = QUAD_NODES):
    """Discounted integral of ``g`` along the drift path started at ``p``.

    Grid functions on the problem grid are integrated exactly segment by
    segment. Other callables use Gauss-Jacobi quadrature in ``s = e^{-lam t}``,
    which absorbs the weight ``s^{r/lam - 1}`` and needs no horizon cutoff.
    """
    if isinstance(g, GridFunction) and g.grid.shape == problem.grid.shape \
            and np.all(g.grid == problem.grid):
        out = problem.drift_grid.value_at(g.values, p)
    elif isinstance(g, GridFunction):
        grid, vals = _with_pi(g, problem.pi)
        out = DriftGrid(grid, problem.lam, problem.pi, problem.r).value_at(vals, p)
    else:
        out = _jacobi_integral(g, p, problem.lam, problem.pi, problem.r, nodes)
    out = np.asarray(out)
    return float(out.reshape(-1)[0]) if np.ndim(p) == 0 else out


def _with_pi(g: GridFunction, pi):
    if np.any(g.grid == pi):
        return g.grid, g.values
    k = np.searchsorted(g.grid, pi)
    return np.insert(g.grid, k, pi), np.insert(g.values, k, g(pi))


def _jacobi_integral(g: Callable, p, lam, pi, r, nodes):
    a = r / lam
    x, w = roots_jacobi(nodes, 0.0, a - 1.0)
    s = 0.5 * (1.0 + x)
    scale = 2.0 ** (-a) / lam
    p = np.atleast_1d(np.asarray(p, dtype=float))
    pts = pi + (p[:, None] - pi) * s[None, :]
    vals = np.asarray(g(pts.ravel()), dtype=float).reshape(pts.shape)
    return scale * vals @ w


def virtual_flow(problem) -> GridFunction:
    """Flow payoff of the net value: ``u - r c + lam (pi - p) c'``."""
    g = problem.grid
    f = problem.u.values - problem.r * problem.c.values + problem.lam * (problem.pi - g) * problem.dc.values
    return GridFunction(g, f)


def value_bounds(problem) -> tuple[GridFunction, GridFunction]:
    """No-information lower bound and full-concavification upper bound."""
    from .envelope import concave_envelope

    dg = problem.drift_grid
    lower = dg.never_stop(problem.u.values)
    cav_u = concave_envelope(problem.u).cav.values
    upper = dg.never_stop(cav_u)
    return GridFunction(problem.grid, lower), GridFunction(problem.grid, np.maximum(upper, lower))


def experiment_cost(F, p, problem, tol: float = 1e-9) -> float:
    """Posterior-separable cost of a finite experiment plus the fixed cost.

    ``F`` is a pair ``(posteriors, weights)``.
    """
    q, w = (np.asarray(a, dtype=float) for a in F)
    if q.shape != w.shape:
        raise ValueError("posteriors and weights must have the same shape")
    if np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
        raise ValueError(f"weights must be non-negative and sum to 1 (sum={w.sum()!r})")
    gap = float(w @ q - p)
    if abs(gap) > tol:
        raise ValueError(f"experiment is not Bayes-plausible at p={p}: mean posterior off by {gap:.3e}")
    return float(w @ problem.cost_value(q) - problem.cost_value(p) + problem.kappa)
