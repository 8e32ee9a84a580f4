"""Stationary payoffs of belief cycles and direct optimization over cycles."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.optimize import minimize_scalar

from .dynamics import BeliefCycle
from .model import Problem, virtual_flow, wait_time


@dataclass(frozen=True)
class CyclePayoffs:
    w0: float
    w1: float
    w_pi: float
    alpha: float
    w_pi_alpha: float = np.nan
    residual: float = 0.0


@dataclass(frozen=True)
class CycleOptimum:
    cycle: BeliefCycle | None
    payoffs: CyclePayoffs | None
    value: float  # best objective over cycles (w at pi before the fixed cost)
    w_at_pi: float  # max{f(pi)/r, value - kappa}
    learning: bool


# ---------------------------------------------------------------------------
# one-side quantities


def flow_payoff(problem: Problem):
    """Virtual flow payoff off the grid: interpolated ``u`` with analytic ``c``."""
    if problem.cost is None or problem.cost.kind == "custom-table":
        return virtual_flow(problem)
    cost, lam, pi, r = problem.cost, problem.lam, problem.pi, problem.r

    def f(p):
        return problem.u(p) - r * cost.value(p) + lam * (pi - np.asarray(p)) * cost.derivative(p)
    return f


def side_terms(q, p, problem: Problem):
    """Drift quantities of one side of a cycle, vectorized over ``(q, p)``.

    Returns ``F`` (discounted virtual flow from q until p), ``D = e^{-r tau}``,
    ``E = e^{-lam tau}`` and ``tau``. ``F`` uses the exact interpolant of
    ``u`` and the identity that turns the cost terms of the virtual flow
    into boundary terms.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    pi, lam, r = problem.pi, problem.lam, problem.r
    with np.errstate(divide="ignore", invalid="ignore"):
        E = np.where(q == p, 1.0, (pi - p) / (pi - q))
        tau = -np.log(E) / lam
    D = E ** (r / lam)
    Fu = problem.drift_grid.flow_between(problem.u.values, q, p)
    F = Fu + D * problem.cost_value(p) - problem.cost_value(q)
    return F, D, E, tau


def _ratios(D, E, tau, F, kappa, r, lam):
    """``(1-D)/(1-DE)`` and ``(F - D kappa)/(1-D)`` with their tau -> 0 limits."""
    e1 = -np.expm1(-r * tau)
    e2 = -np.expm1(-(r + lam) * tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.where(tau > 0, e1 / e2, r / (r + lam))
        H = (F - D * kappa) / e1
    return R, H


def _combine(left, right, q0, q1, at, problem: Problem):
    """Cycle payoffs from side terms; broadcasts over its inputs."""
    F0, D0, E0, t0 = left
    F1, D1, E1, t1 = right
    pi, r, lam, kappa = problem.pi, problem.r, problem.lam, problem.kappa
    R0, H0 = _ratios(D0, E0, t0, F0, kappa, r, lam)
    R1, H1 = _ratios(D1, E1, t1, F1, kappa, r, lam)
    span = q1 - q0
    a0, a1 = (q1 - pi) / span, (pi - q0) / span
    alpha = a1 * R1 / (a1 * R1 + a0 * R0)
    w_pi = alpha * H1 + (1.0 - alpha) * H0
    with np.errstate(divide="ignore", invalid="ignore"):
        w0 = (F0 - D0 * kappa + D0 * (1.0 - E0) * w_pi) / (1.0 - D0 * E0)
        w1 = (F1 - D1 * kappa + D1 * (1.0 - E1) * w_pi) / (1.0 - D1 * E1)
    value = ((at - q0) * w1 + (q1 - at) * w0) / span
    return value, w_pi, w0, w1, alpha


# ---------------------------------------------------------------------------
# payoffs of a given cycle


def cycle_payoffs(cycle: BeliefCycle, problem: Problem) -> CyclePayoffs:
    """Net values at the targets and at pi for a belief cycle.

    The pair ``(w0, w1)`` solves the linear stationarity system; ``w_pi_alpha``
    recomputes the value at pi through the mixing-weight formula.
    """
    pi, r = problem.pi, problem.r
    q0, q1, p0, p1 = cycle.q0, cycle.q1, cycle.p0, cycle.p1
    if min(pi - q0, q1 - pi) <= 0.0:
        w = float(flow_payoff(problem)(pi)) / r
        return CyclePayoffs(w, w, w, 0.5, w, 0.0)
    left = side_terms(q0, p0, problem)
    right = side_terms(q1, p1, problem)
    _, w_pi_a, w0a, w1a, alpha = (float(x[0]) for x in _combine(left, right, q0, q1, pi, problem))
    (F0, D0, E0, t0), (F1, D1, E1, t1) = ((float(x[0]) for x in s) for s in (left, right))
    if t0 == 0.0 or t1 == 0.0:
        # stationarity system is singular; use the continuous extension
        return CyclePayoffs(w0a, w1a, w_pi_a, float(alpha), w_pi_a, 0.0)
    kappa = problem.kappa
    a0, a1 = (q1 - pi) / (q1 - q0), (pi - q0) / (q1 - q0)
    A = np.array([[1.0 - D0 * E0 - D0 * (1.0 - E0) * a0, -D0 * (1.0 - E0) * a1],
                  [-D1 * (1.0 - E1) * a0, 1.0 - D1 * E1 - D1 * (1.0 - E1) * a1]])
    b = np.array([F0 - D0 * kappa, F1 - D1 * kappa])
    w0, w1 = np.linalg.solve(A, b)
    res = float(np.max(np.abs(A @ np.array([w0, w1]) - b)))
    w_pi = a0 * w0 + a1 * w1
    return CyclePayoffs(float(w0), float(w1), float(w_pi), float(alpha), float(w_pi_a), res)


def symmetric_cycle_value(q: float, p: float, problem: Problem) -> float:
    """Gross value at target ``q`` of the symmetric cycle with threshold ``p``.

    Costs ``c(q) - c(p) + kappa`` are paid at the end of each period. Needs
    ``1/2 <= p <= q``; ``q == p`` gives ``-inf`` when ``kappa > 0``.
    """
    if not (0.5 <= p <= q <= 1.0):
        raise ValueError(f"symmetric cycle needs 1/2 <= p <= q <= 1, got p={p}, q={q}")
    r, kappa = problem.r, problem.kappa
    if q == p:
        if kappa > 0:
            return -np.inf
        return float(problem.u(q)) / r
    tau = wait_time(q, p, problem)
    D = np.exp(-r * tau)
    Fu = float(problem.drift_grid.flow_between(problem.u.values, q, p)[0])
    cost = problem.cost_value(q) - problem.cost_value(p) + kappa
    return float((Fu - D * cost) / -np.expm1(-r * tau))


# ---------------------------------------------------------------------------
# optimization over cycles


def _objective(x, problem, at):
    q0, p0, p1, q1 = x
    if not (q0 < p0 < problem.pi < p1 < q1 and q0 <= at <= q1):
        return -np.inf
    left = side_terms(q0, p0, problem)
    right = side_terms(q1, p1, problem)
    val = float(_combine(left, right, q0, q1, at, problem)[0][0])
    return val if np.isfinite(val) else -np.inf


def _coarse(problem: Problem, n: int, at: float):
    g, ip = problem.grid, problem.ip
    lefts = np.unique(np.linspace(0, ip - 1, n).round().astype(int))
    rights = np.unique(np.linspace(ip + 1, g.size - 1, n).round().astype(int))
    qL, pL = np.meshgrid(g[lefts], g[lefts], indexing="ij")
    keep = qL < pL
    qL, pL = qL[keep], pL[keep]
    qR, pR = np.meshgrid(g[rights], g[rights], indexing="ij")
    keep = qR > pR
    qR, pR = qR[keep], pR[keep]
    if qL.size == 0 or qR.size == 0:
        return None
    left = [x[:, None] for x in side_terms(qL, pL, problem)]
    right = [x[None, :] for x in side_terms(qR, pR, problem)]
    val = _combine(left, right, qL[:, None], qR[None, :], at, problem)[0]
    ok = (qL[:, None] <= at) & (qR[None, :] >= at)
    val = np.where(ok & np.isfinite(val), val, -np.inf)
    k = np.unravel_index(int(np.argmax(val)), val.shape)
    if not np.isfinite(val[k]):
        return None
    return np.array([qL[k[0]], pL[k[0]], pR[k[1]], qR[k[1]]]), float(val[k])


def _refine(x, best, problem: Problem, at: float, sweeps: int = 30, xtol: float = 1e-10):
    g, pi = problem.grid, problem.pi
    lo, hi = g[0], g[-1]
    eps = 1e-9
    x = x.copy()
    for _ in range(sweeps):
        start = best
        for i in range(4):
            q0, p0, p1, q1 = x
            bounds = [(lo, min(p0, at) - eps), (q0 + eps, pi - eps),
                      (pi + eps, q1 - eps), (max(p1, at) + eps, hi)][i]
            if bounds[0] >= bounds[1]:
                continue

            def neg(z, i=i):
                y = x.copy()
                y[i] = z
                v = _objective(y, problem, at)
                return -v if np.isfinite(v) else 1e300
            res = minimize_scalar(neg, bounds=bounds, method="bounded", options={"xatol": xtol})
            if -res.fun > best:
                best = -res.fun
                x[i] = res.x
        if best - start <= 1e-14 * max(1.0, abs(best)):
            break
    return x, best


def _snap(x, best, problem: Problem, at: float, width: int = 3):
    """Best node quadruple within ``width`` nodes of each coordinate."""
    g = problem.grid
    idx = [int(np.argmin(np.abs(g - xi))) for xi in x]
    ranges = [np.arange(max(k - width, 0), min(k + width, g.size - 1) + 1) for k in idx]
    qL, pL = np.meshgrid(g[ranges[0]], g[ranges[1]], indexing="ij")
    pR, qR = np.meshgrid(g[ranges[2]], g[ranges[3]], indexing="ij")
    qL, pL, pR, qR = qL.ravel(), pL.ravel(), pR.ravel(), qR.ravel()
    kl = (qL < pL) & (pL < problem.pi) & (qL <= at)
    kr = (qR > pR) & (pR > problem.pi) & (qR >= at)
    qL, pL, pR, qR = qL[kl], pL[kl], pR[kr], qR[kr]
    if qL.size == 0 or qR.size == 0:
        return x, best
    left = [v[:, None] for v in side_terms(qL, pL, problem)]
    right = [v[None, :] for v in side_terms(qR, pR, problem)]
    val = _combine(left, right, qL[:, None], qR[None, :], at, problem)[0]
    val = np.where(np.isfinite(val), val, -np.inf)
    k = np.unravel_index(int(np.argmax(val)), val.shape)
    return np.array([qL[k[0]], pL[k[0]], pR[k[1]], qR[k[1]]]), float(val[k])


def best_cycle_value(problem: Problem, at: float | None = None, n_coarse: int = 25,
                     refine: bool = True, on_grid: bool = False):
    """Maximize the value at belief ``at`` of jumping into a cycle.

    The value is the Bayes-weighted mix of the target values; cycles must
    satisfy ``q0 <= at <= q1``. Returns ``(quadruple or None, value)``.
    """
    at = problem.pi if at is None else float(at)
    found = _coarse(problem, n_coarse, at)
    if found is None:
        return None, -np.inf
    x, best = found
    if refine:
        xr, vr = _refine(x, best, problem, at)
        if on_grid:
            xs, vs = _snap(xr, vr, problem, at)
            xc, vc = _snap(x, best, problem, at)
            x, best = (xs, vs) if vs >= vc else (xc, vc)
        elif vr >= best:
            x, best = xr, vr
    return x, best


def optimize_cycle(problem: Problem, n_coarse: int = 25, refine: bool = True,
                   on_grid: bool = False) -> CycleOptimum:
    """Best belief cycle for the value at pi, compared with never learning.

    ``on_grid=True`` restricts the final answer to grid-node quadruples, the
    same choice set as the grid solver.
    """
    fpi = float(flow_payoff(problem)(problem.pi)) / problem.r
    x, best = best_cycle_value(problem, None, n_coarse, refine, on_grid)
    if x is None:
        return CycleOptimum(None, None, -np.inf, fpi, False)
    cycle = BeliefCycle.from_beliefs(*x, problem)
    pay = cycle_payoffs(cycle, problem)
    w_at_pi = max(fpi, best - problem.kappa)
    return CycleOptimum(cycle, pay, best, w_at_pi, best - problem.kappa > fpi)


def trap_test(p: float, problem: Problem, n_coarse: int = 25, refine: bool = True,
              on_grid: bool = False) -> bool:
    """True when no cycle started by a jump at ``p`` beats never learning."""
    w_low = float(problem.drift_grid.value_at(problem.u.values, p)[0]) - problem.cost_value(p)
    x, best = best_cycle_value(problem, p, n_coarse, refine, on_grid)
    return bool(best - problem.kappa < w_low)


# ---------------------------------------------------------------------------
# comparisons and sweeps


def _inclusion(a, b, strict_open: bool):
    if a == b:
        return "equal"
    if a[0] <= b[0] and b[1] <= a[1]:
        return "a"
    if b[0] <= a[0] and a[1] <= b[1]:
        return "b"
    return "incomparable"


def compare_cycles(a: BeliefCycle, b: BeliefCycle) -> dict:
    """Informativeness, threshold and frequency rankings of two cycles."""
    info = _inclusion((a.q0, a.q1), (b.q0, b.q1), True)
    thr = _inclusion((a.p0, a.p1), (b.p0, b.p1), False)
    ta, tb = (a.tau0, a.tau1), (b.tau0, b.tau1)
    if ta == tb:
        freq = "equal"
    elif all(x <= y for x, y in zip(ta, tb)):
        freq = "a"
    elif all(y <= x for x, y in zip(ta, tb)):
        freq = "b"
    else:
        freq = "incomparable"
    return {"more_informative": info, "lower_thresholds": thr, "more_frequent": freq}


@dataclass(frozen=True)
class SweepRow:
    lam: float
    cycle: BeliefCycle | None
    tau0: float
    tau1: float
    w_pi: float


def sweep_lambda(problem: Problem, lambdas, n_coarse: int = 25, refine: bool = True) -> list[SweepRow]:
    """Re-optimize the cycle for each transition rate; ``tau = inf`` when not worth it."""
    rows = []
    for lam in lambdas:
        prob = problem.with_params(lam=float(lam))
        opt = optimize_cycle(prob, n_coarse=n_coarse, refine=refine)
        if opt.learning:
            c = opt.cycle
            rows.append(SweepRow(float(lam), c, c.tau0, c.tau1, opt.payoffs.w_pi))
        else:
            rows.append(SweepRow(float(lam), None, np.inf, np.inf, opt.w_at_pi))
    return rows


def write_sweep(path, rows, comment: str | None = None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["lambda", "q0", "p0", "p1", "q1", "tau0", "tau1", "w_pi"])
        for row in rows:
            c = row.cycle
            beliefs = [c.q0, c.p0, c.p1, c.q1] if c is not None else [np.nan] * 4
            wr.writerow([repr(float(v)) for v in [row.lam, *beliefs, row.tau0, row.tau1, row.w_pi]])


# ---------------------------------------------------------------------------
# Monte Carlo payoff of a cycle


def simulate_cycle_payoff(cycle: BeliefCycle, problem: Problem, n_paths: int = 100_000,
                          seed=0, horizon: float | None = None):
    """Discounted virtual-flow payoff of running ``cycle`` after a free jump at pi.

    Segment integrals come from adaptive quadrature of the flow payoff along
    the drift. Returns ``(mean, standard error)``.
    """
    r, kappa = problem.r, problem.kappa
    if horizon is None:
        horizon = np.log(1e14) / r
    f = flow_payoff(problem)
    seg = []
    for q, p in ((cycle.q0, cycle.p0), (cycle.q1, cycle.p1)):
        tau = wait_time(q, p, problem)
        val, _ = integrate.quad(lambda t: np.exp(-r * t) * float(f(problem.pi + (q - problem.pi) * np.exp(-problem.lam * t))),
                                0.0, tau, epsabs=1e-13, epsrel=1e-12, limit=200)
        seg.append((val, tau))
    (F0, t0), (F1, t1) = seg
    cross0, cross1 = cycle.jump_probs()
    w1_start = (problem.pi - cycle.q0) / (cycle.q1 - cycle.q0)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    side = rng.random(n_paths) < w1_start
    T = np.zeros(n_paths)
    total = np.zeros(n_paths)
    live = np.ones(n_paths, dtype=bool)
    while live.any():
        idx = np.flatnonzero(live)
        s = side[idx]
        F = np.where(s, F1, F0)
        tau = np.where(s, t1, t0)
        disc = np.exp(-r * T[idx])
        total[idx] += disc * (F - np.exp(-r * tau) * kappa)
        T[idx] += tau
        cross = np.where(s, cross1, cross0)
        flip = rng.random(idx.size) < cross
        side[idx] = np.where(flip, ~s, s)
        live[idx] = T[idx] < horizon
    return float(total.mean()), float(total.std(ddof=1) / np.sqrt(n_paths))
