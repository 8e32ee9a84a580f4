"""The zero fixed cost limit: concave envelope of the flow payoff and wait-or-confirm policies."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .dynamics import BeliefCycle, Trace, detect_cycle
from .envelope import _runs, concave_envelope
from .grid import GridFunction
from .model import Problem, discounted_path_integral, virtual_flow, wait_time
from .policy import extract_policy
from .solver import solve
from .stationary import flow_payoff

AFFINE_RTOL = 1e-7


def longrun_interval(problem: Problem):
    """Contact interval of ``Cav[f]`` around pi, or None when ``Cav[f](pi) = f(pi)``."""
    env = concave_envelope(virtual_flow(problem))
    hit = env.interval_of(problem.pi)
    if hit is None:
        return None
    return float(problem.grid[hit[0]]), float(problem.grid[hit[1]])


def w0_closed_form(p, problem: Problem):
    """Net value at ``p`` inside the long-run interval: discounted ``Cav[f]`` along the drift."""
    lr = longrun_interval(problem)
    pi = problem.pi
    ps = np.atleast_1d(np.asarray(p, dtype=float))
    lo, hi = lr if lr is not None else (pi, pi)
    if np.any((ps < lo) | (ps > hi)):
        raise ValueError(f"closed form only holds on the long-run interval [{lo}, {hi}]")
    cav = concave_envelope(virtual_flow(problem)).cav
    out = discounted_path_integral(cav, ps, problem)
    return float(out[0]) if np.ndim(p) == 0 else out


def jump_rate(p: float, target: float, lam: float, pi: float) -> float:
    """Poisson rate of a confirmation jump from ``p`` to ``target``."""
    return lam * (pi - p) / (target - p)


@dataclass(frozen=True)
class WaitOrConfirmPolicy:
    """Instant-information region, confirmation beliefs and the long-run interval.

    ``confirmation`` rows are ``(belief, target, rate)``.
    """

    instant_region: tuple
    confirmation: tuple
    longrun_interval: tuple | None
    lam: float
    pi: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    def confirmation_at(self, p, tol: float = 1e-12):
        for b, q, rate in self.confirmation:
            if abs(b - p) <= tol:
                return q, rate
        return None

    def instant_interval(self, p):
        for a, b in self.instant_region:
            if a < p < b:
                return a, b
        return None

    def next_confirmation(self, p):
        """First confirmation belief strictly ahead of ``p`` on its drift path."""
        pi = self.pi
        ahead = [b for b, _, _ in self.confirmation
                 if (p < b < pi) or (pi < b < p)]
        if not ahead:
            return None
        return min(ahead) if p < pi else max(ahead)

    def rates(self):
        if self.longrun_interval is None:
            return None
        q0, q1 = self.longrun_interval
        return jump_rate(q0, q1, self.lam, self.pi), jump_rate(q1, q0, self.lam, self.pi)

    def to_csv(self, path, comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["kind", "belief", "target", "rate"])
            for a, b in self.instant_region:
                wr.writerow(["instant", repr(a), repr(b), ""])
            for b, q, rate in self.confirmation:
                wr.writerow(["confirm", repr(b), repr(q), repr(rate)])


def affine_runs(w: GridFunction, rtol: float = AFFINE_RTOL):
    """Open belief intervals on which ``w`` is affine up to ``rtol`` times its range."""
    d2 = np.abs(np.diff(w.values, 2))
    flat = d2 <= rtol * float(np.ptp(w.values))
    x = w.grid
    # interior node k + 1 is affine when its second difference is small
    return [(float(x[s]), float(x[e + 2])) for s, e in _runs(flat)]


def build_woc(problem: Problem, kappa_small: float = 1e-3, tol: float | None = None,
              max_iter: int = 100000) -> WaitOrConfirmPolicy:
    """Wait-or-confirm policy for the zero fixed cost problem.

    The long-run part comes from ``Cav[f]``. Short-run instant regions are the
    runs where the net value solved at ``kappa_small`` is affine and strictly
    below its envelope.
    """
    lam, pi = problem.lam, problem.pi
    lr = longrun_interval(problem)
    small = problem.with_params(kappa=kappa_small)
    bracket, _, w = solve(small, tol=tol, max_iter=max_iter)
    env = concave_envelope(w)
    inside = env.in_interval()
    regions = []
    for a, b in affine_runs(w):
        mid = (problem.grid > a) & (problem.grid < b)
        if mid.any() and inside[mid].all():
            regions.append((a, b))
    diagnostics = {"kappa_small": kappa_small, "bracket_gap": bracket.gap}
    around = [ab for ab in regions if ab[0] < pi < ab[1]]
    if around:
        diagnostics["affine_interval_around_pi"] = around[0]
    if lr is not None:
        diagnostics["longrun_interval"] = lr
        regions = [ab for ab in regions if ab[1] <= lr[0] or ab[0] >= lr[1]]
        regions.append(lr)
    else:
        regions = [ab for ab in regions if not (ab[0] < pi < ab[1])]
    regions.sort()
    confirm = []
    for a, b in regions:
        if a < pi:
            confirm.append((a, b, jump_rate(a, b, lam, pi)))
        if b > pi:
            confirm.append((b, a, jump_rate(b, a, lam, pi)))
    return WaitOrConfirmPolicy(tuple(regions), tuple(sorted(confirm)), lr, lam, pi, diagnostics)


def longrun_policy(problem: Problem) -> WaitOrConfirmPolicy:
    """Wait-or-confirm policy restricted to its long-run component."""
    lr = longrun_interval(problem)
    lam, pi = problem.lam, problem.pi
    if lr is None:
        return WaitOrConfirmPolicy((), (), None, lam, pi)
    q0, q1 = lr
    conf = ((q0, q1, jump_rate(q0, q1, lam, pi)), (q1, q0, jump_rate(q1, q0, lam, pi)))
    return WaitOrConfirmPolicy((lr,), conf, lr, lam, pi)


# ---------------------------------------------------------------------------
# simulation


def simulate_woc(policy: WaitOrConfirmPolicy, p0: float, horizon: float, seed=0,
                 path_index: int = 0) -> Trace:
    """Exact path under a wait-or-confirm policy."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(path_index,)))
    lam, pi = policy.lam, policy.pi
    times, kinds, before, after, weights, held = [0.0], ["start"], [p0], [p0], [(np.nan, np.nan)], [False]
    t, b = 0.0, float(p0)
    box = policy.instant_interval(b)
    if box is not None:
        a, c = box
        w1 = (b - a) / (c - a)
        nb = c if rng.random() < w1 else a
        times.append(0.0)
        kinds.append("jump")
        before.append(b)
        after.append(nb)
        weights.append((1.0 - w1, w1))
        held.append(False)
        b = nb
    while True:
        conf = policy.confirmation_at(b)
        if conf is not None:
            held[-1] = True
            q, rate = conf
            t += rng.exponential(1.0 / rate)
            if t > horizon:
                break
            times.append(t)
            kinds.append("jump")
            before.append(b)
            after.append(q)
            weights.append((0.0, 1.0))
            held.append(False)
            b = q
            continue
        nxt = policy.next_confirmation(b)
        if nxt is None:
            times.append(t)
            kinds.append("absorb")
            before.append(b)
            after.append(b)
            weights.append((np.nan, np.nan))
            held.append(False)
            break
        tau = wait_time(b, nxt, policy)
        if t + tau > horizon:
            break
        t += tau
        # arrival at a confirmation belief starts a holding spell
        times.append(t)
        kinds.append("confirm")
        before.append(nxt)
        after.append(nxt)
        weights.append((np.nan, np.nan))
        held.append(False)
        b = nxt
    return Trace(np.array(times), tuple(kinds), np.array(before), np.array(after), np.array(weights),
                 float(horizon), seed, lam, pi, None, np.array(held))


class _WocChain:
    """States of a wait-or-confirm path: hold, drift to the next state, or drift forever."""

    def __init__(self, policy: WaitOrConfirmPolicy, starts):
        beliefs, index = [], {}

        def add(b):
            b = float(b)
            if b not in index:
                index[b] = len(beliefs)
                beliefs.append(b)
            return index[b]

        for b in starts:
            add(b)
        mode, dur, nxt = [], [], []
        k = 0
        while k < len(beliefs):
            b = beliefs[k]
            conf = policy.confirmation_at(b)
            if conf is not None:
                mode.append("hold")
                dur.append(conf[1])
                nxt.append(add(conf[0]))
            else:
                c = policy.next_confirmation(b)
                if c is None:
                    mode.append("free")
                    dur.append(np.inf)
                    nxt.append(k)
                else:
                    mode.append("drift")
                    dur.append(wait_time(b, c, policy))
                    nxt.append(add(c))
            k += 1
        self.beliefs = np.array(beliefs)
        self.hold = np.array([m == "hold" for m in mode])
        self.param = np.array(dur)  # rate when holding, duration when drifting
        self.next = np.array(nxt)


def _woc_start(policy, p0, n, rng):
    box = policy.instant_interval(p0)
    if box is None:
        return [p0], np.zeros(n, dtype=np.intp)
    a, c = box
    w1 = (p0 - a) / (c - a)
    return [a, c], (rng.random(n) < w1).astype(np.intp)


def simulate_woc_ensemble(policy: WaitOrConfirmPolicy, p0: float, times, n_paths: int,
                          seed=0, block: int = 4096) -> np.ndarray:
    """Beliefs of independent wait-or-confirm paths at the given ``times``."""
    times = np.sort(np.asarray(times, dtype=float))
    lam, pi = policy.lam, policy.pi
    out = np.empty((n_paths, times.size))
    for i, s0 in enumerate(range(0, n_paths, block)):
        m = min(block, n_paths - s0)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        starts, state = _woc_start(policy, p0, m, rng)
        chain = _WocChain(policy, starts)
        T = np.zeros(m)
        res = np.empty((m, times.size))
        pending = np.ones((m, times.size), dtype=bool)
        active = np.ones(m, dtype=bool)
        while active.any():
            idx = np.flatnonzero(active)
            s, t0 = state[idx], T[idx]
            hold = chain.hold[s]
            step = np.where(hold, rng.exponential(1.0, idx.size) / np.where(hold, chain.param[s], 1.0),
                            chain.param[s])
            t1 = t0 + step
            inside = pending[idx] & (times[None, :] < t1[:, None])
            if inside.any():
                rows, cols = np.nonzero(inside)
                b = chain.beliefs[s[rows]]
                rate = np.where(hold[rows], 0.0, lam)
                res[idx[rows], cols] = pi + (b - pi) * np.exp(-rate * (times[cols] - t0[rows]))
                pending[idx[rows], cols] = False
            done = ~np.isfinite(t1) | (t1 > times[-1])
            go = idx[~done]
            state[go] = chain.next[s[~done]]
            T[go] = t1[~done]
            active[idx[done]] = False
        out[s0:s0 + m] = res
    return out


def simulate_woc_payoff(policy: WaitOrConfirmPolicy, problem: Problem, p0: float,
                        n_paths: int = 100_000, seed=0, horizon: float | None = None):
    """Discounted virtual-flow payoff of a wait-or-confirm policy from ``p0``.

    Returns ``(mean, standard error)``.
    """
    r = problem.r
    if horizon is None:
        horizon = np.log(1e14) / r
    f = flow_payoff(problem)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    starts, state = _woc_start(policy, p0, n_paths, rng)
    chain = _WocChain(policy, starts)
    pi, lam = problem.pi, problem.lam
    seg = np.zeros(chain.beliefs.size)
    for k, b in enumerate(chain.beliefs):
        if chain.hold[k]:
            seg[k] = float(f(b))
        elif np.isfinite(chain.param[k]):
            seg[k] = integrate.quad(lambda t: np.exp(-r * t) * float(f(pi + (b - pi) * np.exp(-lam * t))),
                                    0.0, chain.param[k], epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        else:
            seg[k] = discounted_path_integral(f, b, problem)
    T = np.zeros(n_paths)
    total = np.zeros(n_paths)
    active = np.ones(n_paths, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        s = state[idx]
        hold = chain.hold[s]
        disc = np.exp(-r * T[idx])
        step = np.where(hold, rng.exponential(1.0, idx.size) / np.where(hold, chain.param[s], 1.0),
                        chain.param[s])
        # holding: constant flow; drifting: precomputed segment integral
        gain = np.where(hold, seg[s] * -np.expm1(-r * step) / r, seg[s])
        total[idx] += disc * gain
        T[idx] += step
        state[idx] = chain.next[s]
        active[idx] = np.isfinite(T[idx]) & (T[idx] < horizon)
    return float(total.mean()), float(total.std(ddof=1) / np.sqrt(n_paths))


# ---------------------------------------------------------------------------
# convergence as the fixed cost vanishes


@dataclass(frozen=True)
class ConvergenceRow:
    kappa: float
    outcome: str
    cycle: BeliefCycle | None
    q_gap: tuple
    p_gap: tuple
    tau: tuple
    bracket_gap: float


def _solve_row(args):
    problem, kappa, target, tol, max_iter = args
    prob = problem.with_params(kappa=kappa)
    bracket, _, w = solve(prob, tol=tol, max_iter=max_iter)
    rep = detect_cycle(extract_policy(w, prob, bracket.gap))
    c = rep.cycle
    if c is None or target is None:
        nan2 = (np.nan, np.nan)
        return ConvergenceRow(kappa, rep.outcome, c, nan2, nan2,
                              (c.tau0, c.tau1) if c else nan2, bracket.gap)
    return ConvergenceRow(kappa, rep.outcome, c,
                          (abs(c.q0 - target[0]), abs(c.q1 - target[1])),
                          (abs(c.p0 - target[0]), abs(c.p1 - target[1])),
                          (c.tau0, c.tau1), bracket.gap)


def convergence_study(problem: Problem, kappas, tol: float | None = None,
                      max_iter: int = 100000, workers: int = 1) -> list[ConvergenceRow]:
    """Solve along a decreasing sequence of fixed costs and compare with the limit."""
    kappas = [float(k) for k in kappas]
    if any(k <= 0 for k in kappas) or any(a <= b for a, b in zip(kappas, kappas[1:])):
        raise ValueError("kappas must be positive and strictly decreasing")
    target = longrun_interval(problem)
    jobs = [(problem, k, target, tol, max_iter) for k in kappas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_solve_row, jobs))
    return [_solve_row(j) for j in jobs]


def write_convergence(path, rows, comment: str | None = None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["kappa", "outcome", "q0", "p0", "p1", "q1", "q0_gap", "q1_gap",
                     "p0_gap", "p1_gap", "tau0", "tau1", "bracket_gap"])
        for row in rows:
            c = row.cycle
            beliefs = [c.q0, c.p0, c.p1, c.q1] if c is not None else [np.nan] * 4
            nums = [*beliefs, *row.q_gap, *row.p_gap, *row.tau, row.bracket_gap]
            wr.writerow([repr(row.kappa), row.outcome, *[repr(float(v)) for v in nums]])
