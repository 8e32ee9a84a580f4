"""Belief-process simulation and long-run classification."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .envelope import chord_support
from .model import wait_time
from .policy import PolicyMap

BLOCK = 4096


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class BeliefCycle:
    q0: float
    q1: float
    p0: float
    p1: float
    tau0: float
    tau1: float

    def __post_init__(self):
        q0, p0, p1, q1 = self.q0, self.p0, self.p1, self.q1
        if not (0.0 <= q0 <= p0 <= p1 <= q1 <= 1.0):
            raise ValueError(f"cycle beliefs out of order: q0={q0}, p0={p0}, p1={p1}, q1={q1}")
        if self.tau0 < 0 or self.tau1 < 0:
            raise ValueError("cycle waiting times must be non-negative")

    @classmethod
    def from_beliefs(cls, q0, p0, p1, q1, problem) -> "BeliefCycle":
        """Cycle with waiting times implied by the drift."""
        return cls(float(q0), float(q1), float(p0), float(p1),
                   wait_time(q0, p0, problem), wait_time(q1, p1, problem))

    @property
    def degenerate(self) -> bool:
        return not (self.q0 < self.p0 < self.p1 < self.q1)

    def consistent(self, problem, tol: float = 1e-9) -> bool:
        t0, t1 = wait_time(self.q0, self.p0, problem), wait_time(self.q1, self.p1, problem)
        return abs(t0 - self.tau0) <= tol and abs(t1 - self.tau1) <= tol

    def jump_probs(self) -> tuple[float, float]:
        """Probabilities of crossing to the other target from p0 and from p1."""
        span = self.q1 - self.q0
        return (self.p0 - self.q0) / span, (self.q1 - self.p1) / span


@dataclass(frozen=True)
class LongRunReport:
    outcome: str  # "cycle", "learning-stops" or "never-learns"
    cycle: BeliefCycle | None = None
    entry_time: float | None = None
    trap_interval: tuple | None = None
    flags: tuple = ()


@dataclass(frozen=True, eq=False)
class Trace:
    """Event list of one belief path; beliefs drift between events."""

    times: np.ndarray
    kinds: tuple
    before: np.ndarray
    after: np.ndarray
    weights: np.ndarray  # (n_events, 2); NaN for non-jump events
    horizon: float
    seed: int | None
    lam: float
    pi: float
    posteriors: np.ndarray = field(default=None, repr=False)
    held: np.ndarray = field(default=None, repr=False)  # belief frozen until next event

    def _held(self):
        return np.zeros(self.times.size, dtype=bool) if self.held is None else self.held

    def belief_at(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.searchsorted(self.times, t, side="right") - 1
        k = np.clip(k, 0, None)
        rate = np.where(self._held()[k], 0.0, self.lam)
        return self.pi + (self.after[k] - self.pi) * np.exp(-rate * (t - self.times[k]))

    def jump_times(self) -> np.ndarray:
        return self.times[np.array([k == "jump" for k in self.kinds], dtype=bool)]

    def segments(self):
        """(start time, duration, starting belief) of each drift segment."""
        ends = np.append(self.times[1:], self.horizon)
        return self.times, ends - self.times, self.after

    def occupation_cdf(self, x, t_from: float = 0.0) -> np.ndarray:
        """Fraction of time in ``[t_from, horizon]`` with belief at or below ``x``."""
        start, dur, b = self.segments()
        held = self._held()
        end = start + dur
        # cut segments that start before t_from
        cut = np.clip(t_from - start, 0.0, None)
        keep = end > t_from
        start, dur, b, cut, held = start[keep], dur[keep], b[keep], cut[keep], held[keep]
        b = np.where(held, b, self.pi + (b - self.pi) * np.exp(-self.lam * np.minimum(cut, dur)))
        dur = dur - np.minimum(cut, dur)
        total = dur.sum()
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(x.size)
        for i, xi in enumerate(x):
            moving = np.where(held, 0.0, _time_below(xi, b, dur, self.lam, self.pi))
            still = np.where(held & (b <= xi), dur, 0.0)
            out[i] = (moving.sum() + still.sum()) / total
        return out

    def holding_times(self, belief, tol: float = 1e-12) -> np.ndarray:
        """Durations of completed spells held at ``belief``."""
        held = self._held()
        ends = np.append(self.times[1:], np.nan)
        k = held & (np.abs(self.after - belief) <= tol) & np.isfinite(ends)
        return (ends - self.times)[k]

    def to_csv(self, path, comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["time", "belief", "event", "held"])
            for t, k, a, h in zip(self.times, self.kinds, self.after, self._held()):
                wr.writerow([repr(float(t)), repr(float(a)), k, int(h)])
            wr.writerow([repr(float(self.horizon)), repr(float(self.belief_at(self.horizon)[0])), "end", 0])


def _time_below(x, b, dur, lam, pi):
    """Time each drift segment (start ``b``, length ``dur``) spends at or below ``x``."""
    out = np.zeros_like(dur)
    left = b < pi
    right = b > pi
    at = b == pi
    out[at] = np.where(x >= pi, dur[at], 0.0)
    if x >= pi:
        out[left] = dur[left]
    else:
        bl = b[left]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(x >= bl, np.log((pi - bl) / (pi - x)) / lam, 0.0)
        out[left] = np.minimum(t, dur[left])
    br = b[right]
    if x <= pi:
        out[right] = 0.0
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(x < br, np.log((br - pi) / (x - pi)) / lam, 0.0)
        out[right] = np.clip(dur[right] - t, 0.0, None)
    return out


# ---------------------------------------------------------------------------
# simulation


def _rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def simulate(pm: PolicyMap, p0: float, horizon: float, seed=0, path_index: int = 0) -> Trace:
    """Exact event-driven path of the belief under ``pm`` up to ``horizon``."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rng = _rng(seed, path_index)
    lam, pi = pm.lam, pm.pi
    times, kinds, before, after, weights, posts = [0.0], ["start"], [p0], [p0], [(np.nan, np.nan)], [(np.nan, np.nan)]
    hits: dict = {}
    t, b = 0.0, float(p0)
    while True:
        if b not in hits:
            h = pm.first_hit(b)
            hits[b] = (None, np.inf) if h is None else (h, wait_time(b, h, pm))
        h, tau = hits[b]
        if h is None:
            # no further information: the belief drifts to pi
            times.append(t)
            kinds.append("absorb")
            before.append(b)
            after.append(b)
            weights.append((np.nan, np.nan))
            posts.append((np.nan, np.nan))
            break
        if t + tau > horizon:
            break
        t += tau
        q0, q1, w1 = chord_support(h, pm.envelope)
        nb = q1 if rng.random() < w1 else q0
        times.append(t)
        kinds.append("jump")
        before.append(h)
        after.append(nb)
        weights.append((1.0 - w1, w1))
        posts.append((q0, q1))
        b = nb
    return Trace(np.array(times), tuple(kinds), np.array(before), np.array(after),
                 np.array(weights), float(horizon), seed, lam, pi, np.array(posts))


class _Chain:
    """Finite jump structure of a policy: from each state, a wait and a jump."""

    def __init__(self, pm: PolicyMap, p0: float):
        beliefs = [float(p0)]
        index = {float(p0): 0}
        tau, hit, lo, hi, w1 = [], [], [], [], []
        k = 0
        while k < len(beliefs):
            b = beliefs[k]
            h = pm.first_hit(b)
            if h is None:
                tau.append(np.inf)
                hit.append(b)
                lo.append(k)
                hi.append(k)
                w1.append(0.0)
            else:
                tau.append(wait_time(b, h, pm))
                hit.append(h)
                q0, q1, w = chord_support(h, pm.envelope)
                for q in (q0, q1):
                    if q not in index:
                        index[q] = len(beliefs)
                        beliefs.append(q)
                lo.append(index[q0])
                hi.append(index[q1])
                w1.append(w)
            k += 1
        self.beliefs = np.array(beliefs)
        self.tau = np.array(tau)
        self.lo = np.array(lo)
        self.hi = np.array(hi)
        self.w1 = np.array(w1)


def simulate_ensemble(pm: PolicyMap, p0: float, times, n_paths: int, seed=0,
                      block: int = BLOCK) -> np.ndarray:
    """Beliefs of ``n_paths`` independent paths at the given ``times``.

    Paths are processed in blocks; block ``i`` draws from its own stream
    derived from ``(seed, i)``.
    """
    times = np.sort(np.asarray(times, dtype=float))
    chain = _Chain(pm, p0)
    out = np.empty((n_paths, times.size))
    for i, s in enumerate(range(0, n_paths, block)):
        m = min(block, n_paths - s)
        out[s:s + m] = _run_block(chain, times, m, _rng(seed, i), pm.lam, pm.pi)
    return out


def _run_block(chain: _Chain, times, m, rng, lam, pi):
    state = np.zeros(m, dtype=np.intp)
    T = np.zeros(m)
    res = np.empty((m, times.size))
    pending = np.ones((m, times.size), dtype=bool)
    tmax = times[-1]
    active = np.ones(m, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        s, t0 = state[idx], T[idx]
        t1 = t0 + chain.tau[s]
        # checkpoints inside [t0, t1) sit on the current drift segment
        inside = pending[idx] & (times[None, :] < t1[:, None])
        if inside.any():
            rows, cols = np.nonzero(inside)
            b = chain.beliefs[s[rows]]
            res[idx[rows], cols] = pi + (b - pi) * np.exp(-lam * (times[cols] - t0[rows]))
            pending[idx[rows], cols] = False
        done = ~np.isfinite(t1) | (t1 > tmax)
        go = ~done
        gi = idx[go]
        u = rng.random(gi.size)
        sg = s[go]
        state[gi] = np.where(u < chain.w1[sg], chain.hi[sg], chain.lo[sg])
        T[gi] = t1[go]
        active[idx[done]] = False
    return res


def martingale_check(paths: np.ndarray, times, lam, pi, pairs):
    """Compensated-martingale statistics at checkpoint index pairs ``(i, j)``.

    Returns ``(t, s, discrepancy, standard error)`` rows.
    """
    times = np.asarray(times, dtype=float)
    rows = []
    for i, j in pairs:
        s = times[j] - times[i]
        e = np.exp(-lam * s)
        d = paths[:, j] - e * paths[:, i]
        disc = d.mean() - (1.0 - e) * pi
        se = d.std(ddof=1) / np.sqrt(d.size)
        rows.append((times[i], s, float(disc), float(se)))
    return rows


# ---------------------------------------------------------------------------
# long-run structure


def trap_interval(pm: PolicyMap):
    """Gap of I* around pi when pi is outside I* but both sides have I* beliefs."""
    pi = pm.pi
    if pm.in_info_region(pi) or pm.empty:
        return None
    lo = [b for a, b in pm.info_region if b < pi]
    hi = [a for a, b in pm.info_region if a > pi]
    if not lo or not hi:
        return None
    return max(lo), min(hi)


def detect_cycle(pm: PolicyMap, problem=None) -> LongRunReport:
    """Long-run regime from the E* interval around pi and its I* thresholds."""
    pi = pm.pi
    trap = trap_interval(pm)
    hit = pm.envelope.interval_of(pi)
    flags = []
    if hit is None:
        return LongRunReport("learning-stops", trap_interval=trap)
    x = pm.grid
    q0, q1 = float(x[hit[0]]), float(x[hit[1]])
    h = float(np.max(np.diff(x)))
    if min(pi - q0, q1 - pi) <= h:
        flags.append("target-within-one-node-of-pi")
    p0, p1 = pm.first_hit(q0), pm.first_hit(q1)
    if p0 is None or p1 is None:
        return LongRunReport("learning-stops", trap_interval=trap, flags=tuple(flags))
    cycle = BeliefCycle(q0, q1, p0, p1, wait_time(q0, p0, pm), wait_time(q1, p1, pm))
    return LongRunReport("cycle", cycle=cycle, trap_interval=trap, flags=tuple(flags))


def classify_prior(p: float, pm: PolicyMap, problem=None) -> LongRunReport:
    """Follow the drift path from ``p`` through I* hits.

    After a jump outside the interval around pi the path continues from the
    target nearer pi, which the belief reaches with probability one;
    ``entry_time`` is measured along that path.
    """
    pi = pm.pi
    base = detect_cycle(pm)
    cyc = base.cycle
    t, b = 0.0, float(p)
    for n in range(pm.grid.size + 1):
        if cyc is not None and (cyc.q0 <= b <= cyc.p0 or cyc.p1 <= b <= cyc.q1):
            return LongRunReport("cycle", cyc, t, base.trap_interval, base.flags)
        h = pm.first_hit(b)
        if h is None:
            outcome = "never-learns" if n == 0 else "learning-stops"
            return LongRunReport(outcome, cyc, None, base.trap_interval, base.flags)
        t += wait_time(b, h, pm)
        q0, q1, _ = chord_support(h, pm.envelope)
        if q0 <= pi <= q1:
            if cyc is not None:
                return LongRunReport("cycle", cyc, t, base.trap_interval, base.flags)
            return LongRunReport("learning-stops", None, None, base.trap_interval, base.flags)
        b = q1 if q1 < pi else q0
    raise RuntimeError("path tracing did not terminate")


# ---------------------------------------------------------------------------
# ergodic law of a cycle


@dataclass(frozen=True)
class PiecewiseDensity:
    """Density constant on each ``[edges[k], edges[k+1]]`` listed in ``pieces``."""

    pieces: tuple  # ((left, right, density), ...)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, b, d in self.pieces:
            out = np.where((x >= a) & (x <= b), d, out)
        return out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, b, d in self.pieces:
            out = out + d * np.clip(np.minimum(x, b) - a, 0.0, None)
        return out

    def masses(self):
        return tuple(d * (b - a) for a, b, d in self.pieces)

    def to_csv(self, path, comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["left", "right", "density"])
            for a, b, d in self.pieces:
                wr.writerow([repr(a), repr(b), repr(d)])


def ergodic_density(cycle: BeliefCycle) -> PiecewiseDensity:
    """Two uniform pieces of mass one half on ``[q0, p0]`` and ``[p1, q1]``."""
    if cycle.degenerate:
        raise ValueError("ergodic density needs a non-degenerate cycle")
    return PiecewiseDensity(((cycle.q0, cycle.p0, 0.5 / (cycle.p0 - cycle.q0)),
                             (cycle.p1, cycle.q1, 0.5 / (cycle.q1 - cycle.p1))))


@dataclass(frozen=True)
class CycleOccupation:
    """Long-run occupation law of the belief on a cycle.

    Time spent near belief ``x`` on a drift segment is proportional to
    ``1 / |pi - x|``; the two pieces are weighted by visit frequency times
    waiting time.
    """

    cycle: BeliefCycle
    lam: float
    pi: float

    def masses(self) -> tuple[float, float]:
        a, b = self.cycle.jump_probs()
        # visits alternate sides with these embedded-chain weights
        left, right = b * self.cycle.tau0, a * self.cycle.tau1
        return left / (left + right), right / (left + right)

    def cdf(self, x):
        c, pi, lam = self.cycle, self.pi, self.lam
        mL, mR = self.masses()
        x = np.asarray(x, dtype=float)
        xl = np.clip(x, c.q0, c.p0)
        xr = np.clip(x, c.p1, c.q1)
        fl = np.log((pi - c.q0) / (pi - xl)) / (lam * c.tau0)
        fr = 1.0 - np.log((c.q1 - pi) / (xr - pi)) / (lam * c.tau1)
        return mL * fl + mR * fr

    def pdf(self, x):
        c, pi, lam = self.cycle, self.pi, self.lam
        mL, mR = self.masses()
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            d = mL / (lam * c.tau0 * np.abs(pi - x)) * ((x >= c.q0) & (x <= c.p0))
            d = d + mR / (lam * c.tau1 * np.abs(pi - x)) * ((x >= c.p1) & (x <= c.q1))
        return d


def sup_cdf_distance(cdf_a, cdf_b, points) -> float:
    return float(np.max(np.abs(np.asarray(cdf_a(points)) - np.asarray(cdf_b(points)))))
