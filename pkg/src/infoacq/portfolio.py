"""Mean-variance allocation across a safe asset and two risky assets."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .model import CostSpec, Problem

ALPHA_NODES = 513
VARIANCE_MODES = ("conditional", "total")


@dataclass(frozen=True)
class MarketSpec:
    """Per-state return moments, as ``(state 0, state 1)`` pairs.

    ``variance_mode`` picks the risk the investor prices: ``"conditional"``
    averages the per-state covariance matrices over the belief, ``"total"``
    adds the dispersion of the means as well.
    """

    m_A: tuple
    m_B: tuple
    var_A: tuple
    var_B: tuple
    cov: tuple = (0.0, 0.0)
    psi: float = 0.5
    s: float = 0.0
    z: float = 0.0
    variance_mode: str = "conditional"

    def __post_init__(self):
        for name in ("m_A", "m_B", "var_A", "var_B", "cov"):
            val = tuple(float(x) for x in getattr(self, name))
            if len(val) != 2:
                raise ValueError(f"market.{name} needs one value per state")
            object.__setattr__(self, name, val)
        if not self.psi > 0:
            raise ValueError(f"market.psi must be positive, got {self.psi}")
        if self.z < 0:
            raise ValueError(f"market.z must be non-negative, got {self.z}")
        if self.variance_mode not in VARIANCE_MODES:
            raise ValueError(f"market.variance_mode must be one of {VARIANCE_MODES}")
        for th in (0, 1):
            va, vb, c = self.var_A[th], self.var_B[th], self.cov[th]
            if va < 0 or vb < 0 or c * c > va * vb * (1 + 1e-12):
                raise ValueError(f"covariance matrix of state {th} is not positive semi-definite")

    @classmethod
    def benchmark(cls, m_high=4.0, m_low=1.0, var=2.0, psi=0.5, s=0.0, z=0.0):
        """Symmetric regimes: asset A is the high-return asset in state 1."""
        return cls(m_A=(m_low, m_high), m_B=(m_high, m_low), var_A=(var, var), var_B=(var, var),
                   cov=(0.0, 0.0), psi=psi, s=s, z=z)

    def means(self, theta):
        return np.array([self.m_A[theta], self.m_B[theta]])

    def sigma(self, theta):
        return np.array([[self.var_A[theta], self.cov[theta]], [self.cov[theta], self.var_B[theta]]])


def belief_moments(spec: MarketSpec, p: float):
    """Mean vector and covariance matrix of returns under belief ``p``."""
    m0, m1 = spec.means(0), spec.means(1)
    mean = p * m1 + (1.0 - p) * m0
    dm = m1 - m0
    cov = p * spec.sigma(1) + (1.0 - p) * spec.sigma(0) + p * (1.0 - p) * np.outer(dm, dm)
    return mean, cov


def _priced_moments(spec: MarketSpec, p: float):
    mean, cov = belief_moments(spec, p)
    if spec.variance_mode == "conditional":
        dm = spec.means(1) - spec.means(0)
        cov = cov - p * (1.0 - p) * np.outer(dm, dm)
    return mean, cov


def _profile(alpha, mean, cov, s, psi):
    """Best value over the risky share ``gamma`` for each asset-A share ``alpha``."""
    a = np.asarray(alpha, dtype=float)
    m = a * mean[0] + (1.0 - a) * mean[1]
    V = a * a * cov[0, 0] + 2.0 * a * (1.0 - a) * cov[0, 1] + (1.0 - a) ** 2 * cov[1, 1]
    V = np.maximum(V, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(V > 0, (m - s) / (psi * V), np.where(m > s, 1.0, 0.0))
    g = np.clip(g, 0.0, 1.0)
    return s + g * (m - s) - 0.5 * psi * g * g * V, g


def _candidates(mean, cov, s, psi):
    """Closed-form stationary points of the profile on each branch."""
    out = [0.0, 1.0]
    dm = mean[0] - mean[1]
    # V(alpha) = A a^2 + B a + C
    A = cov[0, 0] - 2 * cov[0, 1] + cov[1, 1]
    B = 2 * (cov[0, 1] - cov[1, 1])
    C = cov[1, 1]
    # full investment: maximize m - psi V / 2
    if A > 0:
        out.append((dm - 0.5 * psi * B) / (psi * A))
    # interior gamma: maximize (m - s)^2 / V, i.e. 2 m' V = (m - s) V'
    m0 = mean[1] - s
    coeffs = [2 * dm * A - dm * 2 * A, 2 * dm * B - (dm * B + m0 * 2 * A), 2 * dm * C - m0 * B]
    roots = np.roots(coeffs) if np.any(np.abs(coeffs) > 0) else []
    out.extend(float(x.real) for x in np.atleast_1d(roots) if abs(x.imag) < 1e-12)
    return np.clip(np.array(out), 0.0, 1.0)


def indirect_utility(spec: MarketSpec, p: float, n_alpha: int = ALPHA_NODES):
    """Optimal flow utility ``(u, gamma*, alpha*)`` at belief ``p``.

    ``alpha*`` is NaN when holding only the safe asset is optimal.
    """
    mean, cov = _priced_moments(spec, float(p))
    s, psi = spec.s, spec.psi
    grid = np.linspace(0.0, 1.0, n_alpha)
    cand = np.concatenate([grid, _candidates(mean, cov, s, psi)])
    vals, _ = _profile(cand, mean, cov, s, psi)
    k = int(np.argmax(vals))
    best_a, best_v = float(cand[k]), float(vals[k])
    if k < n_alpha:
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, n_alpha - 1)]
        res = minimize_scalar(lambda a: -_profile(a, mean, cov, s, psi)[0], bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        # keep the grid or closed-form point unless refinement clearly improves
        if -res.fun > best_v + 1e-13 * max(1.0, abs(best_v)):
            best_a, best_v = float(res.x), float(-res.fun)
    v, g = _profile(best_a, mean, cov, s, psi)
    g = float(g)
    risky = float(v) - (spec.z if g > 0 else 0.0)
    if g == 0.0 or risky <= s:
        return float(s), 0.0, np.nan
    return risky, g, best_a


def utility_table(spec: MarketSpec, beliefs):
    """Vectorized wrapper returning arrays ``(u, gamma, alpha)``."""
    rows = [indirect_utility(spec, p) for p in np.asarray(beliefs, dtype=float)]
    u, g, a = (np.array(x) for x in zip(*rows))
    return u, g, a


def make_problem(spec: MarketSpec, cost: CostSpec | None, lam: float, pi: float, r: float,
                 kappa: float, n: int = 1001) -> Problem:
    """Problem whose flow utility is the indirect utility of ``spec``."""
    return Problem.build(lambda x: utility_table(spec, x)[0], cost, lam, pi, r, kappa, n=n)


def write_utility(path, spec: MarketSpec, beliefs, comment: str | None = None):
    u, g, a = utility_table(spec, beliefs)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["belief", "u", "gamma", "alpha"])
        for row in zip(beliefs, u, g, a):
            wr.writerow([repr(float(x)) for x in row])
