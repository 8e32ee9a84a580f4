import numpy as np
import pytest

from infoacq import CostSpec, Problem, extract_policy, solve

TWO_ACTIONS = np.array([[1.0, -1.0], [-1.0, 1.0]])  # u(p) = |2p - 1|


def benchmark_problem(**kw):
    args = dict(u=TWO_ACTIONS, cost=CostSpec("entropy", 0.1), lam=0.5, pi=0.5, r=1.0,
                kappa=0.01, n=1001)
    args.update(kw)
    return Problem.build(**args)


@pytest.fixture(scope="session")
def benchmark():
    return benchmark_problem()


@pytest.fixture(scope="session")
def benchmark_solution(benchmark):
    bracket, v, w = solve(benchmark, tol=1e-10)
    pm = extract_policy(w, benchmark, bracket.gap)
    return bracket, v, w, pm


@pytest.fixture(scope="session")
def affine_problem():
    return Problem.build(lambda x: 0.3 + 0.5 * x, CostSpec("entropy", 0.1), 0.5, 0.5, 1.0, 0.01, n=201)


def synthetic_policy(q0, p0, p1, q1, lam=0.5, pi=0.5, kappa=0.02, n=1001):
    """Policy map with E* = (q0, q1) and I* = [p0, p1] on a uniform grid."""
    from infoacq import GridFunction, concave_envelope
    from infoacq.policy import PolicyMap

    x = np.linspace(0.0, 1.0, n)
    for b in (q0, p0, p1, q1, pi):
        x[int(np.argmin(np.abs(x - b)))] = b
    inside = (x > q0) & (x < q1)
    edge = np.minimum(np.abs(x - q0), np.abs(x - q1))
    w = np.where(inside, -0.1 * edge, -10.0 * edge)
    env = concave_envelope(GridFunction(x, w))
    mask = (x >= p0) & (x <= p1)
    return PolicyMap(envelope=env, info_mask=mask, kappa=kappa, eps_I=0.0, lam=lam, pi=pi)


@pytest.fixture(scope="session")
def trap_problem():
    """Safe middle action: information is acquired away from pi but never near it."""
    acts = np.array([[1.0, -1.0], [-1.0, 1.0], [0.6, 0.6]])
    P = Problem.build(acts, CostSpec("entropy", 0.2), 0.5, 0.5, 1.0, 0.03, n=201)
    bracket, v, w = solve(P)
    return P, extract_policy(w, P, bracket.gap)


# acceptance lines, keyed by criterion number
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
