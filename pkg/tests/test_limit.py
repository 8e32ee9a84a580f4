import numpy as np
import pytest
from scipy import stats

from infoacq import (CostSpec, GridFunction, Problem, build_woc, convergence_study,
                     longrun_interval, simulate_woc, solve, w0_closed_form)
from infoacq.envelope import concave_envelope
from infoacq.limit import jump_rate, longrun_policy, simulate_woc_ensemble, simulate_woc_payoff
from infoacq.model import virtual_flow

from conftest import benchmark_problem


@pytest.fixture(scope="module")
def limit_problem():
    return benchmark_problem(kappa=0.0)


def test_longrun_interval_examples(limit_problem):
    concave = Problem.build(lambda x: -(x - 0.3) ** 2, None, 0.5, 0.5, 1.0, n=101)
    assert longrun_interval(concave) is None
    assert w0_closed_form(0.5, concave) == pytest.approx(-(0.2 ** 2) / 1.0)
    valley = Problem.build(GridFunction(np.array([0.0, 0.5, 1.0]), [1.0, 0.0, 1.0]), None,
                           0.5, 0.5, 1.0, n=101)
    assert longrun_interval(valley) == (0.0, 1.0)
    a, b = longrun_interval(limit_problem)
    assert a + b == pytest.approx(1.0, abs=1e-12)


def test_w0_affine_closed_form(limit_problem):
    P = limit_problem
    a, b = longrun_interval(P)
    cav = concave_envelope(virtual_flow(P)).cav
    ps = P.grid[(P.grid >= a) & (P.grid <= b)][::50]
    expected = cav(0.5) / P.r + (cav(ps) - cav(0.5)) / (P.r + P.lam)
    np.testing.assert_allclose(w0_closed_form(ps, P), expected, atol=1e-12)
    with pytest.raises(ValueError):
        w0_closed_form(a / 2, P)


def test_w0_dominates_positive_fixed_cost(limit_problem):
    P = limit_problem
    a, b = longrun_interval(P)
    nodes = P.grid[(P.grid >= a) & (P.grid <= b)]
    w0 = w0_closed_form(nodes, P)
    for kappa in (0.02, 0.005):
        bracket, v, w = solve(P.with_params(kappa=kappa))
        assert np.all(w0 >= w(nodes) - bracket.gap)


def test_rates():
    assert jump_rate(0.2, 0.8, 0.5, 0.5) == pytest.approx(0.25)
    assert jump_rate(0.8, 0.2, 0.5, 0.5) == pytest.approx(0.25)


def test_build_woc(limit_problem):
    pol = build_woc(limit_problem)
    r0, r1 = pol.rates()
    assert r0 + r1 == pytest.approx(limit_problem.lam)
    assert pol.longrun_interval in pol.instant_region
    concave = Problem.build(lambda x: -(x - 0.3) ** 2, None, 0.5, 0.5, 1.0, n=101)
    flat = build_woc(concave)
    assert flat.confirmation == () and flat.instant_region == ()


def test_woc_holding_times_and_occupation(limit_problem):
    pol = longrun_policy(limit_problem)
    q0, q1 = pol.longrun_interval
    r0, r1 = pol.rates()
    tr = simulate_woc(pol, 0.5, 20_000.0, seed=8)
    hold = tr.holding_times(q0)
    assert stats.kstest(hold, "expon", args=(0, 1 / r0)).pvalue > 0.01
    share0 = tr.occupation_cdf(q0)[0]
    assert share0 == pytest.approx(r1 / limit_problem.lam, abs=0.02)


def test_woc_ensemble_follows_drift(limit_problem):
    pol = build_woc(limit_problem)
    times = np.array([0.5, 1.0, 3.0])
    for p0 in (0.005, 0.3):
        paths = simulate_woc_ensemble(pol, p0, times, 40_000, seed=3)
        mean = paths.mean(axis=0)
        se = paths.std(axis=0, ddof=1) / np.sqrt(paths.shape[0])
        drift = 0.5 + (p0 - 0.5) * np.exp(-0.5 * times)
        assert np.all(np.abs(mean - drift) < 3 * se)


def test_woc_payoff_matches_closed_form(limit_problem):
    pol = longrun_policy(limit_problem)
    mean, se = simulate_woc_payoff(pol, limit_problem, 0.3, n_paths=20_000, seed=2)
    assert abs(mean - w0_closed_form(0.3, limit_problem)) < 3 * se + 1e-9


def test_convergence_study_benchmark():
    rows = convergence_study(benchmark_problem(n=501), [0.02, 0.005, 0.002])
    assert all(r.outcome == "cycle" for r in rows)
    assert max(rows[-1].q_gap) < max(rows[0].q_gap)
    taus = [r.tau[0] for r in rows]
    assert taus[0] > taus[1] > taus[2]


def test_convergence_study_affine_never_learns():
    P = Problem.build(lambda x: 0.2 + x, CostSpec("entropy", 0.1), 0.5, 0.5, 1.0, n=201)
    rows = convergence_study(P, [0.02, 0.01])
    assert all(r.outcome == "learning-stops" for r in rows)
    with pytest.raises(ValueError):
        convergence_study(P, [0.01, 0.02])
