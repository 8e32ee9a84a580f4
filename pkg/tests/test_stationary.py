import numpy as np
import pytest

from infoacq import (BeliefCycle, CostSpec, Problem, classify_prior, compare_cycles, cycle_payoffs,
                     optimize_cycle, sweep_lambda, symmetric_cycle_value, trap_test)
from infoacq.stationary import flow_payoff, simulate_cycle_payoff

from conftest import TWO_ACTIONS, benchmark_problem


class Rates:
    lam, pi, r = 0.5, 0.5, 1.0


def test_degenerate_cycle_pays_flow_at_pi(benchmark):
    c = BeliefCycle(0.5, 0.5, 0.5, 0.5, 0.0, 0.0)
    pay = cycle_payoffs(c, benchmark)
    fpi = float(flow_payoff(benchmark)(0.5)) / benchmark.r
    assert pay.w0 == pay.w1 == pay.w_pi == pytest.approx(fpi)


def test_symmetric_cycle_weights_half(benchmark):
    c = BeliefCycle.from_beliefs(0.05, 0.2, 0.8, 0.95, benchmark)
    pay = cycle_payoffs(c, benchmark)
    assert pay.alpha == pytest.approx(0.5, abs=1e-8)
    assert pay.w0 == pytest.approx(pay.w1, abs=1e-10)
    assert pay.w_pi == pytest.approx(pay.w_pi_alpha, abs=1e-10)


def test_linear_system_and_alpha_route_agree():
    P = Problem.build(np.array([[1, -1], [-0.5, 1.5]]), CostSpec("entropy", 0.1), 0.5, 0.4, 1.0, 0.01)
    c = BeliefCycle.from_beliefs(0.02, 0.1, 0.7, 0.97, P)
    pay = cycle_payoffs(c, P)
    assert pay.residual < 1e-12
    assert pay.w_pi == pytest.approx(pay.w_pi_alpha, abs=1e-10)


def test_symmetric_formula_matches_general_route(benchmark):
    for q, p in [(0.95, 0.8), (0.99, 0.6), (0.9, 0.89)]:
        c = BeliefCycle.from_beliefs(1 - q, 1 - p, p, q, benchmark)
        pay = cycle_payoffs(c, benchmark)
        sc = symmetric_cycle_value(q, p, benchmark)
        assert sc == pytest.approx(pay.w1 + benchmark.cost_value(q), abs=1e-9)


def test_symmetric_formula_limits():
    P = Problem.build(TWO_ACTIONS, None, 0.5, 0.5, 1.0, 0.01, n=101)
    assert symmetric_cycle_value(0.8, 0.8, P) == -np.inf
    P0 = P.with_params(kappa=0.0)
    assert symmetric_cycle_value(0.8, 0.8, P0) == pytest.approx(0.6)
    with pytest.raises(ValueError):
        symmetric_cycle_value(0.4, 0.45, P)


def test_monte_carlo_matches_closed_form():
    P = Problem.build(np.array([[1, -1], [-0.5, 1.5]]), CostSpec("entropy", 0.1), 0.5, 0.4, 1.0, 0.01)
    c = BeliefCycle.from_beliefs(0.02, 0.1, 0.7, 0.97, P)
    mean, se = simulate_cycle_payoff(c, P, n_paths=20_000, seed=4)
    assert abs(mean - cycle_payoffs(c, P).w_pi) < 3 * se


def test_affine_problem_never_learns(affine_problem):
    opt = optimize_cycle(affine_problem, n_coarse=15)
    assert not opt.learning
    assert opt.w_at_pi == pytest.approx(float(flow_payoff(affine_problem)(0.5)) / affine_problem.r)
    for p in (0.1, 0.5, 0.8):
        assert trap_test(p, affine_problem, n_coarse=9)


def test_optimum_is_symmetric_on_benchmark(benchmark):
    opt = optimize_cycle(benchmark)
    c = opt.cycle
    assert opt.learning
    assert c.q0 + c.q1 == pytest.approx(1.0, abs=1e-6)
    assert c.tau0 == pytest.approx(c.tau1, abs=1e-6)
    assert not trap_test(c.q0, benchmark)


def test_trap_test_agrees_with_path_tracing(trap_problem):
    P, pm = trap_problem
    rep = classify_prior(0.5, pm)
    c = rep.cycle
    # between the outer thresholds a prior either meets I* or sits in the trap
    for p in P.grid[(P.grid >= c.p0) & (P.grid <= c.p1)][::4]:
        never = classify_prior(p, pm).outcome == "never-learns"
        assert trap_test(p, P, n_coarse=15) == never, p


def test_compare_cycles():
    a = BeliefCycle.from_beliefs(0.053, 0.183, 0.817, 0.947, Rates())
    assert compare_cycles(a, a) == {"more_informative": "equal", "lower_thresholds": "equal",
                                    "more_frequent": "equal"}
    b = BeliefCycle(0.1, 0.9, 0.2, 0.7, 0.3, 1.5)
    out = compare_cycles(a, b)
    assert out["more_informative"] == "a" and out["more_frequent"] == "incomparable"
    asym = BeliefCycle.from_beliefs(0.075, 0.248, 0.867, 0.963, Rates())
    assert compare_cycles(a, asym)["lower_thresholds"] == "incomparable"


def test_sweep_shape_and_tau_identity():
    P = benchmark_problem(n=501)
    rows = sweep_lambda(P, [0.05, 0.1, 0.2, 40.0, 80.0], n_coarse=15)
    assert rows[0].tau0 > rows[1].tau0 > rows[2].tau0
    assert rows[-1].tau0 == rows[-2].tau0 == np.inf
    for row in rows[:3]:
        assert row.cycle.consistent(P.with_params(lam=row.lam))
