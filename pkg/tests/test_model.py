import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infoacq import (CostSpec, GridFunction, Problem, discounted_path_integral, drift,
                     experiment_cost, value_bounds, virtual_flow, wait_time)
from infoacq.grid import make_grid

from conftest import TWO_ACTIONS


class Rates:
    def __init__(self, lam=0.5, pi=0.5, r=1.0):
        self.lam, self.pi, self.r = lam, pi, r


def test_drift_fixed_point_and_zero_time():
    P = Rates()
    assert drift(0.5, 3.7, P) == 0.5
    assert drift(0.23, 0.0, P) == 0.23


def test_drift_halfway():
    # e^{-lam t} = 1/2 at t = 2 ln 2
    assert drift(0.9, 2 * np.log(2), Rates()) == pytest.approx(0.7, abs=1e-14)


def test_drift_rejects_negative_time():
    with pytest.raises(ValueError):
        drift(0.2, -1.0, Rates())


def test_wait_time_published_values():
    P = Rates()
    assert wait_time(0.053, 0.183, P) == pytest.approx(0.69, abs=0.005)
    assert wait_time(0.963, 0.867, P) == pytest.approx(0.465, abs=0.005)
    assert wait_time(0.3, 0.3, P) == 0.0


def test_wait_time_errors():
    P = Rates()
    with pytest.raises(ValueError):
        wait_time(0.2, 0.7, P)  # straddles pi
    with pytest.raises(ValueError):
        wait_time(0.3, 0.1, P)  # moves away from pi
    assert wait_time(0.2, 0.5, P) == np.inf


@settings(max_examples=200, deadline=None)
@given(p=st.floats(0, 1), t=st.floats(0, 20), s=st.floats(0, 20),
       lam=st.floats(0.05, 5), pi=st.floats(0.05, 0.95))
def test_drift_semigroup(p, t, s, lam, pi):
    P = Rates(lam, pi)
    assert drift(drift(p, t, P), s, P) == pytest.approx(drift(p, t + s, P), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(q=st.floats(0, 1), frac=st.floats(0.01, 0.99), lam=st.floats(0.05, 5),
       pi=st.floats(0.05, 0.95))
def test_wait_time_inverts_drift(q, frac, lam, pi):
    P = Rates(lam, pi)
    p = pi + (q - pi) * frac
    if q == pi:
        return
    assert drift(q, wait_time(q, p, P), P) == pytest.approx(p, abs=1e-12)


def test_cost_values_and_derivatives():
    p = np.array([0.1, 0.5, 0.8])
    ent = CostSpec("entropy", 1.0)
    assert ent.value(0.5) == pytest.approx(-np.log(2))
    np.testing.assert_allclose(ent.derivative(p), np.log(p / (1 - p)))
    nv = CostSpec("neg-variance", 2.0)
    np.testing.assert_allclose(nv.value(p), -2 * p * (1 - p))
    llr = CostSpec("log-likelihood-ratio", 1.0)
    h = 1e-6
    num = (llr.value(p + h) - llr.value(p - h)) / (2 * h)
    np.testing.assert_allclose(llr.derivative(p), num, rtol=1e-6, atol=1e-8)
    with pytest.raises(ValueError):
        CostSpec("quadratic", 1.0)
    with pytest.raises(ValueError):
        CostSpec("entropy", -1.0)


def test_problem_build_validation():
    with pytest.raises(ValueError, match="pi"):
        Problem.build(TWO_ACTIONS, None, 0.5, 1.5, 1.0)
    with pytest.raises(ValueError, match="lambda"):
        Problem.build(TWO_ACTIONS, None, 0.0, 0.5, 1.0)
    with pytest.raises(ValueError, match="kappa"):
        Problem.build(TWO_ACTIONS, None, 0.5, 0.5, 1.0, kappa=-1)
    table = GridFunction(np.linspace(0, 1, 11), -np.linspace(0, 1, 11) ** 2)
    with pytest.raises(ValueError, match="convex"):
        Problem.build(TWO_ACTIONS, CostSpec("custom-table", 1.0, table), 0.5, 0.5, 1.0)


def test_grid_contains_pi():
    g = make_grid(101, 0.4321, 1e-6)
    assert 0.4321 in g and np.all(np.diff(g) > 0)
    P = Problem.build(TWO_ACTIONS, CostSpec("entropy", 0.1), 0.5, 0.4321, 1.0, n=101)
    assert P.grid[P.ip] == 0.4321


def test_path_integral_constant_and_at_pi():
    P = Problem.build(lambda x: 0 * x + 2.0, None, 0.5, 0.5, 1.0, n=101)
    assert discounted_path_integral(P.u, 0.17, P) == pytest.approx(2.0, abs=1e-13)
    g = GridFunction(P.grid, np.sin(5 * P.grid))
    assert discounted_path_integral(g, 0.5, P) == pytest.approx(np.sin(2.5), abs=1e-13)


def test_path_integral_affine_closed_form():
    # g(p) = p from p = 1: pi/r + (p - pi)/(r + lam) = 0.5 + 0.5/1.5
    P = Problem.build(lambda x: x, None, 0.5, 0.5, 1.0, n=101)
    expected = 0.5 + 0.5 / 1.5
    assert discounted_path_integral(P.u, 1.0, P) == pytest.approx(expected, abs=1e-13)
    assert discounted_path_integral(lambda x: x, 1.0, P) == pytest.approx(expected, abs=1e-13)


@settings(max_examples=50, deadline=None)
@given(p=st.floats(0, 1), lam=st.floats(0.1, 3), r=st.floats(0.2, 3))
def test_exact_integral_matches_quadrature(p, lam, r):
    P = Problem.build(TWO_ACTIONS, None, lam, 0.5, r, n=401)
    exact = discounted_path_integral(P.u, p, P)
    # piecewise-linear interpolant is |2p-1| exactly, with a kink only at pi
    quad = discounted_path_integral(lambda x: np.abs(2 * x - 1), p, P, nodes=96)
    assert exact == pytest.approx(quad, abs=1e-9)


def test_virtual_flow_examples():
    P0 = Problem.build(TWO_ACTIONS, None, 0.5, 0.5, 1.0, n=101)
    np.testing.assert_array_equal(virtual_flow(P0).values, P0.u.values)
    P = Problem.build(lambda x: 0 * x, CostSpec("entropy", 1.0), 0.5, 0.5, 1.0, n=1001)
    f = virtual_flow(P)
    assert f(0.5) == pytest.approx(np.log(2), abs=1e-12)
    # hand value at p = 0.25
    expected = -(0.25 * np.log(0.25) + 0.75 * np.log(0.75)) + 0.5 * 0.25 * np.log(0.25 / 0.75)
    assert expected == pytest.approx(0.4250, abs=1e-4)
    # 0.25 sits between nodes of the clipped grid
    assert f(0.25) == pytest.approx(expected, abs=1e-7)


def test_value_bounds_examples():
    Pa = Problem.build(lambda x: 1 + x, None, 0.5, 0.5, 1.0, n=101)
    lo, hi = value_bounds(Pa)
    np.testing.assert_allclose(lo.values, hi.values, atol=1e-13)
    Pc = Problem.build(lambda x: 0 * x + 3.0, None, 0.5, 0.5, 2.0, n=101)
    lo, hi = value_bounds(Pc)
    np.testing.assert_allclose(lo.values, 1.5, atol=1e-13)
    np.testing.assert_allclose(hi.values, 1.5, atol=1e-13)
    P = Problem.build(TWO_ACTIONS, None, 0.5, 0.5, 1.0, n=1001)
    lo, hi = value_bounds(P)
    assert lo(0.5) == pytest.approx(0.0, abs=1e-13)
    assert hi(0.5) == pytest.approx(1.0, abs=1e-13)
    assert np.all(hi.values >= lo.values)


def test_experiment_cost_examples():
    P = Problem.build(TWO_ACTIONS, CostSpec("entropy", 1.0), 0.5, 0.5, 1.0, 0.0, n=101)
    assert experiment_cost(([0.3], [1.0]), 0.3, P) == 0.0
    assert experiment_cost(([0.0, 1.0], [0.5, 0.5]), 0.5, P) == pytest.approx(np.log(2))
    Pk = P.with_params(kappa=0.02)
    base = experiment_cost(([0.1, 0.9], [0.5, 0.5]), 0.5, P)
    assert experiment_cost(([0.1, 0.9], [0.5, 0.5]), 0.5, Pk) == pytest.approx(base + 0.02)
    with pytest.raises(ValueError, match="Bayes"):
        experiment_cost(([0.1, 0.9], [0.5, 0.5]), 0.4, P)
    with pytest.raises(ValueError):
        experiment_cost(([0.1, 0.9], [0.7, 0.5]), 0.5, P)


@settings(max_examples=100, deadline=None)
@given(q0=st.floats(0.01, 0.49), q1=st.floats(0.51, 0.99), t=st.floats(0, 1))
def test_experiment_cost_nonnegative(q0, q1, t):
    P = Problem.build(TWO_ACTIONS, CostSpec("entropy", 1.0), 0.5, 0.5, 1.0, 0.0, n=51)
    p = q0 + t * (q1 - q0)
    w1 = (p - q0) / (q1 - q0)
    assert experiment_cost(([q0, q1], [1 - w1, w1]), p, P) >= -1e-12
