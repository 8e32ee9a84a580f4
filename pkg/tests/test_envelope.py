import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infoacq import GridFunction, chord_support, concave_envelope
from infoacq.envelope import upper_hull


def brute_cav(x, y):
    """Max over all chords (i <= k <= j) evaluated at node k."""
    n = len(x)
    out = np.array(y, dtype=float)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(i + 1, j):
                t = (x[k] - x[i]) / (x[j] - x[i])
                out[k] = max(out[k], (1 - t) * y[i] + t * y[j])
    return out


def test_tent_and_valley():
    x = np.array([0.0, 0.5, 1.0])
    tent = concave_envelope(GridFunction(x, [0.0, 1.0, 0.0]))
    np.testing.assert_array_equal(tent.cav.values, [0.0, 1.0, 0.0])
    assert tent.intervals == []
    valley = concave_envelope(GridFunction(x, [1.0, 0.0, 1.0]))
    np.testing.assert_array_equal(valley.cav.values, [1.0, 1.0, 1.0])
    assert valley.intervals == [(0.0, 1.0)]


def test_chord_support_examples():
    x = np.array([0.0, 0.053, 0.5, 0.947, 1.0])
    env = concave_envelope(GridFunction(x, [0.0, 1.0, 0.0, 1.0, 0.0]))
    assert env.intervals == [(0.053, 0.947)]
    q0, q1, w1 = chord_support(0.183, env)
    assert (q0, q1) == (0.053, 0.947)
    assert w1 == pytest.approx(0.13 / 0.894, abs=1e-12)
    assert w1 == pytest.approx(0.14541, abs=1e-5)
    assert chord_support(0.053, env) == (0.053, 0.053, 0.0)
    assert chord_support(0.02, env) == (0.02, 0.02, 0.0)


def test_upper_hull_drops_collinear_points():
    x = np.linspace(0, 1, 5)
    np.testing.assert_array_equal(upper_hull(x, 2 * x), [0, 4])


values = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=30)


def _grid(n, seed):
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(np.linspace(0, 1, 10 * n), n, replace=False))


@settings(max_examples=200, deadline=None)
@given(y=values, seed=st.integers(0, 2**32 - 1))
def test_envelope_matches_brute_force(y, seed):
    x = _grid(len(y), seed)
    env = concave_envelope(GridFunction(x, y), rtol=0.0)
    np.testing.assert_allclose(env.cav.values, brute_cav(x, np.array(y)), rtol=0, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(y=values, seed=st.integers(0, 2**32 - 1), shift=st.floats(-5, 5), slope=st.floats(-5, 5))
def test_envelope_properties(y, seed, shift, slope):
    x = _grid(len(y), seed)
    y = np.array(y)
    g = GridFunction(x, y)
    cav = concave_envelope(g).cav.values
    # majorant, concave, idempotent
    assert np.all(cav >= y - 1e-12)
    slopes = np.diff(cav) / np.diff(x)
    assert np.all(np.diff(slopes) <= 1e-6 * (1 + np.abs(slopes[1:])))
    again = concave_envelope(GridFunction(x, cav)).cav.values
    np.testing.assert_allclose(again, cav, atol=1e-9)
    # affine translation commutes with the envelope
    moved = concave_envelope(GridFunction(x, y + shift + slope * x)).cav.values
    np.testing.assert_allclose(moved, cav + shift + slope * x, atol=1e-8)
    # monotone in the function
    bumped = concave_envelope(GridFunction(x, y + np.abs(np.sin(7 * x)))).cav.values
    assert np.all(bumped >= cav - 1e-9)


@settings(max_examples=100, deadline=None)
@given(y=values, seed=st.integers(0, 2**32 - 1), t=st.floats(0, 1))
def test_chord_support_is_bayes_plausible(y, seed, t):
    x = _grid(len(y), seed)
    env = concave_envelope(GridFunction(x, y))
    p = x[0] + t * (x[-1] - x[0])
    q0, q1, w1 = chord_support(p, env)
    assert 0.0 <= w1 <= 1.0
    assert (1 - w1) * q0 + w1 * q1 == pytest.approx(p, abs=1e-12)
    if q0 != q1:
        # the envelope at p is the chord value
        chord = (1 - w1) * env.cav(q0) + w1 * env.cav(q1)
        assert env.cav(p) == pytest.approx(chord, abs=1e-9)
