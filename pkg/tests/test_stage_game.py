import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from asymgame.stage_game import (as_belief, concave_envelope_1d, lambda_max, solve_matrix_game,
                                 stage_matrix, u_surface, u_value)
from conftest import make_model
import oracles

entries = st.floats(min_value=-10, max_value=10, allow_nan=False)


def matrices(max_side=6):
    shapes = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shapes.flatmap(lambda s: arrays(float, s, elements=entries))


def _gap(A, x, yJ):
    return float((x @ A).min()), float((A @ yJ).max())


# -- beliefs and the stage matrix ----------------------------------------------

def test_belief_clipping_and_errors():
    np.testing.assert_array_equal(as_belief([1.0 + 5e-13, -5e-13]), [1.0, 0.0])
    for bad in ([0.5, 0.6], [1.1, -0.1], [[0.5, 0.5]], []):
        with pytest.raises(ValueError):
            as_belief(bad)


def _two_level_model():
    g = {f"{k},{i},{j}": ("1" if k == 0 else "3") for k in range(2) for i in range(2) for j in range(2)}
    return make_model(g=g)


def test_stage_matrix_examples():
    m = _two_level_model()
    np.testing.assert_array_equal(stage_matrix(m, [0.5, 0.5], 0.0), np.full((2, 2), 2.0))
    np.testing.assert_array_equal(stage_matrix(m, [1, 0], 0.0), np.ones((2, 2)))
    np.testing.assert_array_equal(stage_matrix(m, [0, 1], 0.0), np.full((2, 2), 3.0))


def test_stage_matrix_is_state_free_when_payoff_is():
    g = {f"{k},{i},{j}": f"{i} - {j} + y" for k in range(2) for i in range(2) for j in range(2)}
    m = make_model(g=g)
    np.testing.assert_array_equal(stage_matrix(m, [0.2, 0.8], 1.0), stage_matrix(m, [0.9, 0.1], 1.0))


# -- matrix games -----------------------------------------------------------------

@pytest.mark.parametrize("A, value, x, yJ", [
    ([[0, 0], [0, 0]], 0.0, None, None),
    ([[1, -1], [-1, 1]], 0.0, [0.5, 0.5], [0.5, 0.5]),
    ([[3, 1], [0, 2]], 1.5, [0.5, 0.5], [0.25, 0.75]),
])
def test_matrix_game_examples(A, value, x, yJ):
    v, xs, ys = solve_matrix_game(A)
    assert v == pytest.approx(value, abs=1e-12)
    if x is not None:
        np.testing.assert_allclose(xs, x, atol=1e-12)
        np.testing.assert_allclose(ys, yJ, atol=1e-12)


def test_matrix_game_rejects_bad_input():
    for bad in ([[np.nan]], np.zeros((0, 2)), [1, 2]):
        with pytest.raises(ValueError):
            solve_matrix_game(bad)


def test_matrix_game_is_deterministic_on_ties():
    A = np.ones((3, 4))
    first = solve_matrix_game(A)
    for _ in range(3):
        again = solve_matrix_game(A)
        np.testing.assert_array_equal(first[1], again[1])
        np.testing.assert_array_equal(first[2], again[2])


@given(matrices())
def test_matrix_game_duality_and_bounds(A):
    v, x, yJ = solve_matrix_game(A)
    lo, hi = _gap(A, x, yJ)
    assert hi - lo <= 1e-9
    assert lo - 1e-9 <= v <= hi + 1e-9
    assert A.min() - 1e-12 <= v <= A.max() + 1e-12
    assert abs(x.sum() - 1) < 1e-12 and abs(yJ.sum() - 1) < 1e-12
    assert x.min() >= 0 and yJ.min() >= 0


@given(matrices())
def test_matrix_game_matches_highs(A):
    v = solve_matrix_game(A)[0]
    ref, _ = oracles.game_value_lp(A)
    assert v == pytest.approx(ref, abs=1e-8)


@given(matrices())
def test_matrix_game_antisymmetry(A):
    v, x, yJ = solve_matrix_game(A)
    w, x2, y2 = solve_matrix_game(-A.T)
    assert w == pytest.approx(-v, abs=1e-9)
    # strategies of the transposed game are optimal for the swapped roles
    assert (y2 @ A).min() >= v - 1e-9
    assert (A @ x2).max() <= v + 1e-9


@given(arrays(float, (2, 2), elements=entries))
def test_two_by_two_closed_form(A):
    v = solve_matrix_game(A)[0]
    ref, _, _ = oracles.game_2x2(A)
    assert v == pytest.approx(ref, abs=1e-12)


# -- u -----------------------------------------------------------------------------

def test_u_constant_payoff():
    g = {f"{k},{i},{j}": "0.7" for k in range(2) for i in range(2) for j in range(2)}
    m = make_model(g=g)
    assert u_value(m, [0.3, 0.7], 0.4) == pytest.approx(0.7, abs=1e-14)


def test_u_matching_pennies_cancel():
    g = {}
    for i in range(2):
        for j in range(2):
            s = 1 if i == j else -1
            g[f"0,{i},{j}"] = str(s)
            g[f"1,{i},{j}"] = str(-s)
    m = make_model(g=g)
    assert u_value(m, [0.5, 0.5], 0.0) == pytest.approx(0.0, abs=1e-14)
    assert u_value(m, [1, 0], 0.0) == pytest.approx(0.0, abs=1e-14)


def test_u_at_vertices_is_per_state_value(presets):
    m = presets["full"]
    for y in (-1.0, 0.0, 2.0):
        g = m.payoff(y)
        for k, p in ((0, [1, 0]), (1, [0, 1])):
            assert u_value(m, p, y) == pytest.approx(oracles.game_value_lp(g[k])[0], abs=1e-9)


def test_u_surface_matches_pointwise(presets):
    m = presets["full"]
    ps, ys = np.linspace(0, 1, 5), np.linspace(m.y_min, m.y_max, 4)
    S = u_surface(m, ps, ys)
    for a, p in enumerate(ps):
        for b, y in enumerate(ys):
            assert S[a, b] == pytest.approx(u_value(m, [p, 1 - p], y), abs=1e-12)


def test_u_surface_y_free_columns_identical(presets):
    S = u_surface(presets["aumann_maschler"], np.linspace(0, 1, 9), np.linspace(-2, 2, 5))
    assert np.ptp(S, axis=1).max() == 0.0


def test_aumann_maschler_u_shape(presets):
    m = presets["aumann_maschler"]
    # W-shaped: zero at 0, 1/2, 1 with peaks 1 at 1/4 and 3/4
    vals = [u_value(m, [p, 1 - p], 0.0) for p in (0, 0.25, 0.5, 0.75, 1)]
    np.testing.assert_allclose(vals, [0, 1, 0, 1, 0], atol=1e-12)


def _pl_model():
    return make_model(g={f"{k},{i},{j}": str((k + 1) * (1 if i == j else -1) + 0.3 * k)
                         for k in range(2) for i in range(2) for j in range(2)})


@given(st.floats(0, 1), st.floats(0, 1))
def test_u_lipschitz_in_belief(p, q):
    m = _pl_model()
    g = m.payoff(0.0)
    L = np.abs(g[0] - g[1]).max()
    f = lambda s: u_value(m, [s, 1 - s], 0.0)
    assert abs(f(p) - f(q)) <= L * abs(p - q) + 1e-12


def test_u_piecewise_linear_in_belief():
    m = _pl_model()
    ps = np.linspace(0, 1, 401)
    vals = np.array([u_value(m, [p, 1 - p], 0.0) for p in ps])
    d2 = np.abs(vals[2:] - 2 * vals[1:-1] + vals[:-2])
    # a 2x2 game has at most a handful of regime changes along a segment
    assert (d2 > 1e-9).sum() <= 6


# -- envelopes ----------------------------------------------------------------------

def test_envelope_of_concave_is_identity():
    x = np.linspace(0, 1, 31)
    v = np.sqrt(x) - x ** 2
    np.testing.assert_array_equal(concave_envelope_1d(v), v)


def test_envelope_of_square_is_chord():
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(concave_envelope_1d(x ** 2), x, atol=1e-12)
    np.testing.assert_allclose(oracles.chord_envelope(x ** 2), x, atol=1e-12)


def test_envelope_of_v_shape():
    x = np.linspace(0, 1, 21)
    env = concave_envelope_1d(np.abs(2 * x - 1))
    np.testing.assert_allclose(env, 1.0, atol=1e-12)
    assert env[0] == 1.0 and env[-1] == 1.0


def test_envelope_needs_two_points():
    with pytest.raises(ValueError):
        concave_envelope_1d([1.0])


small_vectors = st.integers(2, 21).flatmap(
    lambda n: arrays(float, n, elements=st.floats(-5, 5, allow_nan=False)))


@given(small_vectors)
def test_envelope_matches_chord_oracle(v):
    np.testing.assert_allclose(concave_envelope_1d(v), oracles.chord_envelope(v), atol=1e-9)


@given(small_vectors)
def test_envelope_idempotent_dominating_concave(v):
    env = concave_envelope_1d(v)
    np.testing.assert_allclose(concave_envelope_1d(env), env, atol=1e-12)
    assert np.all(env >= v)
    assert env[0] == v[0] and env[-1] == v[-1]
    if v.size >= 3:
        assert (env[2:] - 2 * env[1:-1] + env[:-2]).max() <= 1e-9


@given(small_vectors, st.data())
def test_envelope_monotone(v, data):
    bump = data.draw(arrays(float, v.size, elements=st.floats(0, 3, allow_nan=False)))
    assert np.all(concave_envelope_1d(v + bump) >= concave_envelope_1d(v) - 1e-12)


@given(small_vectors, st.data())
def test_envelope_minimal(v, data):
    """Any grid-concave majorant stays above the envelope."""
    n = v.size
    slope = data.draw(st.floats(-20, 20))
    curv = data.draw(st.floats(0, 20))
    x = np.linspace(0, 1, n)
    w = slope * x - curv * x * x
    w = w + (v - w).max()  # shift until it dominates v
    assert np.all(w >= concave_envelope_1d(v) - 1e-9)


def test_envelope_non_uniform_x():
    x = np.array([0.0, 0.1, 0.5, 0.6, 1.0])
    v = np.array([0.0, 1.0, 0.0, 2.0, 0.0])
    np.testing.assert_allclose(concave_envelope_1d(v, x), oracles.chord_envelope(v, x), atol=1e-12)


# -- lambda_max ------------------------------------------------------------------------

def test_lambda_max_vertex_and_zero():
    assert lambda_max([1, 0], np.eye(2)) == -np.inf
    assert lambda_max([0, 0, 1], np.ones((3, 3))) == -np.inf
    assert lambda_max([0.3, 0.7], np.zeros((2, 2))) == 0.0


def test_lambda_max_rejects_asymmetric():
    with pytest.raises(ValueError):
        lambda_max([0.5, 0.5], [[0, 1], [0, 0]])
    with pytest.raises(ValueError):
        lambda_max([0.5, 0.5], np.eye(3))


@given(st.floats(1e-6, 1 - 1e-6), entries, entries, entries)
def test_lambda_max_two_states(p, a, b, c):
    assert lambda_max([p, 1 - p], [[a, b], [b, c]]) == pytest.approx((a - 2 * b + c) / 2, abs=1e-9)


sym3 = arrays(float, (3, 3), elements=entries).map(lambda S: 0.5 * (S + S.T))


@given(sym3, st.floats(0.01, 100))
def test_lambda_max_homogeneous(S, alpha):
    p = [0.2, 0.3, 0.5]
    assert lambda_max(p, alpha * S) == pytest.approx(alpha * lambda_max(p, S), rel=1e-9, abs=1e-9)


@given(sym3, st.sampled_from([[0.2, 0.3, 0.5], [0.5, 0.5, 0.0], [0.0, 0.4, 0.6]]))
def test_lambda_max_dominates_random_directions(S, p):
    lm = lambda_max(p, S)
    ref = oracles.lambda_max_bruteforce(p, S, samples=300)
    assert ref <= lm + 1e-9
    assert lm - ref <= 0.05 * (np.abs(S).max() + 1) * 3
