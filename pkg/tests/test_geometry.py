import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from feketelab.geometry import (
    BallRegion,
    ChartOverflow,
    DegreeTooLow,
    InadmissibleWeight,
    ProjPoint,
    Weight,
    basis_point,
    cap_rule,
    cap_volume,
    chart_of,
    complement_rule,
    dense_grid,
    fibonacci_grid,
    from_chart,
    fs_distance,
    fs_volume,
    global_rule,
    integrate,
    integrate_gram,
    ma_total_mass,
    normalize,
    pairwise_distance,
    positivity_margin,
    rotation_to,
    sample_uniform,
    to_chart,
)

from .conftest import PERT

finite = st.floats(-3, 3, allow_nan=False)
cvec = st.lists(st.tuples(finite, finite), min_size=2, max_size=3).filter(
    lambda v: sum(a * a + b * b for a, b in v) > 1e-3)


def as_vec(v):
    return normalize(np.array([complex(a, b) for a, b in v]))


@given(cvec, cvec, st.floats(0, 2 * math.pi))
def test_distance_is_phase_invariant_and_bounded(u, v, theta):
    if len(u) != len(v):
        return
    x, y = as_vec(u), as_vec(v)
    d = fs_distance(x, y)
    assert 0 <= d <= math.pi / 2 + 1e-12
    assert fs_distance(y, x) == pytest.approx(d, abs=1e-12)
    assert fs_distance(np.exp(1j * theta) * x, y) == pytest.approx(d, abs=1e-7)


@given(cvec, cvec, cvec)
def test_triangle_inequality(u, v, w):
    if not len(u) == len(v) == len(w):
        return
    x, y, z = as_vec(u), as_vec(v), as_vec(w)
    assert fs_distance(x, z) <= fs_distance(x, y) + fs_distance(y, z) + 1e-7


@given(cvec)
def test_chart_roundtrip(v):
    x = as_vec(v)[None]
    c = int(chart_of(x)[0])
    z = to_chart(x, c)
    assert np.all(np.abs(z) <= 1 + 1e-12)  # largest-coordinate chart
    y = from_chart(z, c)
    assert fs_distance(x[0], y[0]) < 1e-7


def test_chart_overflow():
    with pytest.raises(ChartOverflow):
        to_chart(np.array([[0.0, 1.0]]), 0)


@given(cvec)
def test_rotation_maps_e0_to_center(v):
    c = as_vec(v)
    U = rotation_to(c)
    assert np.allclose(np.conj(U.T) @ U, np.eye(len(c)), atol=1e-12)
    assert np.allclose(U[:, 0], c, atol=1e-12)


def test_projpoint_equality_ignores_phase():
    p = ProjPoint(np.array([1.0, 1j]))
    assert p == ProjPoint(np.exp(0.7j) * np.array([1.0, 1j]))
    assert p != ProjPoint(np.array([1.0, -1j]))
    assert p.n == 1


def test_pairwise_distance_matches_scalar(rng):
    X = sample_uniform(2, 5, rng)
    Y = sample_uniform(2, 4, rng)
    D = pairwise_distance(X, Y)
    assert D[2, 3] == pytest.approx(fs_distance(X[2], Y[3]))


def test_volumes_and_masses():
    assert fs_volume(1) == pytest.approx(2 * math.pi)
    assert fs_volume(2) == pytest.approx(2 * math.pi ** 2)
    assert ma_total_mass(1) == pytest.approx(math.pi)
    assert cap_volume(math.pi / 2, 2) == pytest.approx(fs_volume(2))


@pytest.mark.parametrize("n", [1, 2])
def test_global_rule_volume_and_exactness(n, rng):
    rule = global_rule(8, n=n)
    assert integrate(np.ones(len(rule)), rule) == pytest.approx(fs_volume(n), rel=1e-13)
    # |Z_0|^8 has the closed form Vol * 4! n! / (4 + n)!
    exact = fs_volume(n) * math.factorial(4) * math.factorial(n) / math.factorial(4 + n)
    val = integrate(np.abs(rule.points[:, 0]) ** 8, rule)
    assert val == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("n", [1, 2])
def test_cap_plus_complement_is_global(n, rng):
    c = sample_uniform(n, 1, rng)[0]
    f = lambda Z: np.abs(Z[:, 0]) ** 6 + np.abs(Z[:, -1]) ** 2  # noqa: E731
    cap = cap_rule(c, 0.7, 8, n=n)
    comp = complement_rule(c, 0.7, 8, n=n)
    whole = global_rule(8, n=n)
    assert integrate(f(cap.points), cap) + integrate(f(comp.points), comp) == pytest.approx(
        integrate(f(whole.points), whole), rel=1e-12)
    assert integrate(np.ones(len(cap)), cap) == pytest.approx(cap_volume(0.7, n), rel=1e-12)


def test_degree_guard():
    rule = global_rule(4)
    with pytest.raises(DegreeTooLow):
        integrate(np.ones(len(rule)), rule, required_degree=10)
    with pytest.raises(DegreeTooLow):
        integrate_gram(np.ones((len(rule), 1)), np.ones((len(rule), 1)), rule, required_degree=10)


def test_integration_is_independent_of_node_order(rng):
    rule = global_rule(10)
    vals = np.abs(rule.points[:, 1]) ** 4
    perm = rng.permutation(len(rule))
    assert integrate(vals[perm], rule.permuted(perm)) == integrate(vals, rule)


def test_ball_region_contains_and_radius():
    B = BallRegion(basis_point(0), 0.5)
    pts = np.array([[1.0, 0.0], [math.cos(0.6), math.sin(0.6)]], dtype=complex)
    assert list(B.contains(pts)) == [True, False]
    with pytest.raises(ValueError):
        BallRegion(basis_point(0), 2.0)


def test_grids():
    g = fibonacci_grid(1000)
    assert g.shape == (1000, 2)
    assert np.allclose(np.linalg.norm(g, axis=1), 1)
    h = dense_grid(2, 2000)
    assert len(h) >= 2000 and np.allclose(np.linalg.norm(h, axis=1), 1)


def test_weight_json_roundtrip():
    w2 = Weight.from_json(PERT.to_json())
    assert w2.to_dict() == PERT.to_dict()
    x = fibonacci_grid(50)
    assert np.allclose(w2.u(x), PERT.u(x))


def test_weight_is_real_and_hermitian_check():
    assert np.all(np.isreal(PERT.u(fibonacci_grid(20))))
    with pytest.raises(InadmissibleWeight):
        Weight(1, 1, 0.1, [[1, 0, 0.3, 0.0]])  # missing conjugate term


def test_inadmissible_amplitude():
    assert positivity_margin(PERT) > 0
    with pytest.raises(InadmissibleWeight):
        PERT.with_amplitude(40.0)


def test_fs_ma_ratio_and_total_mass():
    rule = global_rule(30)
    fs = Weight.fubini_study(1)
    assert np.allclose(fs.ma_ratio(rule.points), 0.5)
    assert integrate(PERT.ma_ratio(rule.points), rule) == pytest.approx(math.pi, rel=1e-10)


def test_weight_unknown_keys_rejected():
    with pytest.raises(ValueError):
        Weight.from_dict({"dimension": 1, "foo": 1})
