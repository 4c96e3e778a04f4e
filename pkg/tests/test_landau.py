import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feketelab.geometry import BallRegion, basis_point, cap_volume, normalize, sample_uniform
from feketelab.landau import (
    bergman_trace_integral,
    build_concentration,
    count_above,
    count_bounds,
    hs_integral,
    landau_counts_vs_array,
    offdiag_mass,
    offdiag_mass_via_trace,
    point_evaluation_constant,
    spectral_report,
)

from .conftest import fekete, space


def test_whole_space_gives_identity():
    S = space("pert", 10)
    T = build_concentration(S, BallRegion(basis_point(0), math.pi / 2))
    assert np.allclose(T.matrix, np.eye(S.dim), atol=1e-12)
    rep = spectral_report(T)
    assert rep.trace == pytest.approx(S.dim)
    assert all(c == S.dim for c in rep.counts.values())


def test_empty_set_gives_zero():
    S = space("fs1", 6)
    rep = spectral_report(build_concentration(S, None))
    assert rep.trace == 0 and rep.counts[0.5] == 0 and rep.center == []


def test_fs_half_sphere_trace():
    k = 12
    S = space("fs1", k)
    T = build_concentration(S, BallRegion(basis_point(0), math.pi / 4))
    assert np.trace(T.matrix).real == pytest.approx((k + 1) / 2, abs=1e-10)
    # Bergman function is constant: trace = B * vol(cap)
    assert bergman_trace_integral(S, BallRegion(basis_point(0), 0.5)) == pytest.approx(
        (k + 1) / (2 * math.pi) * cap_volume(0.5), rel=1e-10)


@pytest.mark.parametrize("key,k", [("fs1", 16), ("pert", 24), ("fs2", 6)])
def test_trace_hs_and_offdiag_identities(key, k, rng):
    S = space(key, k)
    for _ in range(3):
        reg = BallRegion(sample_uniform(S.n, 1, rng)[0], rng.uniform(0.2, 1.4))
        rep = spectral_report(build_concentration(S, reg))
        assert rep.trace == pytest.approx(bergman_trace_integral(S, reg), abs=1e-8)
        assert rep.hs2 == pytest.approx(hs_integral(S, reg), abs=1e-6)
        assert offdiag_mass(S, reg) == pytest.approx(offdiag_mass_via_trace(S, reg), abs=1e-8)
        ev = rep.eigenvalues
        assert ev.min() > -1e-10 and ev.max() < 1 + 1e-10


def test_counts_within_trace_mass_bounds(rng):
    S = space("pert", 16)
    for _ in range(4):
        reg = BallRegion(sample_uniform(1, 1, rng)[0], rng.uniform(0.3, 1.2))
        ev = spectral_report(build_concentration(S, reg)).eigenvalues
        m = offdiag_mass(S, reg)
        for g in (0.1, 0.5, 0.9):
            lo, hi = count_bounds(S, reg, g, m)
            assert lo - 1e-9 <= count_above(ev, g) <= hi + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0, 1), st.floats(0, 1))
def test_count_is_monotone_in_gamma(ev, g1, g2):
    lo, hi = sorted((g1, g2))
    assert count_above(ev, hi) <= count_above(ev, lo)


def test_eigenvalue_plateau_tracks_local_dimension():
    # for a large ball most eigenvalues are near 0 or 1
    S = space("fs1", 48)
    ev = spectral_report(build_concentration(S, BallRegion(basis_point(0), 1.0))).eigenvalues
    middle = np.sum((ev > 0.1) & (ev < 0.9))
    assert middle <= 0.25 * np.sum(ev > 0.5)


def test_point_evaluation_constant_is_order_one():
    vals = []
    for k in (16, 32):
        S = space("fs1", k)
        vals.append(point_evaluation_constant(S, sample_uniform(1, 2, np.random.default_rng(0)), 0.5 / math.sqrt(k)))
    assert max(vals) / min(vals) < 1.5


def test_count_comparison_records_inputs():
    S = space("fs1", 16)
    P = fekete("fs1", 24).points
    reg = BallRegion(normalize(np.array([1.0, 0.4j])), 3.0 / 4.0)
    res = landau_counts_vs_array(S, P, reg, "sampling", constant=2.0, delta=1.0)
    assert res.kind == "sampling" and 0 <= res.gamma <= 1
    assert res.r == pytest.approx(3.0)
    with pytest.raises(ValueError):
        landau_counts_vs_array(S, P, reg, "other", constant=2.0, delta=1.0)
