import math

import numpy as np
import pytest

from feketelab.equidistribution import default_r_grid, equidistribution_table
from feketelab.fekete import round_level
from feketelab.frames import (
    ArrayFamily,
    EmptyArray,
    LevelMismatch,
    MissingLevel,
    density_deficit_constants,
    density_report,
    fekete_family,
    frame_report,
    l2_constants,
    l2_interp_constant,
    least_norm_interpolant,
    localized_interpolant,
    localized_sections,
    ma_ball_mass,
    make_perturbed_fekete,
    make_spiral,
    spiral_points,
)
from feketelab.geometry import Weight, basis_point, cap_rule, fibonacci_grid, integrate, sample_uniform

from .conftest import CACHE, FS1, FS2, PERT, fekete, space


def test_fekete_is_both_sampling_and_interpolating():
    S = space("fs1", 16)
    rep = frame_report(S, fekete("fs1", 16).points, fibonacci_grid(2000))
    assert rep.sampling and rep.interpolating
    assert rep.A_inf >= 1.0 and rep.C1 > 0
    d = rep.to_dict()
    assert d["A_inf_is_estimate"] and d["count"] == 17


def test_oversampled_array_is_not_interpolating():
    S = space("fs1", 16)
    P = fekete("fs1", 24).points
    A, B = l2_constants(S, P)
    assert math.isfinite(B) and A <= B
    assert l2_interp_constant(S, P) == math.inf


def test_undersampled_array_is_not_sampling():
    S = space("fs1", 16)
    P = fekete("fs1", 12).points
    assert l2_constants(S, P)[1] == math.inf
    C = l2_interp_constant(S, P)
    assert math.isfinite(C)
    # the least-norm interpolant attains the data and the constant bounds its norm
    v = np.random.default_rng(1).standard_normal(len(P)) + 0j
    c = least_norm_interpolant(S, P, v)
    assert np.allclose(S.values(P) @ c, v, atol=1e-10)
    assert np.vdot(c, c).real * 16 <= C * np.sum(np.abs(v) ** 2) * (1 + 1e-10)


def test_empty_array():
    with pytest.raises(EmptyArray):
        l2_constants(space("fs1", 4), np.zeros((0, 2)))


def test_perturbed_family_levels_and_provenance():
    fam = make_perturbed_fekete(FS1, 0.5, -1, [16, 32], cache_dir=CACHE)
    assert fam.provenance["source_levels"] == {16: 8, 32: 16}
    assert len(fam[16]) == 9
    with pytest.raises(MissingLevel):
        fam[64]
    with pytest.raises(ValueError):
        make_perturbed_fekete(FS1, 0.5, 0, [16])
    assert round_level(1.5 * 5) == 8


def test_family_csv_and_delta():
    fam = fekete_family(FS1, [8, 16], cache_dir=CACHE)
    lines = fam.to_csv().splitlines()
    assert lines[0].startswith("# ") and lines[1] == "k,index,re0,im0,re1,im1"
    assert len(lines) == 2 + 9 + 17
    assert 1.0 < fam.delta < 3.0


@pytest.mark.parametrize("w", [FS1, PERT, FS2])
def test_spiral_sizes_and_norms(w):
    fam = make_spiral(w, 1.25, [4, 8])
    n = w.dimension
    sizes = {4: 5 if n == 1 else 15, 8: 9 if n == 1 else 45}
    for k, P in fam.levels.items():
        assert len(P) == math.ceil(1.25 * sizes[k])
        assert np.allclose(np.linalg.norm(P, axis=1), 1)


def test_spiral_follows_equilibrium_measure():
    # the share of spiral points in a ball approximates its normalized m_phi mass
    P = spiral_points(PERT, 4000)
    c = basis_point(1)
    frac = np.mean(np.abs(np.sum(P * np.conj(c), axis=1)) > math.cos(0.8))
    assert frac == pytest.approx(ma_ball_mass(PERT, c, 0.8) / math.pi, abs=0.01)


def test_ma_ball_mass_fs_closed_form_and_quadrature():
    x = sample_uniform(1, 1, np.random.default_rng(3))[0]
    assert ma_ball_mass(FS1, x, 0.6) == pytest.approx(math.pi * math.sin(0.6) ** 2)
    rule = cap_rule(x, 0.6, 40)
    assert ma_ball_mass(PERT, x, 0.6) == pytest.approx(integrate(PERT.ma_ratio(rule.points), rule))
    assert ma_ball_mass(PERT, x, 3.0) == pytest.approx(math.pi, rel=1e-10)


def test_density_report_of_fekete_family_is_near_critical():
    fam = fekete_family(FS1, [16, 32], cache_dir=CACHE)
    rep = density_report(FS1, fam)
    assert rep.critical == pytest.approx(1 / math.pi)
    assert all(a <= b for a, b in zip(rep.nu_minus, rep.nu_plus))
    assert abs(rep.D_minus * math.pi - 1) < 0.1
    M = density_deficit_constants(rep)
    assert set(M) == {2.0, 4.0, 8.0}


def test_density_normalizations():
    fam = fekete_family(FS2, [8], cache_dir=CACHE)
    with pytest.raises(ValueError):
        density_report(FS2, fam, normalization="volume")
    a = density_report(FS2, fam, R_grid=(4,), normalization="k")
    b = density_report(FS2, fam, R_grid=(4,), normalization="dimension")
    # both normalizations differ by n! dim / k^n = (k+1)(k+2)/k^2
    assert a.nu_minus[0] / b.nu_minus[0] == pytest.approx(90 / 64)


def test_localized_interpolant_interpolates():
    li = localized_interpolant(FS1, 16, 0.5, cache_dir=CACHE)
    assert (li.k1, li.k2) == (8, 4)
    assert li.interpolation_error < 1e-8
    assert li.ratio <= li.constant * (1 + 1e-12)
    assert math.isfinite(li.least_norm_C)


def test_localized_sections_level_mismatch():
    with pytest.raises(LevelMismatch):
        localized_sections(FS1, 16, 0.5, points=fekete("fs1", 12).points)


def test_equidistribution_table_rows_and_grid():
    k = 16
    table = equidistribution_table(FS1, {k: fekete("fs1", k).points}, x_grid=fibonacci_grid(20), r_size=5)
    assert len(table.rows) == 100
    r = default_r_grid(k, 5)
    assert r[0] == pytest.approx(0.5) and r[-1] == pytest.approx(math.pi / 2)
    # the whole sphere row: both ratios are 1
    last = [row for row in table.rows if row[2] == pytest.approx(math.pi / 2)]
    assert all(abs(row[3] - 1) < 1e-12 and abs(row[4] - 1) < 1e-12 for row in last)
    assert table.csv().splitlines()[0] == "k,x_index,r,count_ratio,measure_ratio,discrepancy"
    assert table.variation == 1.0


def test_array_family_delta_with_single_points():
    fam = ArrayFamily({0: np.array([[1.0, 0.0]], dtype=complex)}, {"kind": "test"})
    assert fam.delta == math.inf


def test_spiral_on_cp2_needs_fubini_study():
    w = Weight(2, 1, 0.05, [[(1, 0), (1, 0), 0.2, 0.0]])
    with pytest.raises(NotImplementedError):
        spiral_points(w, 10)
