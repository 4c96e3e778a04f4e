import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feketelab.bergman import (
    FitDegenerate,
    GramNotPD,
    build_section_space,
    decay_profile,
    diagonal_identity_error,
    dimension,
    fock_kernel,
    kernel_slice_csv,
    l1_kernel_bounds,
    monomial_space,
    normalized_chart,
    points_at_distance,
    rescaled_kernel,
    reproducing_error,
    required_degree,
)
from feketelab.geometry import (
    BallRegion,
    DegreeTooLow,
    Weight,
    fs_distance,
    global_rule,
    integrate,
    sample_uniform,
)

from .conftest import FS1, PERT, space


def test_dimension_counts():
    assert [dimension(k, 1) for k in (0, 1, 5)] == [1, 2, 6]
    assert [dimension(k, 2) for k in (1, 4, 10)] == [3, 15, 66]
    assert len(space("fs2", 4).exps) == 15


def test_fs_k1_gram_is_pi_identity():
    S = build_section_space(FS1, 1)
    assert np.allclose(S.monomial_gram(), math.pi * np.eye(2), atol=1e-13)


@pytest.mark.parametrize("k", [3, 8, 17])
def test_fs_gram_diagonal_closed_form(k):
    S = space("fs1", k)
    G = S.monomial_gram()
    exact = np.array([2 * math.pi / ((k + 1) * math.comb(k, j)) for j in range(k + 1)])
    assert np.max(np.abs(np.diag(G).real / exact - 1)) < 1e-10
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) < 1e-12 * np.max(exact)


def test_cholesky_reconstructs_gram():
    S = space("pert", 12)
    R = S.chol @ np.conj(S.chol.T)
    assert np.max(np.abs(R - S.gram)) / np.max(np.abs(S.gram)) < 1e-10
    assert np.allclose(S.gram, np.conj(S.gram.T))
    assert np.min(np.linalg.eigvalsh(S.gram)) > 0


def test_k1_bergman_function_is_one_over_pi(rng):
    S = build_section_space(FS1, 1)
    assert np.allclose(S.bergman_function(sample_uniform(1, 30, rng)), 1 / math.pi, atol=1e-13)


@pytest.mark.parametrize("k", [4, 16])
def test_fs_kernel_modulus_closed_form(k, rng):
    S = space("fs1", k)
    X, Y = sample_uniform(1, 10, rng), sample_uniform(1, 10, rng)
    K = np.abs(S.kernel(X, Y))
    d = fs_distance(X[:, None], Y[None])
    assert np.allclose(K, (k + 1) / (2 * math.pi) * np.cos(d) ** k, atol=1e-12)
    # antipodal points
    x = X[0]
    xa = np.array([-np.conj(x[1]), np.conj(x[0])])
    assert abs(S.kernel(x[None], xa[None])[0, 0]) < 1e-12


@pytest.mark.parametrize("key", ["fs1", "pert", "fs2"])
def test_kernel_symmetry_and_identities(key, rng):
    S = space(key, 6)
    X = sample_uniform(S.n, 20, rng)
    K = S.kernel(X, X)
    assert np.allclose(np.abs(K), np.abs(K.T), atol=1e-13)
    assert np.allclose(np.diag(K).real, S.bergman_function(X))
    assert diagonal_identity_error(S, X) < 1e-8
    assert reproducing_error(S, X) < 1e-8


def test_bergman_integral_equals_dimension():
    S = space("pert", 10)
    rule = global_rule(S.rule.degree + 4)
    assert integrate(S.bergman_function(rule.points), rule) == pytest.approx(S.dim, rel=1e-10)


def test_small_perturbation_moves_gram_linearly():
    k = 6
    G0 = build_section_space(FS1, k).monomial_gram()
    diffs = []
    for t in (1e-3, 2e-3):
        G = build_section_space(PERT.with_amplitude(t), k).monomial_gram()
        diffs.append(np.linalg.norm(G - G0, 2))
    assert diffs[1] / diffs[0] == pytest.approx(2.0, rel=0.02)


def test_underresolved_rule_is_rejected():
    with pytest.raises(DegreeTooLow):
        build_section_space(FS1, 10, global_rule(4))
    assert required_degree(FS1, 10) == 20
    assert required_degree(PERT, 10) > 20


def test_gram_not_pd_signal():
    # a rule with a single radial node cannot see a 3-dimensional space
    rule = global_rule(20)
    tiny = type(rule)(rule.points[:2], rule.weights[:2], 40, rule.center, 0.0, math.pi / 2)
    with pytest.raises(GramNotPD):
        build_section_space(FS1, 4, tiny, retry=False)


def test_monomial_space_spans_same_space(rng):
    S = space("pert", 5)
    M = monomial_space(PERT, 5)
    X = sample_uniform(1, 6, rng)
    # same span: ONB values are monomial values times a fixed invertible matrix
    A = np.linalg.solve(M.values(X), S.values(X))
    Y = sample_uniform(1, 4, rng)
    assert np.allclose(M.values(Y) @ A, S.values(Y), atol=1e-10)


def test_kernel_slice_csv():
    S = space("fs1", 3)
    text = kernel_slice_csv(S, S.rule.points[:2], S.rule.points[:3])
    lines = text.strip().splitlines()
    assert lines[0] == "x_index,y_index,abs_kernel" and len(lines) == 7


def test_points_at_distance(rng):
    x = sample_uniform(2, 1, rng)[0]
    ys = points_at_distance(x, np.array([0.1, 0.5, 1.2]), rng)
    assert np.allclose(fs_distance(ys, x[None]), [0.1, 0.5, 1.2])


def test_decay_fit_positive_and_stable():
    c16 = decay_profile(space("fs1", 16)).c
    c32 = decay_profile(space("fs1", 32)).c
    assert c16 > 0 and c32 > 0
    assert abs(c32 / c16 - 1) < 0.25
    assert decay_profile(space("pert", 16)).c > 0


def test_decay_fit_degenerate():
    with pytest.raises(FitDegenerate):
        decay_profile(space("fs1", 16), u_range=(0.01, 0.01))
    with pytest.raises(ValueError):
        decay_profile(space("fs1", 4))


def _submean_constant(S, delta, rng, trials=20):
    best = 0.0
    for _ in range(trials):
        z = sample_uniform(S.n, 1, rng)[0]
        c = rng.standard_normal(S.dim) + 1j * rng.standard_normal(S.dim)
        ball = BallRegion(z, delta / math.sqrt(S.k))
        rule = ball.rule(2 * S.k + 8)
        local = integrate(np.abs(S.values(rule.points) @ c) ** 2, rule)
        val = abs(S.values(z[None])[0] @ c) ** 2
        best = max(best, val * (delta / math.sqrt(S.k)) ** (2 * S.n) / local)
    return best


@pytest.mark.parametrize("delta", [0.3, 0.6])
def test_submean_value_constant_uniform_in_k(delta, rng):
    consts = [_submean_constant(space("pert", k), delta, rng) for k in (8, 16, 32)]
    assert max(consts) / min(consts) < 2.0


def test_plancherel_polya_uniform_in_k(rng):
    ratios = []
    for k in (8, 16, 32):
        S = space("fs1", k)
        # a delta/sqrt(k)-separated set: a coarse spiral
        from feketelab.geometry import fibonacci_grid

        P = fibonacci_grid(2 * k)
        worst = 0.0
        for _ in range(10):
            c = rng.standard_normal(S.dim) + 1j * rng.standard_normal(S.dim)
            worst = max(worst, np.sum(np.abs(S.values(P) @ c) ** 2) / k / np.sum(np.abs(c) ** 2))
        ratios.append(worst)
    assert max(ratios) < 3.0


def test_l1_bounds_bounded():
    res = [l1_kernel_bounds(space("fs1", k)) for k in (8, 16, 32)]
    sup = [r.sup_l1 for r in res]
    mom = [r.sup_moment * math.sqrt(k) for r, k in zip(res, (8, 16, 32))]
    assert max(sup) / min(sup) < 2 and max(mom) / min(mom) < 2
    for r in res:
        assert all(v / R < 20 for R, v in r.offdiag_l1.items())


def test_fock_kernel_at_origin_and_rescaled_limit():
    assert fock_kernel(np.zeros((1, 1)), np.zeros((1, 1)))[0, 0] == pytest.approx(1 / math.pi)
    x0 = np.array([1.0, 0.0], dtype=complex)
    vals = []
    for k in (16, 64):
        S = space("fs1", k)
        vals.append(abs(rescaled_kernel(S, normalized_chart(FS1, x0), np.zeros((1, 1)))[0, 0] - 1 / math.pi))
    assert vals[1] < vals[0] < 0.02


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2 ** 31 - 1))
def test_bergman_function_nonnegative_and_fs_constant(k, seed):
    S = space("fs1", k)
    X = sample_uniform(1, 8, np.random.default_rng(seed))
    B = S.bergman_function(X)
    assert np.all(B >= 0)
    assert np.allclose(B, (k + 1) / (2 * math.pi), rtol=1e-10)


def test_fs2_bergman_constant():
    S = space("fs2", 5)
    X = sample_uniform(2, 30, np.random.default_rng(0))
    assert np.allclose(S.bergman_function(X), 21 / (2 * math.pi ** 2), rtol=1e-10)


def test_weight_with_zero_amplitude_is_fs():
    w = Weight.example_perturbed(0.0)
    assert not w.is_perturbed
