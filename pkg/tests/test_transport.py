import math

import numpy as np
import pytest

from feketelab.fekete import dual_sections, lagrange_sections
from feketelab.geometry import basis_point, fs_distance, global_rule
from feketelab.transport import (
    AtomicMeasure,
    CellMeasure,
    Infeasible,
    MeshMismatch,
    bergman_measure,
    emd,
    equilibrium_measure,
    lipschitz_lower,
    loglog_slope,
    mesh_diameter,
    plan_csv,
    transport_mesh,
    tv_bridge,
    wasserstein_bracket,
)

from .conftest import FS1, PERT, fekete, space


def test_emd_two_points_closed_form():
    e0, e1 = basis_point(0), basis_point(1)
    x = np.array([[1.0, 0.0], [math.cos(0.3), math.sin(0.3)]], dtype=complex)
    res = emd(x[:1], [1.0], x[1:], [1.0])
    assert res.value == pytest.approx(0.3)
    res = emd(np.array([e0, e1]), [0.5, 0.5], np.array([e1, e0]), [0.5, 0.5])
    assert res.value == pytest.approx(0.0, abs=1e-12)
    assert res.dual_gap < 1e-9 and res.marginal_error < 1e-9


def test_emd_unbalanced_is_infeasible():
    with pytest.raises(Infeasible):
        emd(basis_point(0)[None], [1.0], basis_point(1)[None], [0.5])


def test_emd_matches_brute_force_permutation(rng):
    # uniform masses on equal numbers of atoms: the optimum is a permutation
    from itertools import permutations

    X = fekete("fs1", 3).points
    Y = fekete("pert", 3).points
    D = fs_distance(X[:, None], Y[None])
    best = min(sum(D[i, p[i]] for i in range(4)) for p in permutations(range(4))) / 4
    assert emd(X, np.full(4, 0.25), Y, np.full(4, 0.25)).value == pytest.approx(best, abs=1e-10)


def test_mesh_is_exact_and_fine_enough():
    k = 8
    rule = transport_mesh(FS1, k)
    assert len(rule) >= 60 * 9
    S = space("fs1", k)
    E = S.values(rule.points)
    G = (np.conj(E) * rule.weights[:, None]).T @ E
    assert np.allclose(G, np.eye(S.dim), atol=1e-10)
    assert 0 < mesh_diameter(rule) < 1 / math.sqrt(k)


def test_measures_are_probabilities():
    rule = transport_mesh(PERT, 8)
    nu = equilibrium_measure(PERT, rule)
    nu_k = bergman_measure(space("pert", 8), rule)
    assert nu.masses.sum() == pytest.approx(1) and nu_k.masses.sum() == pytest.approx(1)
    assert 0 <= tv_bridge(nu_k, nu) < 1
    assert AtomicMeasure(fekete("pert", 8).points).masses.sum() == pytest.approx(1)
    with pytest.raises(ValueError):
        CellMeasure(rule.points[:2], np.array([1.0, -1.0]), "bad")


def test_tv_on_different_meshes():
    a = equilibrium_measure(FS1, transport_mesh(FS1, 4))
    b = equilibrium_measure(FS1, global_rule(30))
    with pytest.raises(MeshMismatch):
        tv_bridge(a, b)


def test_fs_bergman_measure_equals_equilibrium():
    rule = transport_mesh(FS1, 6)
    assert tv_bridge(bergman_measure(space("fs1", 6), rule), equilibrium_measure(FS1, rule)) < 1e-12


def test_lipschitz_lower_bound_below_emd():
    rule = transport_mesh(FS1, 4)
    nu = equilibrium_measure(FS1, rule)
    P = fekete("fs1", 4).points
    res = emd(P, AtomicMeasure(P).masses, nu.points, nu.masses)
    assert lipschitz_lower(P, nu) <= res.value + 1e-12


@pytest.mark.parametrize("key,k", [("fs1", 8), ("pert", 8)])
def test_bracket_sandwich(key, k):
    S = space(key, k)
    P = fekete(key, k).points
    L = lagrange_sections(S, P)
    D = dual_sections(S, P, L)
    br = wasserstein_bracket(S, P, L, D)
    assert br.sandwich
    assert br.meta["coupling_marginal_error"] < 1e-8
    assert br.meta["triangle_gap"] <= br.meta["triangle_bound"] + 1e-9
    d = br.to_dict()
    assert "plan" not in d and d["sandwich"]
    assert plan_csv(br.plan, 1e-15).splitlines()[0] == "atom_index,cell_index,mass"


def test_loglog_slope():
    ks = [8, 16, 32]
    assert loglog_slope(ks, [1 / math.sqrt(k) for k in ks]) == pytest.approx(-0.5)
