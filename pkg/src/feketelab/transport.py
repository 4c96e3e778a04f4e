"""Wasserstein brackets between Fekete measures, Bergman measures and the equilibrium measure.

Continuous measures are discretized on the nodes of a product rule that
integrates bidegree-(k, k) polynomials exactly. On that common mesh the
lower bound (1-Lipschitz distance function) and the upper bound (complex
coupling built from Lagrange and dual sections, plus a total-variation
bridge) are exact inequalities for the discrete problem solved by the LP.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix, vstack

from .bergman import SectionSpace, dimension, required_degree
from .fekete import DualSystem, LagrangeSystem
from .geometry import (
    QuadratureRule,
    Weight,
    basis_point,
    dense_grid,
    fibonacci_grid,
    ma_total_mass,
    normalize,
    pairwise_distance,
    shell_rule,
)


class Infeasible(RuntimeError):
    pass


class MeshMismatch(ValueError):
    pass


@dataclass
class AtomicMeasure:
    points: np.ndarray = field(repr=False)

    @property
    def masses(self):
        return np.full(len(self.points), 1.0 / len(self.points))


@dataclass
class CellMeasure:
    points: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)
    source: str
    mesh_id: str = ""
    cell_diameter: float = math.nan

    def __post_init__(self):
        if np.any(self.masses < 0):
            raise ValueError("negative cell mass")
        self.masses = self.masses / np.sum(self.masses)


def transport_mesh(w: Weight, k, atoms=None, factor=60):
    """Product rule exact for the level-k Gram integrands with at least ``factor * atoms`` nodes."""
    n = w.dimension
    N = atoms if atoms is not None else dimension(k, n)
    deg = required_degree(w, k)
    p = int(math.ceil(deg / 2))
    n_rad = (p + 2) // 2 + 1
    n_ang = max(p + 1, 2 * n_rad)
    while (n_rad * n_ang) ** n < factor * N:
        n_rad += 1
        n_ang = max(p + 1, 2 * n_rad)
    return shell_rule(basis_point(0, n), 0.0, math.pi / 2, deg, n=n, nodes=(n_rad, n_ang))


def mesh_diameter(rule: QuadratureRule, probe=20000):
    """Twice the covering radius of the nodes (bound on the cell diameter)."""
    grid = dense_grid(rule.n, probe) if rule.n == 2 else fibonacci_grid(probe)
    best = np.full(len(grid), np.inf)
    for s in range(0, len(rule.points), 2048):
        best = np.minimum(best, np.min(pairwise_distance(grid, rule.points[s:s + 2048]), axis=1))
    return float(2 * np.max(best))


def _mesh_id(rule):
    return f"{rule.n}:{len(rule)}:{rule.degree}"


def equilibrium_measure(w: Weight, rule: QuadratureRule, diameter=math.nan):
    """Normalized Monge-Ampere measure on the mesh."""
    m = rule.weights * w.ma_ratio(rule.points) / ma_total_mass(w.dimension)
    return CellMeasure(rule.points, m, "equilibrium", _mesh_id(rule), diameter)


def bergman_measure(S: SectionSpace, rule: QuadratureRule, diameter=math.nan):
    """Normalized Bergman measure Pi(y, y) dV / N on the mesh."""
    m = rule.weights * S.bergman_function(rule.points) / S.dim
    return CellMeasure(rule.points, m, "bergman", _mesh_id(rule), diameter)


# ---------------------------------------------------------------------------
# exact transport


@dataclass
class TransportResult:
    value: float
    plan: np.ndarray = field(repr=False)
    dual_gap: float
    dual_violation: float
    marginal_error: float


def emd(mu_points, mu_masses, nu_points, nu_masses, cost=None) -> TransportResult:
    """Exact discrete optimal transport with cost = Fubini-Study distance (HiGHS LP)."""
    a = np.asarray(mu_masses, dtype=float)
    b = np.asarray(nu_masses, dtype=float)
    if abs(a.sum() - b.sum()) > 1e-9:
        raise Infeasible("unbalanced masses")
    C = pairwise_distance(mu_points, nu_points) if cost is None else np.asarray(cost)
    m, n = C.shape
    rows = np.repeat(np.arange(m), n)
    cols = np.arange(m * n)
    Ar = coo_matrix((np.ones(m * n), (rows, cols)), shape=(m, m * n))
    Ac = coo_matrix((np.ones(m * n), (np.tile(np.arange(n), m), cols)), shape=(n, m * n))
    A = vstack([Ar, Ac]).tocsr()
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10,
                           "presolve": True})
    if res.status != 0:
        raise Infeasible(res.message)
    P = res.x.reshape(m, n)
    P[P < 0] = 0.0
    y = res.eqlin.marginals
    u, v = y[:m], y[m:]
    dual_val = float(a @ u + b @ v)
    viol = float(max(0.0, np.max(u[:, None] + v[None, :] - C)))
    value = float(np.sum(P * C))
    merr = float(max(np.max(np.abs(P.sum(1) - a)), np.max(np.abs(P.sum(0) - b))))
    return TransportResult(value, P, abs(value - dual_val), viol, merr)


def plan_csv(plan, tol=0.0):
    i, j = np.nonzero(plan > tol)
    lines = ["atom_index,cell_index,mass"] + [f"{a},{c},{plan[a, c]:.17g}" for a, c in zip(i, j)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# bounds


def lipschitz_lower(atoms, nu: CellMeasure):
    """int dist(., F) dnu: f = dist(., F) is 1-Lipschitz and vanishes on the atoms."""
    atoms = np.atleast_2d(atoms)
    d = np.min(pairwise_distance(nu.points, atoms), axis=1)
    return float(d @ nu.masses)


def coupling_upper(L: LagrangeSystem, D: DualSystem, rule: QuadratureRule):
    """(1/N) sum_lambda int d(lambda, y) |<l_lambda(y), Phi_lambda(y)>| dV(y) on the mesh nodes."""
    lv = L.values(rule.points)
    pv = D.values(rule.points)
    rho = np.abs(lv * np.conj(pv)) * rule.weights[:, None]
    d = pairwise_distance(rule.points, L.points)
    return float(np.sum(d * rho) / L.points.shape[0])


def complex_coupling_marginal_error(L: LagrangeSystem, D: DualSystem, rule: QuadratureRule, nu_k: CellMeasure):
    lv = L.values(rule.points)
    pv = D.values(rule.points)
    rho = lv * np.conj(pv) * rule.weights[:, None] / L.points.shape[0]
    e_atoms = np.max(np.abs(rho.sum(0) - 1.0 / L.points.shape[0]))
    e_cells = np.max(np.abs(rho.sum(1) - nu_k.masses))
    return float(max(e_atoms, e_cells))


def tv_bridge(nu_k: CellMeasure, nu: CellMeasure):
    """Total variation sup_A |nu_k(A) - nu(A)| = half the L1 distance on the common mesh."""
    if nu_k.mesh_id != nu.mesh_id or len(nu_k.masses) != len(nu.masses):
        raise MeshMismatch("measures live on different meshes")
    return 0.5 * float(np.sum(np.abs(nu_k.masses - nu.masses)))


@dataclass
class WassersteinBracket:
    k: int
    lower: float
    value: float
    upper: float
    value_bergman: float
    coupling: float
    tv: float
    plan: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def sandwich(self):
        return self.lower <= self.value + 1e-12 and self.value <= self.upper + 1e-9

    def to_dict(self):
        d = {key: val for key, val in self.__dict__.items() if key != "plan"}
        d["sandwich"] = self.sandwich
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def wasserstein_bracket(S: SectionSpace, points, L: LagrangeSystem, D: DualSystem, factor=60):
    """Bracket lower <= W(mu_k, nu) <= upper around the exact discrete value.

    upper = coupling bound for W(mu_k, nu_k) + diam * TV(nu_k, nu).
    """
    k = S.k
    pts = normalize(np.atleast_2d(points))
    rule = transport_mesh(S.weight, k, atoms=len(pts), factor=factor)
    diam = mesh_diameter(rule)
    nu = equilibrium_measure(S.weight, rule, diam)
    nu_k = bergman_measure(S, rule, diam)
    mu = AtomicMeasure(pts)
    res = emd(pts, mu.masses, nu.points, nu.masses)
    res_k = emd(pts, mu.masses, nu_k.points, nu_k.masses)
    low = lipschitz_lower(pts, nu)
    cup = coupling_upper(L, D, rule)
    tv = tv_bridge(nu_k, nu)
    upper = cup + (math.pi / 2) * tv
    meta = {
        "cells": len(rule),
        "atoms": len(pts),
        "cell_diameter": diam,
        "dual_gap": res.dual_gap,
        "dual_violation": res.dual_violation,
        "marginal_error": res.marginal_error,
        "coupling_marginal_error": complex_coupling_marginal_error(L, D, rule, nu_k),
        "triangle_gap": abs(res.value - res_k.value),
        "triangle_bound": (math.pi / 2) * tv,
        "solver": "highs-lp",
    }
    return WassersteinBracket(k, low, res.value, upper, res_k.value, cup, tv, res.plan, meta)


def loglog_slope(ks, values):
    return float(np.polyfit(np.log(np.asarray(ks, float)), np.log(np.asarray(values, float)), 1)[0])
