"""Fekete configurations: weighted determinant maximization and Lagrange/dual systems.

The objective at unit representatives x_1..x_N is ``log |det(e_i(x_j))|^2``
with unitarized values, i.e. the log of the pointwise norm of the
determinant section. It changes by an additive constant under a change of
basis, so the optimizer works with scaled monomials and never needs a Gram
matrix.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .bergman import SectionSpace, monomial_space
from .geometry import (
    Weight,
    cap_rule,
    dense_grid,
    integrate_gram,
    normalize,
    pairwise_distance,
    sample_uniform,
)


class SingularConfiguration(ValueError):
    pass


class SingularEvaluation(np.linalg.LinAlgError):
    pass


class NoProgress(RuntimeError):
    pass


CERT_TAU = 1e-3
COINCIDENCE_TOL = 1e-7  # arccos near 1 resolves distances only down to ~sqrt(eps)


@dataclass
class SolveOptions:
    restarts: int | None = None  # default 8 + 2n
    seed: int = 0
    tol: float = 1e-9
    max_iter: int = 2000
    tau: float = CERT_TAU
    grid_size: int = 40000
    max_exchanges: int | None = None
    polish_rounds: int = 3

    def resolved(self, n):
        d = dict(self.__dict__)
        if d["restarts"] is None:
            d["restarts"] = 8 + 2 * n
        return d


@dataclass
class FeketeConfig:
    weight: Weight
    k: int
    points: np.ndarray = field(repr=False)
    objective: float
    certificate: dict
    meta: dict

    @property
    def N(self):
        return len(self.points)

    def to_dict(self):
        return {
            "k": self.k,
            "weight": self.weight.to_dict(),
            "points": [[[float(z.real), float(z.imag)] for z in p] for p in self.points],
            "objective": self.objective,
            "certificate": self.certificate,
            "meta": self.meta,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d):
        pts = np.array([[complex(a, b) for a, b in p] for p in d["points"]], dtype=complex)
        return cls(Weight.from_dict(d["weight"], check=False), int(d["k"]), pts, float(d["objective"]),
                   d["certificate"], d["meta"])

    def points_csv(self):
        n1 = self.points.shape[1]
        head = ["k", "index"] + [f"{p}{i}" for i in range(n1) for p in ("re", "im")]
        lines = [",".join(head)]
        for j, p in enumerate(self.points):
            vals = [f"{v:.17g}" for z in p for v in (z.real, z.imag)]
            lines.append(",".join([str(self.k), str(j)] + vals))
        return "\n".join(lines) + "\n"


def canonical(X):
    """Unit representatives with the largest coordinate real and positive."""
    X = normalize(np.atleast_2d(X))
    idx = np.argmax(np.abs(X), axis=1)
    ph = X[np.arange(len(X)), idx]
    return X * (np.abs(ph) / ph)[:, None]


def min_separation(X):
    if len(X) < 2:
        return math.pi / 2
    D = pairwise_distance(X, X)
    np.fill_diagonal(D, np.inf)
    return float(np.min(D))


# ---------------------------------------------------------------------------
# objective and gradient


def objective(S: SectionSpace, X):
    """log |det(e_i(x_j))|^2 in unitarized frames; -inf at coincident points."""
    X = normalize(np.atleast_2d(X))
    if min_separation(X) < COINCIDENCE_TOL:
        return -math.inf
    sign, logabs = np.linalg.slogdet(S.values(X))
    return 2.0 * float(logabs) if sign != 0 else -math.inf


def objective_and_gradient(S: SectionSpace, X):
    """Objective and its Riemannian gradient, as tangent vectors of shape (N, n+1).

    The gradient comes from the degree-0 extension
    ``log|det P(Z_j)|^2 - k sum log|Z_j|^2 - k t sum u(Z_j)``; its holomorphic
    derivative in Z_j is ``(M^{-1} dM)_{jj} - k conj(Z_j) - k t du``.
    """
    X = normalize(np.atleast_2d(X))
    if min_separation(X) < COINCIDENCE_TOL:
        raise SingularConfiguration("two points coincide")
    k = S.k
    E, D = S.holomorphic_derivatives(X)
    sign, logabs = np.linalg.slogdet(E)
    if sign == 0 or not np.isfinite(logabs):
        raise SingularConfiguration("evaluation matrix is singular")
    Einv = np.linalg.inv(E)
    g = np.einsum("jan,nj->ja", D, Einv) - k * np.conj(X)
    if S.weight.is_perturbed:
        g = g - k * S.weight.amplitude * S.weight.u_grad(X)
    G = 2.0 * np.conj(g)
    G = G - np.sum(G * np.conj(X), axis=1, keepdims=True) * X
    return 2.0 * float(logabs), G


def _tangent_basis(X):
    """Orthonormal complex bases of the orthogonal complements of each x_j, shape (P, n, n+1)."""
    P, n1 = X.shape
    T = np.empty((P, n1 - 1, n1), dtype=complex)
    for j in range(P):
        U = np.linalg.svd(np.eye(n1) - np.outer(X[j], np.conj(X[j])))[0]
        T[j] = U[:, :n1 - 1].T
    return T


def _ascent(S, X, tol, max_iter, rounds=20):
    """Quasi-Newton ascent on (CP^n)^N.

    Each round runs L-BFGS in the retraction chart ``c -> normalize(x_j + T_j c_j)``
    around the current points; rounds repeat until a chart is left almost
    immediately (no more progress) or ``rounds`` is exhausted.
    """
    total = 0
    f = objective(S, X)
    converged = False
    for _ in range(rounds):
        T = _tangent_basis(X)
        P, n, _ = T.shape
        X0 = X

        def unpack(v):
            c = v[:P * n].reshape(P, n) + 1j * v[P * n:].reshape(P, n)
            return X0 + np.einsum("pm,pma->pa", c, T)

        def fun(v):
            Y = unpack(v)
            r = np.linalg.norm(Y, axis=1)
            try:
                fv, G = objective_and_gradient(S, Y / r[:, None])
            except SingularConfiguration:
                return 1e300, np.zeros_like(v)
            gY = G / r[:, None]
            ga = np.real(np.einsum("pma,pa->pm", np.conj(T), gY))
            gb = np.imag(np.einsum("pma,pa->pm", np.conj(T), gY))
            return -fv, -np.concatenate([ga.ravel(), gb.ravel()])

        res = minimize(fun, np.zeros(2 * P * n), jac=True, method="L-BFGS-B",
                       options={"maxiter": max_iter, "gtol": tol * max(S.k, 1), "ftol": 1e-15, "maxcor": 30})
        Xn = normalize(unpack(res.x))
        fn = objective(S, Xn)
        total += res.nit
        if fn >= f:
            X, f = Xn, fn
        if res.nit < 5 or total >= max_iter:
            converged = res.nit < 5
            break
    return X, f, total, converged


# ---------------------------------------------------------------------------
# Lagrange and dual systems


@dataclass
class LagrangeSystem:
    """Column j holds the coefficients of l_j in the basis of ``space``."""

    space: SectionSpace
    points: np.ndarray = field(repr=False)
    coef: np.ndarray = field(repr=False)

    def values(self, Z):
        return self.space.values(Z) @ self.coef

    def delta_error(self):
        V = self.values(self.points)
        return float(np.max(np.abs(np.abs(V) - np.eye(len(self.points)))))


@dataclass
class DualSystem:
    """Column lambda holds the coefficients of Phi_lambda = Pi(., lambda)."""

    space: SectionSpace
    points: np.ndarray = field(repr=False)
    coef: np.ndarray = field(repr=False)

    def values(self, Z):
        return self.space.values(Z) @ self.coef


def lagrange_sections(S: SectionSpace, X) -> LagrangeSystem:
    X = normalize(np.atleast_2d(X))
    A = S.values(X)
    if np.linalg.matrix_rank(A) < A.shape[1] or A.shape[0] != A.shape[1]:
        raise SingularEvaluation("evaluation matrix is not invertible")
    return LagrangeSystem(S, X, np.linalg.inv(A))


def dual_sections(S: SectionSpace, X, L: LagrangeSystem | None = None) -> DualSystem:
    if not S.orthonormal:
        raise ValueError("dual sections need an orthonormal basis")
    X = normalize(np.atleast_2d(X))
    return DualSystem(S, X, np.conj(S.values(X)).T)


def dual_identity_errors(S: SectionSpace, L: LagrangeSystem, D: DualSystem, X):
    """Errors of the three pairing identities (pairing integral, Bergman tiling, |Phi| = |Pi|)."""
    rule = S.rule
    Lv = L.values(rule.points)
    Dv = D.values(rule.points)
    # int <l_lambda, Phi_lambda> dV: diagonal of the cross Gram
    pair = np.diag(integrate_gram(Dv, Lv, rule))
    e1 = float(np.max(np.abs(pair - 1.0)))
    lx = L.values(X)
    px = D.values(X)
    tile = np.sum(lx * np.conj(px), axis=1)
    e2 = float(np.max(np.abs(tile - S.bergman_function(X))))
    K = S.kernel(X, D.points)
    e3 = float(np.max(np.abs(np.abs(px) - np.abs(K))))
    return e1, e2, e3


# ---------------------------------------------------------------------------
# certificate and diagnostics


@lru_cache(maxsize=4)
def _grid(n, size):
    return dense_grid(n, size)


def lagrange_sup(S: SectionSpace, X, grid=None, chunk=8192):
    """Grid sup of |l_j| for every j (the points themselves are included)."""
    X = normalize(np.atleast_2d(X))
    if grid is None:
        grid = _grid(S.n, 40000)
    Ainv = np.linalg.inv(S.values(X))
    sup = np.ones(len(X))
    arg = np.array(X)
    for s in range(0, len(grid), chunk):
        ell = np.abs(S.values(grid[s:s + chunk]) @ Ainv)
        i = np.argmax(ell, axis=0)
        v = ell[i, np.arange(len(X))]
        better = v > sup
        sup[better] = v[better]
        arg[better] = grid[s:s + chunk][i[better]]
    return sup, arg


def covering_radius(X, grid):
    d = pairwise_distance(grid, X)
    return float(np.max(np.min(d, axis=1)))


def config_diagnostics(X, k, grid=None):
    X = normalize(np.atleast_2d(X))
    n = X.shape[1] - 1
    if grid is None:
        grid = _grid(n, 40000)
    sep = min_separation(X)
    cov = covering_radius(X, grid)
    rk = math.sqrt(max(k, 1))
    return {"separation": sep, "covering": cov, "separation_sqrt_k": sep * rk, "covering_sqrt_k": cov * rk}


def _local_polish(S, X, rounds, k):
    """Move each point to the best node of a shrinking local cap grid (never decreases |det|)."""
    n = S.n
    nodes = (10, 16) if n == 1 else (4, 8)
    r = 2.0 / math.sqrt(max(k, 1))
    X = X.copy()
    for _ in range(rounds):
        for j in range(len(X)):
            loc = cap_rule(X[j], min(r, math.pi / 2), 4, n=n, nodes=nodes).points
            Ainv = np.linalg.inv(S.values(X))
            ell = np.abs(S.values(loc) @ Ainv[:, j])
            i = int(np.argmax(ell))
            if ell[i] > 1.0 + 1e-12:
                X[j] = loc[i]
        r /= 4
    return X


def _initial_points(w: Weight, N, rng):
    """Rejection sampling from the normalized Monge-Ampere measure."""
    n = w.dimension
    if not w.is_perturbed:
        return sample_uniform(n, N, rng)
    probe = sample_uniform(n, 4096, rng)
    bound = 1.2 * float(np.max(w.ma_ratio(probe)))
    out = []
    while len(out) < N:
        cand = sample_uniform(n, 2 * N, rng)
        acc = rng.uniform(size=len(cand)) * bound < w.ma_ratio(cand)
        out.extend(cand[acc])
    return np.array(out[:N])


def _optimize(S, X, opts, grid):
    X, f, iters, _ = _ascent(S, X, opts["tol"], opts["max_iter"])
    exchanges = 0
    max_ex = opts["max_exchanges"] if opts["max_exchanges"] is not None else 4 * S.dim
    while True:
        sup, arg = lagrange_sup(S, X, grid)
        j = int(np.argmax(sup))
        if sup[j] <= 1.0 + 0.5 * opts["tau"] or exchanges >= max_ex:
            break
        X = X.copy()
        X[j] = arg[j]
        exchanges += 1
        X, f, it2, _ = _ascent(S, X, opts["tol"], opts["max_iter"])
        iters += it2
    if opts["polish_rounds"]:
        X = _local_polish(S, X, opts["polish_rounds"], S.k)
        X, f, it2, _ = _ascent(S, X, opts["tol"], opts["max_iter"])
        iters += it2
    return X, f, iters, exchanges


def certificate(S, X, tau=CERT_TAU, grid=None):
    n = S.n
    if grid is None:
        grid = _grid(n, 40000)
    sup, _ = lagrange_sup(S, X, grid)
    diag = config_diagnostics(X, S.k, grid)
    return {
        "lagrange_sup": float(np.max(sup)),
        "tau": tau,
        "grid_size": int(len(grid)),
        "certified": bool(np.max(sup) <= 1.0 + tau),
        **diag,
    }


def solve(S: SectionSpace, opts: SolveOptions | None = None) -> FeketeConfig:
    """Best certified local maximizer over seeded multistarts."""
    opts = opts or SolveOptions()
    n, k, N = S.n, S.k, S.dim
    o = opts.resolved(n)
    grid = _grid(n, o["grid_size"])
    rng = np.random.default_rng(o["seed"])
    starts = [_initial_points(S.weight, N, rng) for _ in range(o["restarts"])]
    best = None
    failures = 0
    for r, X0 in enumerate(starts):
        try:
            X, f, iters, ex = _optimize(S, X0, o, grid)
        except SingularConfiguration:
            failures += 1
            continue
        X = canonical(X)
        f = objective(S, X)
        key = (f, canonical(X).round(12).tobytes())
        if best is None or f > best[0] + 1e-12 or (abs(f - best[0]) <= 1e-12 and key[1] < best[1]):
            best = (f, key[1], X, r, iters, ex)
    if best is None:
        raise NoProgress(f"all {failures} restarts failed")
    f, _, X, r, iters, ex = best
    cert = certificate(S, X, o["tau"], grid)
    meta = {"seed": o["seed"], "restarts": o["restarts"], "best_restart": r, "iterations": iters,
            "exchanges": ex, "options": o}
    return FeketeConfig(S.weight, k, X, f, cert, meta)


# ---------------------------------------------------------------------------
# cached solves


def _cache_key(w: Weight, k, opts: SolveOptions):
    d = {"weight": w.to_dict(), "k": int(k), "opts": opts.resolved(w.dimension)}
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:20]


def solve_level(w: Weight, k: int, opts: SolveOptions | None = None, cache_dir=None) -> FeketeConfig:
    """Fekete configuration at level k (basis independent), optionally cached on disk."""
    opts = opts or SolveOptions()
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"fekete_n{w.dimension}_k{k}_{_cache_key(w, k, opts)}.json"
        if path.exists():
            return FeketeConfig.from_dict(json.loads(path.read_text()))
    cfg = solve(monomial_space(w, k), opts)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(cfg.to_json())
        tmp.replace(path)
    return cfg


def round_level(x):
    """Integer approximation of a real level (round half to even)."""
    return int(round(x))
