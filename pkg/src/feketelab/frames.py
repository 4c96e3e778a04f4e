"""Sampling and interpolation constants, density functionals and array families."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import interp1d

from .bergman import SectionSpace, build_section_space, dimension, monomial_space
from .fekete import SolveOptions, lagrange_sections, min_separation, round_level, solve_level
from .geometry import (
    Weight,
    fibonacci_grid,
    integrate,
    integrate_gram,
    ma_total_mass,
    normalize,
    pairwise_distance,
)


class EmptyArray(ValueError):
    pass


class MissingLevel(KeyError):
    pass


class LevelMismatch(ValueError):
    pass


SINGULAR_TOL = 1e-12


# ---------------------------------------------------------------------------
# frame constants


def evaluation_matrix(S: SectionSpace, points):
    pts = np.atleast_2d(points)
    if pts.size == 0:
        raise EmptyArray("array has no points")
    return S.values(normalize(pts))


def l2_constants(S: SectionSpace, points):
    """(A, B) of the sampling inequality; B = inf when E*E is singular."""
    E = evaluation_matrix(S, points)
    ev = np.linalg.eigvalsh(np.conj(E.T) @ E)
    kn = S.k ** S.n
    A = kn / ev[-1]
    B = kn / ev[0] if ev[0] > SINGULAR_TOL * ev[-1] else math.inf
    return float(A), float(B)


def l2_interp_constant(S: SectionSpace, points):
    """C of the interpolation inequality (exact: least-norm interpolant); inf if EE* is singular."""
    E = evaluation_matrix(S, points)
    ev = np.linalg.eigvalsh(E @ np.conj(E.T))
    if ev[0] <= SINGULAR_TOL * ev[-1]:
        return math.inf
    return float(S.k ** S.n / ev[0])


def least_norm_interpolant(S: SectionSpace, points, values):
    E = evaluation_matrix(S, points)
    return np.conj(E.T) @ np.linalg.solve(E @ np.conj(E.T), values)


def linf_constant(S: SectionSpace, points, grid, ensemble=256, seed=0):
    """Estimate of the L-infinity sampling constant: max over random sections of sup_grid |s| / sup_Lambda |s|."""
    rng = np.random.default_rng(seed)
    Cf = (rng.standard_normal((S.dim, ensemble)) + 1j * rng.standard_normal((S.dim, ensemble))) / math.sqrt(2)
    on_pts = np.max(np.abs(evaluation_matrix(S, points) @ Cf), axis=0)
    on_grid = np.zeros(ensemble)
    for s in range(0, len(grid), 8192):
        on_grid = np.maximum(on_grid, np.max(np.abs(S.values(grid[s:s + 8192]) @ Cf), axis=0))
    on_grid = np.maximum(on_grid, on_pts)
    return float(np.max(on_grid / on_pts))


def l1_dual_constant(S: SectionSpace, points, grid):
    """sup_x k^{-n} sum_lambda |Pi(x, lambda)| over the grid."""
    P = np.conj(evaluation_matrix(S, points)).T
    best = 0.0
    for s in range(0, len(grid), 8192):
        best = max(best, float(np.max(np.sum(np.abs(S.values(grid[s:s + 8192]) @ P), axis=1))))
    return best / S.k ** S.n


@dataclass
class FrameReport:
    k: int
    count: int
    A: float
    B: float
    C: float
    A_inf: float | None = None
    C1: float | None = None
    ensemble: int = 256

    @property
    def sampling(self):
        return math.isfinite(self.B)

    @property
    def interpolating(self):
        return math.isfinite(self.C)

    def to_dict(self):
        d = dict(self.__dict__)
        for key in ("A", "B", "C"):
            if not math.isfinite(d[key]):
                d[key] = None
        d["sampling"] = self.sampling
        d["interpolating"] = self.interpolating
        d["A_inf_is_estimate"] = True
        return d


def frame_report(S: SectionSpace, points, grid=None, ensemble=256, seed=0):
    A, B = l2_constants(S, points)
    C = l2_interp_constant(S, points)
    rep = FrameReport(S.k, len(points), A, B, C, ensemble=ensemble)
    if grid is not None:
        rep.A_inf = linf_constant(S, points, grid, ensemble, seed)
        rep.C1 = l1_dual_constant(S, points, grid)
    return rep


# ---------------------------------------------------------------------------
# array families


@dataclass
class ArrayFamily:
    levels: dict = field(repr=False)
    provenance: dict

    @property
    def delta(self):
        """Largest delta with pairwise distances >= delta / sqrt(k) at every level."""
        vals = [min_separation(P) * math.sqrt(max(k, 1)) for k, P in self.levels.items() if len(P) > 1]
        return min(vals) if vals else math.inf

    def __getitem__(self, k):
        if k not in self.levels:
            raise MissingLevel(k)
        return self.levels[k]

    def to_csv(self):
        lines = ["# " + json.dumps(self.provenance, sort_keys=True)]
        n1 = next(iter(self.levels.values())).shape[1] if self.levels else 2
        lines.append(",".join(["k", "index"] + [f"{p}{i}" for i in range(n1) for p in ("re", "im")]))
        for k in sorted(self.levels):
            for j, p in enumerate(self.levels[k]):
                vals = [f"{v:.17g}" for z in p for v in (z.real, z.imag)]
                lines.append(",".join([str(k), str(j)] + vals))
        return "\n".join(lines) + "\n"


def fekete_family(w: Weight, ks, opts: SolveOptions | None = None, cache_dir=None):
    levels = {k: solve_level(w, k, opts, cache_dir).points for k in ks}
    return ArrayFamily(levels, {"kind": "fekete"})


def make_perturbed_fekete(w: Weight, eps, sign, ks, opts: SolveOptions | None = None, cache_dir=None):
    """Level k carries the Fekete configuration of level round((1 + sign eps) k)."""
    if sign not in (1, -1, "+", "-"):
        raise ValueError("sign must be +1 or -1")
    sgn = 1 if sign in (1, "+") else -1
    levels, source = {}, {}
    for k in ks:
        kk = round_level((1 + sgn * eps) * k)
        if kk < 0:
            raise MissingLevel(f"level {kk} for k={k}")
        levels[k] = solve_level(w, kk, opts, cache_dir).points
        source[k] = kk
    return ArrayFamily(levels, {"kind": "perturbed-fekete", "eps": eps, "sign": sgn, "source_levels": source,
                                "rounding": "half-to-even"})


def _kronecker(size, d):
    # generalized golden-ratio lattice in [0,1)^d
    g = 2.0
    for _ in range(40):
        g = (1 + g) ** (1.0 / (d + 1))
    alpha = (1.0 / g) ** np.arange(1, d + 1)
    return ((0.5 + np.arange(size)[:, None] * alpha[None]) % 1.0)


def _ma_spiral_n1(w: Weight, size, grid=512):
    """Fibonacci lattice pushed through the CDF of the normalized Monge-Ampere measure (n = 1)."""
    base = fibonacci_grid(size)
    if not w.is_perturbed:
        return base
    u = np.abs(base[:, 1]) ** 2
    v = (np.angle(base[:, 1]) / (2 * np.pi)) % 1.0
    s = (np.arange(grid) + 0.5) / grid
    th = 2 * np.pi * (np.arange(grid) + 0.5) / grid
    S_, T_ = np.meshgrid(s, th, indexing="ij")
    Z = np.stack([np.sqrt(1 - S_), np.sqrt(S_) * np.exp(1j * T_)], -1).reshape(-1, 2)
    rho = w.ma_ratio(Z).reshape(grid, grid)
    marg = rho.sum(axis=1)
    Fs = np.concatenate([[0], np.cumsum(marg)]) / marg.sum()
    se = np.linspace(0, 1, grid + 1)
    s_new = interp1d(Fs, se)(u)
    i = np.clip((s_new * grid).astype(int), 0, grid - 1)
    out = np.empty((size, 2), dtype=complex)
    te = np.linspace(0, 2 * np.pi, grid + 1)
    for row in np.unique(i):
        sel = i == row
        Ft = np.concatenate([[0], np.cumsum(rho[row])]) / rho[row].sum()
        t_new = interp1d(Ft, te)(v[sel])
        out[sel] = np.column_stack([np.sqrt(1 - s_new[sel]), np.sqrt(s_new[sel]) * np.exp(1j * t_new)])
    return out


def spiral_points(w: Weight, size):
    n = w.dimension
    if n == 1:
        return _ma_spiral_n1(w, size)
    if w.is_perturbed:
        raise NotImplementedError("spiral arrays on CP^2 are only provided for the Fubini-Study weight")
    u = _kronecker(size, 4)
    sig = np.sqrt(u[:, 0])
    s1, s2 = sig * u[:, 1], sig * (1 - u[:, 1])
    return np.column_stack([np.sqrt(np.clip(1 - s1 - s2, 0, None)), np.sqrt(s1) * np.exp(2j * np.pi * u[:, 2]),
                            np.sqrt(s2) * np.exp(2j * np.pi * u[:, 3])]).astype(complex)


def make_spiral(w: Weight, density_factor, ks):
    """ceil(factor * dim H^0) points per level, uniform for the Monge-Ampere measure."""
    levels = {k: spiral_points(w, int(math.ceil(density_factor * dimension(k, w.dimension)))) for k in ks}
    return ArrayFamily(levels, {"kind": "spiral", "density_factor": density_factor})


# ---------------------------------------------------------------------------
# densities


def ma_ball_mass(w: Weight, center, r, degree=40):
    """m_phi(B(center, r))."""
    r = min(r, math.pi / 2)
    if not w.is_perturbed:
        return ma_total_mass(w.dimension) * math.sin(r) ** (2 * w.dimension)
    from .geometry import cap_rule

    rule = cap_rule(center, r, degree, n=w.dimension)
    return float(integrate(w.ma_ratio(rule.points), rule))


def _ma_mass_table(w, centers, radii):
    out = np.empty((len(centers), len(radii)))
    for a, c in enumerate(centers):
        for b, r in enumerate(radii):
            out[a, b] = ma_ball_mass(w, c, r)
    return out


@dataclass
class DensityReport:
    R: list
    nu_minus: list
    nu_plus: list
    D_minus: float
    D_plus: float
    spread_minus: float
    spread_plus: float
    critical: float
    levels: list

    def to_dict(self):
        return dict(self.__dict__)


DEFAULT_RHO = tuple(np.round(np.geomspace(0.5, 48.0, 28), 6))


def density_report(w: Weight, family: ArrayFamily, R_grid=(1, 2, 4, 8, 12, 16), centers=None, rho=DEFAULT_RHO,
                   normalization="k"):
    """nu^-(R), nu^+(R) over balls of radius r >= R / sqrt(k) and the tail-median extrapolations.

    Counts are divided by k^n (``normalization='k'``) or by n! dim H^0
    (``'dimension'``); both tend to the same limit, the second without the
    O(1/k) offset that dominates at very small k.
    """
    n = w.dimension
    if normalization not in ("k", "dimension"):
        raise ValueError(normalization)
    if centers is None:
        centers = fibonacci_grid(400) if n == 1 else spiral_points(Weight.fubini_study(2), 200)
    crit = 1.0 / math.pi ** n
    ks = sorted(family.levels)
    R_grid = sorted(float(R) for R in R_grid)
    # the constraint r >= R / sqrt(k) includes its endpoint
    rho = sorted(set(float(x) for x in rho) | set(R_grid))
    lo = {R: math.inf for R in R_grid}
    hi = {R: -math.inf for R in R_grid}
    for k in ks:
        P = family.levels[k]
        sk = math.sqrt(max(k, 1))
        radii = np.unique(np.concatenate([[x / sk for x in rho if x / sk < math.pi / 2], [math.pi / 2]]))
        cen = np.concatenate([centers, P]) if len(P) else centers
        mass = _ma_mass_table(w, cen, radii)
        if len(P):
            D = pairwise_distance(cen, P)
            cnt = np.stack([np.sum(D < r, axis=1) for r in radii], axis=1)
        else:
            cnt = np.zeros_like(mass)
        scale = k ** n if normalization == "k" else math.factorial(n) * dimension(k, n)
        ratio = cnt / scale / mass
        for R in R_grid:
            sel = radii >= min(R / sk, math.pi / 2) - 1e-12
            lo[R] = min(lo[R], float(np.min(ratio[:, sel])))
            hi[R] = max(hi[R], float(np.max(ratio[:, sel])))
    nm = [lo[R] for R in R_grid]
    npl = [hi[R] for R in R_grid]
    top = max(1, int(math.ceil(len(R_grid) / 3)))
    tm, tp = nm[-top:], npl[-top:]
    return DensityReport(R_grid, nm, npl, float(np.median(tm)), float(np.median(tp)),
                         float(np.ptp(tm)), float(np.ptp(tp)), crit, ks)


def density_deficit_constants(report: DensityReport, Rs=(2, 4, 8)):
    """M(R) = R (critical - nu^-(R)) for the requested R, i.e. the smallest M with nu^- >= critical - M/R."""
    out = {}
    for R in Rs:
        i = report.R.index(float(R))
        out[float(R)] = R * (report.critical - report.nu_minus[i])
    return out


# ---------------------------------------------------------------------------
# constructive interpolation


@dataclass
class LocalizedInterpolant:
    k: int
    k1: int
    k2: int
    coefficients: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)
    ratio: float
    constant: float
    least_norm_C: float
    interpolation_error: float


def localized_sections(w: Weight, k, eps, points=None, opts=None, cache_dir=None):
    """ONB coefficients (level k) of the auxiliary sections Q_j built on F_{k1}, k1 = k - 2 k2."""
    k2 = round_level(eps * k / 2)
    k1 = k - 2 * k2
    if k2 < 0 or k1 < 0:
        raise LevelMismatch(f"eps={eps} incompatible with k={k}")
    if points is None:
        points = solve_level(w, k1, opts, cache_dir).points
    if len(points) != dimension(k1, w.dimension):
        raise LevelMismatch("points are not a configuration of level k1")
    S = build_section_space(w, k)
    S2 = build_section_space(w, k2)
    L = lagrange_sections(monomial_space(w, k1), points)
    rule = S.rule
    ell = L.values(rule.points)
    Pi = S2.kernel(rule.points, points) / S2.bergman_function(points)[None]
    Q = ell * Pi ** 2
    coef = integrate_gram(S.node_values, Q, rule)
    return S, coef, k1, k2, points


def localized_interpolant(w: Weight, k, eps, values=None, opts=None, cache_dir=None):
    """Interpolant sum v_j Q_j, its norm ratio and the worst-case constant k^n lambda_max(Gram(Q))."""
    S, coef, k1, k2, pts = localized_sections(w, k, eps, opts=opts, cache_dir=cache_dir)
    N1 = coef.shape[1]
    if values is None:
        values = np.zeros(N1, dtype=complex)
        values[0] = 1.0
    values = np.asarray(values, dtype=complex)
    G = np.conj(coef.T) @ coef
    c = coef @ values
    err = float(np.max(np.abs(S.values(pts) @ c - values)))
    kn = k ** w.dimension
    ratio = float(np.real(np.vdot(c, c)) * kn / np.sum(np.abs(values) ** 2))
    const = float(kn * np.linalg.eigvalsh(G)[-1])
    C = l2_interp_constant(S, pts)
    return LocalizedInterpolant(k, k1, k2, c, G, ratio, const, C, err)


# ---------------------------------------------------------------------------
# threshold experiments


def simultaneity_probe(w: Weight, ks, opts=None, cache_dir=None):
    """m_k = max(B_k / A_k, C_k / A_k) at exact-level Fekete configurations, with log-log slope."""
    m = []
    for k in ks:
        S = build_section_space(w, k)
        P = solve_level(w, k, opts, cache_dir).points
        A, B = l2_constants(S, P)
        C = l2_interp_constant(S, P)
        m.append(max(B / A, C / A))
    slope = float(np.polyfit(np.log(ks), np.log(m), 1)[0])
    return {"k": list(ks), "m": m, "slope": slope,
            "increasing": bool(all(b > a for a, b in zip(m, m[1:])))}
