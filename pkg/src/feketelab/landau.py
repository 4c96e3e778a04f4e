"""Concentration operators on balls, their spectra and Landau-type eigenvalue counts."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bergman import SectionSpace, offdiag_integral, required_degree
from .geometry import BallRegion, integrate, integrate_gram, normalize, rotation_to

DEFAULT_GAMMAS = (0.1, 0.5, 0.9)


@dataclass
class ConcentrationOperator:
    """Matrix of int_Omega <e_j, e_i> dV in an orthonormal basis."""

    space: SectionSpace
    region: BallRegion | None
    matrix: np.ndarray = field(repr=False)
    asymmetry: float = 0.0


@dataclass
class SpectralReport:
    k: int
    center: list
    radius: float
    eigenvalues: np.ndarray = field(repr=False)
    trace: float
    hs2: float
    counts: dict

    def to_dict(self):
        return {
            "k": self.k,
            "center": self.center,
            "radius": self.radius,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "trace": self.trace,
            "hs2": self.hs2,
            "counts": {str(g): c for g, c in self.counts.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _cap_degree(S):
    return required_degree(S.weight, S.k)


def build_concentration(S: SectionSpace, region: BallRegion | None, degree=None) -> ConcentrationOperator:
    """Concentration operator of a ball; ``None`` is the empty set."""
    N = S.dim
    if region is None or region.radius <= 0:
        return ConcentrationOperator(S, region, np.zeros((N, N), dtype=complex))
    # the sigma-radial rule is exact here; n = 2 needs no extra margin
    rule = region.rule(degree or _cap_degree(S), margin=2 if S.n == 1 else 1)
    E = S.values(rule.points)
    T = integrate_gram(E, E, rule)
    asym = float(np.max(np.abs(T - np.conj(T.T))))
    T = 0.5 * (T + np.conj(T.T))
    return ConcentrationOperator(S, region, T, asym)


def count_above(eigenvalues, gamma):
    """Number of eigenvalues strictly greater than gamma."""
    return int(np.sum(np.asarray(eigenvalues) > gamma))


def spectral_report(T: ConcentrationOperator, gammas=DEFAULT_GAMMAS) -> SpectralReport:
    ev = np.sort(np.linalg.eigvalsh(T.matrix))[::-1]
    reg = T.region
    center = [[float(z.real), float(z.imag)] for z in reg.center] if reg is not None else []
    radius = float(reg.radius) if reg is not None else 0.0
    counts = {float(g): count_above(ev, g) for g in gammas}
    return SpectralReport(T.space.k, center, radius, ev, float(np.sum(ev)), float(np.sum(ev ** 2)), counts)


# ---------------------------------------------------------------------------
# kernel-side integrals (computed independently of the operator)


def _alt_rule(region: BallRegion, degree):
    # distance-radial nodes: a different rule from the one used for T
    p = int(math.ceil(degree / 2))
    nodes = (p + 12, 2 * p + 6) if region.n == 1 else (p + 6, p + 3)
    return region.rule(degree, radial="dist", nodes=nodes)


def bergman_trace_integral(S: SectionSpace, region: BallRegion):
    """int_Omega Pi(x, x) dV."""
    rule = _alt_rule(region, _cap_degree(S))
    return float(integrate(S.bergman_function(rule.points), rule))


def hs_integral(S: SectionSpace, region: BallRegion):
    """int int_{Omega x Omega} |Pi(x, y)|^2 by a product rule.

    The product-rule sum over node pairs equals the squared Frobenius norm of
    the one-rule Gram matrix, which is far cheaper to form.
    """
    rule = _alt_rule(region, _cap_degree(S))
    E = S.values(rule.points)
    return float(np.sum(np.abs(integrate_gram(E, E, rule)) ** 2))


def offdiag_mass(S: SectionSpace, region: BallRegion):
    """int int_{Omega x Omega^c} |Pi(x, y)|^2."""
    if region.radius >= math.pi / 2:
        return 0.0
    return offdiag_integral(S, region, power=2)


def offdiag_mass_via_trace(S: SectionSpace, region: BallRegion):
    return bergman_trace_integral(S, region) - hs_integral(S, region)


def count_bounds(S: SectionSpace, region: BallRegion, gamma, mass=None):
    """Lower and upper bounds for n(Omega, gamma) from the trace and the off-diagonal mass."""
    tr = bergman_trace_integral(S, region)
    m = offdiag_mass(S, region) if mass is None else mass
    return tr - m / (1.0 - gamma), tr + m / gamma


# ---------------------------------------------------------------------------
# counts against arrays


def _centered_monomials(S: SectionSpace, x, Z):
    """Unitarized scaled monomials in coordinates centred at x (U e_0 = x); they span H^0."""
    Zr = np.atleast_2d(Z) @ np.conj(rotation_to(x))
    M = np.prod(Zr[:, None, :] ** S.exps[None], axis=-1) * S.scale[None]
    if S.weight.is_perturbed:
        M = M * np.exp(-0.5 * S.k * S.weight.amplitude * S.weight.u(Z))[:, None]
    return M


def point_evaluation_constant(S: SectionSpace, centers, rho):
    """k^{-n} sup_s |s(x)|^2 / int_{B(x, rho)} |s|^2, maximized over the given centers.

    The local Gram matrix is formed in monomials centred at x, where it is
    diagonal for FS and diagonally dominant otherwise; after Jacobi scaling
    the solve is well conditioned even for tiny balls.
    """
    best = 0.0
    rho = min(rho, math.pi / 2)
    for x in np.atleast_2d(centers):
        x = normalize(x)
        rule = BallRegion(x, rho).rule(_cap_degree(S), margin=2 if S.n == 1 else 1)
        M = _centered_monomials(S, x, rule.points)
        G = integrate_gram(M, M, rule)
        d = np.sqrt(np.real(np.diag(G)))
        Gs = G / np.outer(d, d)
        e = _centered_monomials(S, x, x[None])[0] / d
        c = np.linalg.solve(0.5 * (Gs + np.conj(Gs.T)), e)
        best = max(best, float(np.real(np.vdot(e, c))))
    return best / S.k ** S.n


@dataclass
class CountComparison:
    kind: str
    k: int
    center: list
    r: float
    delta: float
    gamma: float
    array_count: int
    eigen_count: int
    holds: bool


def landau_counts_vs_array(S: SectionSpace, points, region: BallRegion, kind, constant, delta,
                           K=None, gamma=None):
    """Compare #(Lambda within the enlarged/shrunk ball) with n_k(Omega, gamma).

    ``kind`` is ``'sampling'`` (constant = B, gamma = 1 - 1/(K B)) or
    ``'interpolation'`` (constant = C, gamma = 1/(K C)). Radii are in units
    of 1/sqrt(k): ``region.radius = r / sqrt(k)``.
    """
    k = S.k
    pts = normalize(np.atleast_2d(points))
    sk = math.sqrt(k)
    r = region.radius * sk
    if K is None:
        K = point_evaluation_constant(S, pts[:: max(1, len(pts) // 6)], 0.5 * delta / sk)
    if gamma is None:
        if kind == "sampling":
            gamma = 1.0 - 1.0 / (K * constant)
        elif kind == "interpolation":
            gamma = 1.0 / (K * constant)
        else:
            raise ValueError(kind)
    gamma = float(min(max(gamma, 0.0), 1.0))
    T = build_concentration(S, region)
    ev = np.linalg.eigvalsh(T.matrix)
    nk = count_above(ev, gamma)
    if kind == "sampling":
        big = BallRegion(region.center, min((r + delta) / sk, math.pi / 2))
        cnt = int(np.sum(big.contains(pts)))
        holds = cnt >= nk
    else:
        rr = max(r - delta, 0.0) / sk
        cnt = int(np.sum(BallRegion(region.center, rr).contains(pts))) if rr > 0 else 0
        holds = cnt <= nk
    center = [[float(z.real), float(z.imag)] for z in region.center]
    return CountComparison(kind, k, center, r, float(delta), gamma, cnt, nk, bool(holds))
