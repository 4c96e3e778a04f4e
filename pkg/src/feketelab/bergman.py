"""Section spaces H^0(O(k)) with weighted inner product and their Bergman kernels.

Sections are homogeneous polynomials of degree k. A section's *unitarized*
value at a unit vector Z is ``P(Z) * exp(-k t u(Z) / 2)``; its modulus is the
pointwise norm |s(x)| and inner products of two values taken at the same Z do
not depend on the phase of Z.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from .geometry import (
    BallRegion,
    QuadratureRule,
    Weight,
    fs_distance,
    global_rule,
    integrate,
    integrate_gram,
    normalize,
    rotation_to,
    sample_uniform,
    shell_rule,
)


class GramNotPD(np.linalg.LinAlgError):
    pass


class FitDegenerate(ValueError):
    pass


class NormalizationFailed(ValueError):
    pass


def exponents(k, n=1):
    """Exponent vectors alpha in N^{n+1} with |alpha| = k, in a fixed order."""
    if n == 1:
        return np.array([(k - j, j) for j in range(k + 1)], dtype=int)
    out = []
    for a1 in range(k + 1):
        for a2 in range(k + 1 - a1):
            out.append((k - a1 - a2, a1, a2))
    return np.array(out, dtype=int)


def dimension(k, n=1):
    return math.comb(k + n, n)


def required_degree(w: Weight, k):
    """Bihomogeneous degree a rule must integrate for Gram assembly at level k."""
    if not w.is_perturbed:
        return 2 * k
    # e^{-k t u} is not polynomial: up to a constant factor it is a power
    # series in u whose terms drop below 1e-16 after about e X + 16 terms,
    # X = k |t| (half range of u); each power of u adds bidegree (m, m)
    X = k * abs(w.amplitude) * w.u_half_range()
    return 2 * k + 2 * w.m * int(math.ceil(math.e * X + 16))


@dataclass
class SectionSpace:
    """Orthonormalized basis of H^0(O(k)) for a weight.

    Monomials are stored with the multinomial scaling ``sqrt(k!/alpha!)`` so
    the Fubini-Study Gram matrix is a multiple of the identity.
    """

    weight: Weight
    k: int
    rule: QuadratureRule
    exps: np.ndarray = field(repr=False)
    scale: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)
    chol: np.ndarray = field(repr=False)
    coef: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.weight.dimension

    @property
    def dim(self):
        return len(self.exps)

    def weighted_monomials(self, Z):
        """Unitarized values of the scaled monomials, shape (P, N)."""
        Z = np.atleast_2d(Z)
        M = np.prod(Z[:, None, :] ** self.exps[None], axis=-1) * self.scale[None]
        if self.weight.is_perturbed:
            M = M * np.exp(-0.5 * self.k * self.weight.amplitude * self.weight.u(Z))[:, None]
        return M

    def values(self, Z):
        """Unitarized values of the orthonormal basis at points Z, shape (P, N)."""
        M = self.weighted_monomials(Z)
        return M if self.coef is None else M @ self.coef

    def holomorphic_derivatives(self, Z):
        """Values and d/dZ_a of the polynomial parts, both times the unit-frame factor.

        Returns (E, D) with E of shape (P, N) and D of shape (P, n+1, N); the
        exponential weight factor is held fixed when differentiating.
        """
        Z = np.atleast_2d(Z)
        P, n1 = Z.shape
        fac = self.scale[None]
        if self.weight.is_perturbed:
            fac = fac * np.exp(-0.5 * self.k * self.weight.amplitude * self.weight.u(Z))[:, None]
        E = np.prod(Z[:, None, :] ** self.exps[None], axis=-1) * fac
        D = np.empty((P, n1, self.dim), dtype=complex)
        for a in range(n1):
            e = self.exps.copy()
            e[:, a] -= 1
            mono = np.prod(Z[:, None, :] ** np.maximum(e, 0)[None], axis=-1)
            D[:, a, :] = mono * self.exps[None, :, a] * fac
        if self.coef is not None:
            E = E @ self.coef
            D = D @ self.coef
        return E, D

    @cached_property
    def node_values(self):
        return self.values(self.rule.points)

    def kernel(self, X, Y):
        """Unitarized Bergman kernel matrix Pi(x_i, y_j) = sum_j e_j(x) conj(e_j(y))."""
        return self.values(X) @ np.conj(self.values(Y)).T

    def bergman_function(self, Z):
        return np.sum(np.abs(self.values(Z)) ** 2, axis=-1)

    def monomial_gram(self):
        """Gram matrix of the plain monomials Z^alpha."""
        d = 1.0 / self.scale
        return d[:, None] * self.gram * d[None, :]

    @property
    def orthonormal(self):
        return self.coef is not None

    def condition_number(self):
        return float(np.linalg.cond(self.gram)) if self.gram is not None else float("nan")

    def to_dict(self):
        return {
            "degree": self.k,
            "dimension": self.dim,
            "n": self.n,
            "gram_condition_number": self.condition_number(),
            "quadrature_degree": self.rule.degree if self.rule is not None else None,
            "quadrature_nodes": len(self.rule) if self.rule is not None else 0,
            "weight": self.weight.to_dict(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def build_section_space(w: Weight, k: int, rule: QuadratureRule | None = None, retry=True) -> SectionSpace:
    n = w.dimension
    need = required_degree(w, k)
    if rule is None:
        rule = global_rule(need, n=n)
    elif rule.degree < need:
        from .geometry import DegreeTooLow

        raise DegreeTooLow(f"rule degree {rule.degree} < {need} needed at level {k}")
    exps = exponents(k, n)
    logscale = 0.5 * (gammaln(k + 1) - np.sum(gammaln(exps + 1), axis=1))
    scale = np.exp(logscale)
    S = SectionSpace(w, k, rule, exps, scale, None, None, None)
    M = S.weighted_monomials(rule.points)
    G = integrate_gram(M, M, rule)
    G = 0.5 * (G + np.conj(G.T))
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        if retry:
            return build_section_space(w, k, global_rule(2 * rule.degree, n=n), retry=False)
        raise GramNotPD(f"Gram matrix not positive definite at k={k}")
    S.gram = G
    S.chol = L
    S.coef = np.linalg.inv(np.conj(L.T))
    return S


def monomial_space(w: Weight, k: int) -> SectionSpace:
    """Basis of scaled monomials without orthonormalization (no quadrature needed).

    Enough for anything that only depends on the span, e.g. Fekete points and
    Lagrange sections, which are basis independent.
    """
    exps = exponents(k, w.dimension)
    scale = np.exp(0.5 * (gammaln(k + 1) - np.sum(gammaln(exps + 1), axis=1)))
    return SectionSpace(w, k, None, exps, scale, None, None, None)


def kernel_slice_csv(S: SectionSpace, X, Y):
    """CSV text with columns x_index, y_index, |Pi|."""
    K = np.abs(S.kernel(X, Y))
    lines = ["x_index,y_index,abs_kernel"]
    for i in range(K.shape[0]):
        for j in range(K.shape[1]):
            lines.append(f"{i},{j},{K[i, j]:.17g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# identities


def diagonal_identity_error(S: SectionSpace, xs):
    """max_x | int |Pi(x, y)|^2 dV(y) - Pi(x, x) | on the build rule (exact for these integrands)."""
    xs = np.atleast_2d(xs)
    K = S.node_values @ np.conj(S.values(xs)).T
    lhs = S.rule.weights @ np.abs(K) ** 2
    return float(np.max(np.abs(lhs - S.bergman_function(xs))))


def reproducing_error(S: SectionSpace, xs):
    """max | int <e_i(y), Pi(y, x)> dV(y) - e_i(x) | over basis elements and points."""
    xs = np.atleast_2d(xs)
    Ex = S.values(xs)
    K = S.node_values @ np.conj(Ex).T
    R = integrate_gram(K, S.node_values, S.rule)
    return float(np.max(np.abs(R - Ex)))


# ---------------------------------------------------------------------------
# diagnostics


def points_at_distance(x, d, rng):
    """Random points y with d(x, y) = d (one per entry of d)."""
    x = normalize(x)
    d = np.atleast_1d(d)
    g = rng.standard_normal((len(d), x.shape[0])) + 1j * rng.standard_normal((len(d), x.shape[0]))
    v = g - (g @ np.conj(x))[:, None] * x[None]
    v = normalize(v)
    return np.cos(d)[:, None] * x[None] + np.sin(d)[:, None] * v


@dataclass
class DecayFit:
    c: float
    intercept: float
    residual: float
    pairs: int


def decay_profile(S: SectionSpace, pairs=400, u_range=(0.5, 4.0), seed=0, min_spread=0.2):
    """Fit log(|Pi_k(x,y)| k^{-n}) ~ a - c sqrt(k) d(x,y) over random pairs."""
    if S.k < 8:
        raise ValueError("decay profile needs k >= 8")
    rng = np.random.default_rng(seed)
    xs = sample_uniform(S.n, pairs, rng)
    u = rng.uniform(*u_range, size=pairs)
    if np.max(u) < min_spread or np.ptp(u) < 1e-9:
        raise FitDegenerate("all sampled pairs are near-diagonal")
    d = u / math.sqrt(S.k)
    ys = np.concatenate([points_at_distance(xs[i], d[i:i + 1], rng) for i in range(pairs)])
    K = np.abs(np.sum(S.values(xs) * np.conj(S.values(ys)), axis=1))
    y = np.log(K / S.k ** S.n)
    A = np.column_stack([np.ones(pairs), -u])
    sol, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ sol - y) ** 2)))
    return DecayFit(float(sol[1]), float(sol[0]), resid, pairs)


def _abs_kernel_integral(S, x, rule, weight_fn=None):
    vals = np.abs(S.values(rule.points) @ np.conj(S.values(x[None])).T)[:, 0]
    if weight_fn is not None:
        vals = vals * weight_fn(rule.points)
    return float(integrate(vals, rule))


@dataclass
class L1Bounds:
    sup_l1: float
    offdiag_l1: dict
    sup_moment: float


def l1_kernel_bounds(S: SectionSpace, centers=None, radii=(1.0, 2.0, 4.0), ball_center=None, seed=0):
    """The three L^1 kernel quantities.

    Returns sup_x int |Pi(x,y)| dV(y), k^n int_{Omega x Omega^c} |Pi| for
    Omega = B(z, R/sqrt k) (keyed by R) and sup_x int d(x,y)|Pi(x,y)| dV(y).
    """
    rng = np.random.default_rng(seed)
    if centers is None:
        centers = sample_uniform(S.n, 12, rng)
    k = S.k
    deg = 2 * k + 8
    sup1 = 0.0
    supd = 0.0
    for x in centers:
        rule = shell_rule(x, 0.0, math.pi / 2, deg, n=S.n, radial="dist")
        vals = np.abs(S.values(rule.points) @ np.conj(S.values(x[None])).T)[:, 0]
        sup1 = max(sup1, float(integrate(vals, rule)))
        supd = max(supd, float(integrate(vals * fs_distance(rule.points, x[None]), rule)))
    if ball_center is None:
        ball_center = centers[0]
    off = {}
    for R in radii:
        r = min(R / math.sqrt(k), math.pi / 2)
        off[float(R)] = k ** S.n * offdiag_integral(S, BallRegion(ball_center, r), power=1)
    return L1Bounds(sup1, off, supd)


def offdiag_integral(S: SectionSpace, ball: BallRegion, power=2, nodes_in=None, nodes_out=None, chunk=2048):
    """int_{Omega x Omega^c} |Pi(x,y)|^power by product quadrature.

    For power 2 the product sum factors through the Gram matrices of the two
    rules: sum_ij G_in[i, j] conj(G_out[i, j]).
    """
    if ball.radius >= math.pi / 2:
        return 0.0
    k = S.k
    if S.n == 1:
        nin = nodes_in or (max(16, k // 2 + 8), max(32, k + 8))
        nout = nodes_out or (max(32, k + 8), max(32, 2 * k + 4))
    else:
        nin = nodes_in or (k // 2 + 6, k + 4)
        nout = nodes_out or (k + 6, k + 4)
    rin = ball.rule(2 * k, nodes=nin)
    rout = ball.complement_rule(2 * k, radial="dist", nodes=nout)
    Ein = S.values(rin.points)
    Eout = S.values(rout.points)
    if power == 2:
        Gin = integrate_gram(Ein, Ein, rin)
        Gout = integrate_gram(Eout, Eout, rout)
        return float(np.real(np.sum(Gin * np.conj(Gout))))
    total = 0.0
    for s in range(0, len(rin), chunk):
        K = np.abs(Ein[s:s + chunk] @ np.conj(Eout).T) ** power
        total += float(rin.weights[s:s + chunk] @ K @ rout.weights)
    return total


# ---------------------------------------------------------------------------
# normalized coordinates and Bargmann-Fock comparison


def _wirtinger_derivs(f, n, h=1e-3):
    """Holomorphic first/second derivatives and complex Hessian of f at 0 (4th order FD)."""
    def shift(vec):
        return f(vec)

    e = np.eye(n)
    steps = [(-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12)]

    def d_real(vec_dir):
        return sum(c * shift(s * h * vec_dir) for s, c in steps) / h

    grad = np.zeros(n, dtype=complex)
    for j in range(n):
        dx = d_real(e[j].astype(complex))
        dy = d_real(1j * e[j])
        grad[j] = 0.5 * (dx - 1j * dy)

    def second(u, v):
        # d^2 f / ds dt along real directions u, v at 0
        tot = 0.0
        for s1, c1 in steps:
            for s2, c2 in steps:
                tot += c1 * c2 * shift(s1 * h * u + s2 * h * v)
        return tot / h ** 2

    hol = np.zeros((n, n), dtype=complex)
    herm = np.zeros((n, n), dtype=complex)
    for j in range(n):
        for l in range(n):
            xj, yj = e[j].astype(complex), 1j * e[j]
            xl, yl = e[l].astype(complex), 1j * e[l]
            fxx, fyy = second(xj, xl), second(yj, yl)
            fxy, fyx = second(xj, yl), second(yj, xl)
            hol[j, l] = 0.25 * (fxx - fyy - 1j * (fxy + fyx))
            herm[j, l] = 0.25 * (fxx + fyy + 1j * (fxy - fyx))
    return grad, hol, herm


@dataclass
class NormalizedChart:
    """Chart w -> U (1, w) centered at x0 with frame gauge g and linear map z = A w."""

    U: np.ndarray
    phi0: float
    a: np.ndarray
    b: np.ndarray
    A: np.ndarray
    vol0: float

    def point(self, z):
        """Unit homogeneous vectors for normalized coordinates z (P, n)."""
        z = np.atleast_2d(z)
        w = np.linalg.solve(self.A, z.T).T
        Y = np.column_stack([np.ones(len(w)), w])
        return normalize(Y @ self.U.T), w

    def gauge_phase(self, w):
        g = self.a @ w.T + 0.5 * np.einsum("pj,jl,pl->p", w, self.b, w)
        return np.imag(g)


def normalized_chart(w: Weight, x0) -> NormalizedChart:
    n = w.dimension
    U = rotation_to(x0)

    def phi(vec):
        vec = np.asarray(vec, dtype=complex)
        Y = normalize(np.concatenate([[1.0], vec]))[None] @ U.T
        return float(np.log1p(np.sum(np.abs(vec) ** 2)) + w.amplitude * w.u(Y)[0])

    phi0 = phi(np.zeros(n))
    a, b, H = _wirtinger_derivs(phi, n)
    H = 0.5 * (H + np.conj(H.T))
    # |z|^2 = sum_jl H_jl w_j conj(w_l) = w^* conj(H) w
    ev, V = np.linalg.eigh(np.conj(H))
    if np.min(ev) <= 0:
        raise NormalizationFailed("curvature is not positive definite at x0")
    A = (V * np.sqrt(ev)) @ np.conj(V.T)
    # dV density in w coordinates at 0 is 2^n; z = A w rescales by det(H)
    vol0 = 2.0 ** n / float(np.real(np.linalg.det(H)))
    return NormalizedChart(U, phi0, a, b, A, vol0)


def fock_kernel(zeta, xi, n=1):
    """Normalized Bargmann-Fock kernel pi^{-n} exp(zeta xi* - |zeta|^2/2 - |xi|^2/2)."""
    zeta = np.atleast_2d(zeta)
    xi = np.atleast_2d(xi)
    inner = zeta @ np.conj(xi).T
    nz = np.sum(np.abs(zeta) ** 2, axis=1)
    nx = np.sum(np.abs(xi) ** 2, axis=1)
    return np.exp(inner - 0.5 * nz[:, None] - 0.5 * nx[None, :]) / math.pi ** n


def rescaled_kernel(S: SectionSpace, chart: NormalizedChart, zeta):
    """k^{-n} Pi_k(zeta/sqrt k, xi/sqrt k) in the normalized frame, times the volume factor."""
    k, n = S.k, S.n
    zeta = np.atleast_2d(zeta)
    Z, w = chart.point(zeta / math.sqrt(k))
    # unitarized values at U(1,w)/|.| equal f(w) e^{-k phi(w)/2}; the gauge
    # e^{-k g} turns them into values in the normalized frame
    E = S.values(Z) * np.exp(-1j * k * chart.gauge_phase(w))[:, None]
    K = E @ np.conj(E).T
    return K * chart.vol0 / k ** n


def disc_grid(W, n=1, rings=6, per_ring=12):
    pts = [np.zeros(n, dtype=complex)]
    for r in np.linspace(W / rings, W, rings):
        for t in 2 * np.pi * np.arange(per_ring) / per_ring:
            v = np.zeros(n, dtype=complex)
            v[0] = r * np.exp(1j * t)
            pts.append(v)
            if n == 2:
                u = np.zeros(n, dtype=complex)
                u[1] = r * np.exp(1j * t)
                pts.append(u)
                pts.append(np.array([r * np.exp(1j * t), r * np.exp(-1j * t)]) / math.sqrt(2))
    return np.array(pts)


def rescaled_kernel_vs_fock(S: SectionSpace, x0, W=2.0, grid=None):
    """sup over |zeta|, |xi| <= W of |rescaled kernel - Fock kernel|."""
    chart = normalized_chart(S.weight, x0)
    zeta = disc_grid(W, S.n) if grid is None else grid
    K = rescaled_kernel(S, chart, zeta)
    F = fock_kernel(zeta, zeta, S.n)
    return float(np.max(np.abs(K - F)))


def tian_error(S: SectionSpace, grid):
    """sup_x | k^{-n} B_k(x) - pi^{-n} dm_phi/dV(x) | over the grid."""
    B = S.bergman_function(grid)
    ma = S.weight.ma_ratio(grid)
    return float(np.max(np.abs(B / S.k ** S.n - ma / math.pi ** S.n)))
