"""Model manifold CP^n (n = 1, 2): points, weights, curvature and quadrature.

Points are unit vectors in C^{n+1}; arrays of points have shape ``(P, n+1)``.
The reference volume dV is the Fubini-Study volume ``omega^n / n!`` with
``omega = i ddbar log(1 + |z|^2)``, so that ``Vol(CP^n) = (2 pi)^n / n!``.
In the cap coordinates ``s_i = |Z_i|^2, theta_i = arg Z_i`` the volume is
``ds_1 ... ds_n dtheta_1 ... dtheta_n`` on simplex x torus, which is what
makes the product rules below exact on polynomial integrands.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

CHART_SWITCH = 1.5


class ChartOverflow(ValueError):
    pass


class DegreeTooLow(ValueError):
    pass


class InadmissibleWeight(ValueError):
    pass


# ---------------------------------------------------------------------------
# points


def normalize(Z):
    Z = np.asarray(Z, dtype=complex)
    return Z / np.linalg.norm(Z, axis=-1, keepdims=True)


@dataclass(frozen=True)
class ProjPoint:
    """A point of CP^n stored as a unit homogeneous vector."""

    homogeneous: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "homogeneous", normalize(self.homogeneous))

    @property
    def n(self):
        return self.homogeneous.shape[-1] - 1

    def __eq__(self, other):
        if not isinstance(other, ProjPoint):
            return NotImplemented
        return proj_equal(self.homogeneous, other.homogeneous)

    def __hash__(self):
        return id(self)


def proj_equal(x, y, tol=1e-12):
    return bool(abs(abs(np.vdot(x, y)) - 1.0) <= tol)


def fs_distance(x, y):
    """Fubini-Study distance arccos |<x, y>| (broadcasts over leading axes)."""
    ip = np.abs(np.sum(np.asarray(x) * np.conj(np.asarray(y)), axis=-1))
    return np.arccos(np.clip(ip, 0.0, 1.0))


def pairwise_distance(X, Y):
    """Distance matrix between point arrays X (P, n+1) and Y (Q, n+1)."""
    G = np.abs(np.asarray(X) @ np.conj(np.asarray(Y)).T)
    return np.arccos(np.clip(G, 0.0, 1.0))


def diameter(n=1):
    return math.pi / 2


def basis_point(i, n=1):
    e = np.zeros(n + 1, dtype=complex)
    e[i] = 1.0
    return e


def rotation_to(center):
    """Unitary U with U e_0 = center."""
    c = normalize(center)
    n1 = c.shape[0]
    M = np.eye(n1, dtype=complex)
    j = int(np.argmax(np.abs(c)))
    M = np.column_stack([c] + [M[:, i] for i in range(n1) if i != j])
    Q, R = np.linalg.qr(M)
    ph = R[0, 0] / abs(R[0, 0])
    Q[:, 0] *= ph
    return Q


def chart_of(Z):
    """Index of the standard affine chart used for each point (largest coordinate)."""
    return np.argmax(np.abs(np.atleast_2d(Z)), axis=-1)


def to_chart(Z, chart):
    Z = np.atleast_2d(Z)
    if np.any(np.abs(Z[:, chart]) == 0):
        raise ChartOverflow("point at infinity of the requested chart")
    others = [i for i in range(Z.shape[1]) if i != chart]
    z = Z[:, others] / Z[:, [chart]]
    return z


def from_chart(z, chart):
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    P, n = z.shape
    Z = np.empty((P, n + 1), dtype=complex)
    others = [i for i in range(n + 1) if i != chart]
    Z[:, chart] = 1.0
    Z[:, others] = z
    return normalize(Z)


def sample_uniform(n, size, rng):
    """Points distributed according to dV."""
    g = rng.standard_normal((size, n + 1)) + 1j * rng.standard_normal((size, n + 1))
    return normalize(g)


def fibonacci_grid(size):
    """Equal-area spiral on CP^1 = S^2 (uniform in s = |Z_1|^2)."""
    i = np.arange(size)
    s = (i + 0.5) / size
    golden = (1 + 5 ** 0.5) / 2
    theta = 2 * np.pi * ((i / golden) % 1.0)
    return np.column_stack([np.sqrt(1 - s), np.sqrt(s) * np.exp(1j * theta)]).astype(complex)


def dense_grid(n, size=40000):
    """Deterministic grid of at least ``size`` points."""
    if n == 1:
        return fibonacci_grid(size)
    m = int(math.ceil(size ** 0.25))
    a = (np.arange(m) + 0.5) / m
    th = 2 * np.pi * np.arange(m) / m
    S, B, T1, T2 = (x.ravel() for x in np.meshgrid(a, a, th, th, indexing="ij"))
    # sqrt map spreads the simplex coordinates evenly
    sg = np.sqrt(S)
    s1, s2 = sg * B, sg * (1 - B)
    s0 = np.clip(1 - s1 - s2, 0.0, None)
    return np.column_stack([np.sqrt(s0), np.sqrt(s1) * np.exp(1j * T1), np.sqrt(s2) * np.exp(1j * T2)]).astype(complex)


# ---------------------------------------------------------------------------
# weights


EXAMPLE_COEFFICIENTS = ((1, 1, 0.3, 0.0), (2, 0, 0.1, 0.05), (0, 2, 0.1, -0.05), (2, 1, 0.05, 0.02), (1, 2, 0.05, -0.02))


@dataclass
class Weight:
    """Fubini-Study metric plus a smooth perturbation ``t * u``.

    ``u = sum c_{pq} z^p zbar^q / (1 + |z|^2)^m`` in the affine chart around
    ``[1:0(:0)]``; chart exponents satisfy ``|p|, |q| <= m``. Internally the
    terms are homogenized to bidegree (m, m) so ``u`` can be evaluated at unit
    homogeneous vectors without choosing a chart.
    """

    dimension: int = 1
    m: int = 0
    amplitude: float = 0.0
    coefficients: list = field(default_factory=list)
    check: bool = True

    def __post_init__(self):
        n = self.dimension
        if n not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        terms = {}
        for entry in self.coefficients:
            p, q, re, im = entry
            p = tuple(np.atleast_1d(p).astype(int).tolist())
            q = tuple(np.atleast_1d(q).astype(int).tolist())
            if len(p) != n or len(q) != n:
                raise ValueError(f"exponent {p}, {q} does not match dimension {n}")
            if sum(p) > self.m or sum(q) > self.m or min(p + q) < 0:
                raise ValueError(f"exponents {p}, {q} exceed m = {self.m}")
            terms[(p, q)] = terms.get((p, q), 0) + complex(re, im)
        for (p, q), c in terms.items():
            cc = terms.get((q, p))
            if cc is None or abs(cc - np.conj(c)) > 1e-14:
                raise InadmissibleWeight(f"coefficients not Hermitian at {p}, {q}")
        self._terms = terms
        if terms:
            self._alpha = np.array([(self.m - sum(p),) + p for (p, q) in terms], dtype=int)
            self._beta = np.array([(self.m - sum(q),) + q for (p, q) in terms], dtype=int)
            self._c = np.array(list(terms.values()), dtype=complex)
        else:
            self._alpha = np.zeros((0, n + 1), dtype=int)
            self._beta = np.zeros((0, n + 1), dtype=int)
            self._c = np.zeros(0, dtype=complex)
        if self.check and self.is_perturbed:
            margin = positivity_margin(self)
            if not margin > 0:
                raise InadmissibleWeight(f"curvature not positive (margin {margin:.3g})")

    @property
    def n(self):
        return self.dimension

    @property
    def is_perturbed(self):
        return self.amplitude != 0 and len(self._c) > 0

    @classmethod
    def fubini_study(cls, n=1):
        return cls(dimension=n)

    @classmethod
    def example_perturbed(cls, amplitude=1.0):
        """Fixed bidegree-(2, 2) perturbation of FS on CP^1 used by the experiments."""
        return cls(1, 2, amplitude, [list(c) for c in EXAMPLE_COEFFICIENTS])

    def to_dict(self):
        return {
            "dimension": self.dimension,
            "m": self.m,
            "amplitude": self.amplitude,
            "coefficients": [
                [list(p) if self.dimension > 1 else p[0], list(q) if self.dimension > 1 else q[0], c.real, c.imag]
                for (p, q), c in sorted(self._terms.items())
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d, check=True):
        unknown = set(d) - {"dimension", "m", "amplitude", "coefficients"}
        if unknown:
            raise ValueError(f"unknown weight keys {sorted(unknown)}")
        return cls(
            dimension=int(d.get("dimension", 1)),
            m=int(d.get("m", 0)),
            amplitude=float(d.get("amplitude", 0.0)),
            coefficients=[list(e) for e in d.get("coefficients", [])],
            check=check,
        )

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))

    def with_amplitude(self, t, check=True):
        d = self.to_dict()
        d["amplitude"] = t
        return Weight.from_dict(d, check=check)

    def u(self, Z):
        """Perturbation u at unit homogeneous vectors (real array)."""
        Z = np.atleast_2d(Z)
        if not len(self._c):
            return np.zeros(Z.shape[0])
        Za = np.prod(Z[:, None, :] ** self._alpha[None], axis=-1)
        Zb = np.prod(np.conj(Z)[:, None, :] ** self._beta[None], axis=-1)
        norm = np.sum(np.abs(Z) ** 2, axis=-1) ** self.m
        return np.real(Za * Zb @ self._c) / norm

    def u_grad(self, Z):
        """Holomorphic Wirtinger gradient d u / dZ of the degree-0 extension of u."""
        Z = np.atleast_2d(Z)
        P, n1 = Z.shape
        if not len(self._c):
            return np.zeros((P, n1), dtype=complex)
        r2 = np.sum(np.abs(Z) ** 2, axis=-1)
        Zb = np.prod(np.conj(Z)[:, None, :] ** self._beta[None], axis=-1)
        F = np.real(_mono(Z, self._alpha) * Zb @ self._c)
        eye = np.eye(n1, dtype=int)
        out = np.empty((P, n1), dtype=complex)
        for i in range(n1):
            out[:, i] = (self._alpha[:, i][None] * _mono(Z, self._alpha - eye[i]) * Zb) @ self._c
        return out / (r2 ** self.m)[:, None] - self.m * (F / r2 ** (self.m + 1))[:, None] * np.conj(Z)

    def phi_chart(self, z, chart=0):
        """Full weight log(1+|z|^2) + t u in the given standard chart."""
        Z = from_chart(z, chart)
        z = np.atleast_2d(z)
        return np.log1p(np.sum(np.abs(z) ** 2, axis=-1)) + self.amplitude * self.u(Z)

    def _chart_terms(self, chart):
        keep = [i for i in range(self.dimension + 1) if i != chart]
        return self._alpha[:, keep], self._beta[:, keep], self._c

    def complex_hessian(self, z, chart=0):
        """Matrix d^2 phi / dz_j dzbar_k in a standard chart, shape (P, n, n)."""
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        P, n = z.shape
        D = 1.0 + np.sum(np.abs(z) ** 2, axis=-1)
        eye = np.eye(n)
        H = eye[None] / D[:, None, None] - np.conj(z)[:, :, None] * z[:, None, :] / (D ** 2)[:, None, None]
        if self.is_perturbed:
            H = H + self.amplitude * _u_hessian_chart(z, *self._chart_terms(chart), self.m)
        return H

    def ma_density(self, Z, chart=None):
        """Monge-Ampere density det(phi_{j kbar}) in the chart coordinates.

        Returns (density, chart) where chart is the index of the standard
        affine chart used for each point.
        """
        Z = np.atleast_2d(Z)
        ch = chart_of(Z) if chart is None else np.full(Z.shape[0], chart)
        dens = np.empty(Z.shape[0])
        for c in np.unique(ch):
            sel = ch == c
            z = to_chart(Z[sel], c)
            if np.any(np.abs(z) > CHART_SWITCH) and chart is None:
                raise ChartOverflow("chart coordinate beyond switch threshold")
            dens[sel] = np.real(np.linalg.det(self.complex_hessian(z, c)))
        return dens, ch

    def ma_ratio(self, Z):
        """Density of the Monge-Ampere measure m_phi with respect to dV."""
        Z = np.atleast_2d(Z)
        dens, ch = self.ma_density(Z)
        fs = np.empty(Z.shape[0])
        for c in np.unique(ch):
            sel = ch == c
            z = to_chart(Z[sel], c)
            fs[sel] = (1.0 + np.sum(np.abs(z) ** 2, axis=-1)) ** (-(self.dimension + 1))
        return dens / (2 ** self.dimension * fs)

    def u_half_range(self):
        """Half the oscillation of u over a dense grid (with 5% headroom); 0 if unperturbed."""
        if not self.is_perturbed:
            return 0.0
        if getattr(self, "_half_range", None) is None:
            v = self.u(dense_grid(self.dimension, 20000))
            self._half_range = 0.525 * float(np.max(v) - np.min(v))
        return self._half_range

    def min_eigenvalue(self, Z):
        Z = np.atleast_2d(Z)
        ch = chart_of(Z)
        out = np.empty(Z.shape[0])
        for c in np.unique(ch):
            sel = ch == c
            H = self.complex_hessian(to_chart(Z[sel], c), c)
            out[sel] = np.linalg.eigvalsh(H)[:, 0]
        return out


def _mono(z, e):
    """z^e for z (P, n) and exponents e (T, n); zero where an exponent is negative."""
    e = np.asarray(e)
    neg = np.any(e < 0, axis=-1)
    val = np.prod(z[:, None, :] ** np.maximum(e, 0)[None], axis=-1)
    val[:, neg] = 0
    return val


def _u_hessian_chart(z, a, b, c, m):
    """Complex Hessian of u = A(z, zbar) / (1+|z|^2)^m in a chart."""
    P, n = z.shape
    zb = np.conj(z)
    D = 1.0 + np.sum(np.abs(z) ** 2, axis=-1)
    eye = np.eye(n, dtype=int)
    A = _mono(z, a) * _mono(zb, b) @ c
    Aj = np.empty((P, n), dtype=complex)
    Akb = np.empty((P, n), dtype=complex)
    Ajkb = np.empty((P, n, n), dtype=complex)
    for j in range(n):
        Aj[:, j] = (a[:, j][None] * _mono(z, a - eye[j]) * _mono(zb, b)) @ c
        Akb[:, j] = (b[:, j][None] * _mono(z, a) * _mono(zb, b - eye[j])) @ c
    for j in range(n):
        for k in range(n):
            Ajkb[:, j, k] = (a[:, j][None] * b[:, k][None] * _mono(z, a - eye[j]) * _mono(zb, b - eye[k])) @ c
    g = D ** (-m)
    gj = -m * zb * (D ** (-m - 1))[:, None]
    gkb = -m * z * (D ** (-m - 1))[:, None]
    gjkb = (-m * np.eye(n)[None] * (D ** (-m - 1))[:, None, None]
            + m * (m + 1) * zb[:, :, None] * z[:, None, :] * (D ** (-m - 2))[:, None, None])
    H = (Ajkb * g[:, None, None] + Aj[:, :, None] * gkb[:, None, :]
         + Akb[:, None, :] * gj[:, :, None] + A[:, None, None] * gjkb)
    return H


def positivity_margin(w: Weight, size=20000):
    """Smallest curvature eigenvalue over a dense grid (chart of largest coordinate)."""
    grid = dense_grid(w.dimension, size)
    return float(np.min(w.min_eigenvalue(grid)))


def fs_volume(n=1):
    return (2 * math.pi) ** n / math.factorial(n)


def ma_total_mass(n=1):
    """m_phi(CP^n); independent of the perturbation."""
    return math.pi ** n / math.factorial(n)


def cap_volume(r, n=1):
    """dV volume of a ball of radius r (any center)."""
    s = math.sin(min(r, math.pi / 2)) ** 2
    return (2 * math.pi) ** n * s ** n / math.factorial(n)


# ---------------------------------------------------------------------------
# quadrature


@dataclass
class QuadratureRule:
    """Product rule over a distance shell ``r_in <= d(center, .) <= r_out``.

    ``degree`` is the bihomogeneous degree in (Z, Zbar) of FS-weighted
    polynomial integrands the rule integrates exactly (only meaningful for
    ``radial='sigma'``).
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int
    center: np.ndarray
    r_in: float
    r_out: float
    node_id: np.ndarray = None

    def __post_init__(self):
        if self.node_id is None:
            self.node_id = np.arange(len(self.weights))

    @property
    def n(self):
        return self.points.shape[1] - 1

    @property
    def charts(self):
        return chart_of(self.points)

    def __len__(self):
        return len(self.weights)

    def permuted(self, perm):
        return QuadratureRule(self.points[perm], self.weights[perm], self.degree, self.center,
                              self.r_in, self.r_out, self.node_id[perm])


def _node_counts(degree, margin):
    p = int(math.ceil(degree / 2))
    if margin <= 1:
        return max(1, (p + 2) // 2 + 1), p + 1
    return p + 2, 2 * p + 2


def shell_rule(center, r_in, r_out, degree, n=1, radial="sigma", margin=2, nodes=None):
    """Rule for the shell between two geodesic radii around ``center``."""
    center = normalize(np.asarray(center, dtype=complex))
    r_in = max(0.0, float(r_in))
    r_out = min(math.pi / 2, float(r_out))
    n_rad, n_ang = _node_counts(degree, margin)
    if nodes is not None:
        n_rad, n_ang = nodes
    U = rotation_to(center)
    x, wx = leggauss(n_rad)
    if radial == "sigma":
        a, b = math.sin(r_in) ** 2, math.sin(r_out) ** 2
        sig = 0.5 * (b - a) * (x + 1) + a
        wsig = 0.5 * (b - a) * wx
        if n == 2:
            wsig = wsig * sig
    elif radial == "dist":
        d = 0.5 * (r_out - r_in) * (x + 1) + r_in
        sig = np.sin(d) ** 2
        wsig = 0.5 * (r_out - r_in) * wx * np.sin(2 * d)
        if n == 2:
            wsig = wsig * sig
    else:
        raise ValueError(radial)
    th = 2 * np.pi * np.arange(n_ang) / n_ang
    wth = np.full(n_ang, 2 * np.pi / n_ang)
    if n == 1:
        S, T = np.meshgrid(sig, th, indexing="ij")
        W = np.outer(wsig, wth)
        Y = np.stack([np.sqrt(1 - S), np.sqrt(S) * np.exp(1j * T)], axis=-1).reshape(-1, 2)
    else:
        xb, wb = leggauss(n_rad)
        bb = 0.5 * (xb + 1)
        wbb = 0.5 * wb
        S, B, T1, T2 = np.meshgrid(sig, bb, th, th, indexing="ij")
        W = (wsig[:, None, None, None] * wbb[None, :, None, None]
             * wth[None, None, :, None] * wth[None, None, None, :])
        Y = np.stack([np.sqrt(np.clip(1 - S, 0, None)), np.sqrt(S * B) * np.exp(1j * T1),
                      np.sqrt(S * (1 - B)) * np.exp(1j * T2)], axis=-1).reshape(-1, 3)
    pts = Y @ U.T
    return QuadratureRule(pts, W.reshape(-1), int(degree), center, r_in, r_out)


def global_rule(degree, n=1, margin=2):
    return shell_rule(basis_point(0, n), 0.0, math.pi / 2, degree, n=n, margin=margin)


def cap_rule(center, radius, degree, n=1, radial="sigma", margin=2, nodes=None):
    return shell_rule(center, 0.0, radius, degree, n=n, radial=radial, margin=margin, nodes=nodes)


def complement_rule(center, radius, degree, n=1, radial="sigma", margin=2, nodes=None):
    return shell_rule(center, radius, math.pi / 2, degree, n=n, radial=radial, margin=margin, nodes=nodes)


@dataclass(frozen=True)
class BallRegion:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not 0 <= self.radius <= math.pi / 2 + 1e-15:
            raise ValueError("radius must lie in [0, pi/2]")
        object.__setattr__(self, "center", normalize(np.asarray(self.center, dtype=complex)))

    @property
    def n(self):
        return self.center.shape[0] - 1

    def contains(self, Z, closed=False):
        d = fs_distance(np.atleast_2d(Z), self.center[None])
        return d <= self.radius if closed else d < self.radius

    def rule(self, degree, radial="sigma", margin=2, nodes=None):
        return cap_rule(self.center, self.radius, degree, n=self.n, radial=radial, margin=margin, nodes=nodes)

    def complement_rule(self, degree, radial="sigma", margin=2, nodes=None):
        return complement_rule(self.center, self.radius, degree, n=self.n, radial=radial, margin=margin,
                               nodes=nodes)


def integrate(values, rule: QuadratureRule, required_degree=None):
    """Sum of weights * values in node-id order (values may be (P,) or (P, ...))."""
    if required_degree is not None and rule.degree < required_degree:
        raise DegreeTooLow(f"rule degree {rule.degree} < required {required_degree}")
    order = np.argsort(rule.node_id, kind="stable")
    v = np.asarray(values)[order]
    return np.tensordot(rule.weights[order], v, axes=(0, 0))


def integrate_fn(f, rule: QuadratureRule, required_degree=None):
    return integrate(f(rule.points), rule, required_degree)


def integrate_ball(f, ball: BallRegion, degree, radial="sigma"):
    return integrate_fn(f, ball.rule(degree, radial=radial))


def integrate_gram(A, B, rule: QuadratureRule, required_degree=None):
    """Matrix of integrals of conj(A_i) B_j, with A and B sampled at the nodes as (P, N) arrays."""
    if required_degree is not None and rule.degree < required_degree:
        raise DegreeTooLow(f"rule degree {rule.degree} < required {required_degree}")
    order = np.argsort(rule.node_id, kind="stable")
    wa = np.conj(np.asarray(A)[order]) * rule.weights[order][:, None]
    return wa.T @ np.asarray(B)[order]
