"""Experiment commands. Each returns (result, checks, files, plots)."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from ..bergman import (
    build_section_space,
    decay_profile,
    diagonal_identity_error,
    kernel_slice_csv,
    l1_kernel_bounds,
    reproducing_error,
    required_degree,
    rescaled_kernel_vs_fock,
    tian_error,
)
from ..equidistribution import equidistribution_table
from ..fekete import (
    SolveOptions,
    dual_identity_errors,
    dual_sections,
    lagrange_sections,
    solve_level,
)
from ..frames import (
    density_deficit_constants,
    density_report,
    fekete_family,
    frame_report,
    localized_interpolant,
    make_perturbed_fekete,
    make_spiral,
    simultaneity_probe,
)
from ..geometry import (
    BallRegion,
    DegreeTooLow,
    basis_point,
    dense_grid,
    fibonacci_grid,
    fs_distance,
    fs_volume,
    global_rule,
    integrate,
    integrate_gram,
    ma_total_mass,
    normalize,
    sample_uniform,
)
from ..landau import (
    bergman_trace_integral,
    build_concentration,
    count_bounds,
    hs_integral,
    offdiag_mass,
    spectral_report,
)
from ..transport import loglog_slope, plan_csv, wasserstein_bracket
from .config import ConfigInvalid, ExperimentConfig
from .report import Plot, check, flag


class Context:
    """Shared state of one run: memoized section spaces and Fekete solves."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.w = cfg.weight_obj
        self.n = self.w.dimension
        self.tol = cfg.tol
        self.opts = SolveOptions(restarts=cfg.restarts, seed=cfg.seed, tau=self.tol["certificate_tau"])
        self._spaces = {}
        self._fekete = {}

    def space(self, k):
        if k not in self._spaces:
            rule = None
            if self.cfg.quad_degree is not None:
                need = required_degree(self.w, k)
                if self.cfg.quad_degree < need:
                    raise ConfigInvalid(f"quad_degree {self.cfg.quad_degree} < {need} needed at k={k}")
                rule = global_rule(self.cfg.quad_degree, n=self.n)
            try:
                self._spaces[k] = build_section_space(self.w, k, rule)
            except DegreeTooLow as exc:
                raise ConfigInvalid(str(exc)) from exc
        return self._spaces[k]

    def fekete(self, k):
        if k not in self._fekete:
            self._fekete[k] = solve_level(self.w, k, self.opts, self.cfg.cache_dir)
        return self._fekete[k]

    def grid(self, size=4096):
        return fibonacci_grid(size) if self.n == 1 else dense_grid(2, size)

    def family(self, ks):
        cfg = self.cfg
        if cfg.family == "fekete":
            return fekete_family(self.w, ks, self.opts, cfg.cache_dir)
        if cfg.family == "perturbed-fekete":
            return make_perturbed_fekete(self.w, cfg.eps, cfg.sign, ks, self.opts, cfg.cache_dir)
        try:
            return make_spiral(self.w, cfg.density_factor, ks)
        except NotImplementedError as exc:
            raise ConfigInvalid(str(exc)) from exc


def _variation(values):
    v = [abs(x) for x in values if math.isfinite(x) and x != 0]
    if len(v) < len(values) or not v:
        return math.inf
    return max(v) / min(v)


def _sphere_coords(P):
    """Equal-area picture of CP^1 (azimuth, height) or the moment map of CP^2."""
    P = normalize(P)
    if P.shape[1] == 2:
        h = np.abs(P[:, 0]) ** 2 - np.abs(P[:, 1]) ** 2
        c = P[:, 0] * np.conj(P[:, 1])
        return np.angle(c), h
    return np.abs(P[:, 1]) ** 2, np.abs(P[:, 2]) ** 2


# ---------------------------------------------------------------------------
# space


def fs_monomial_gram_error(S):
    """Largest relative deviation of the monomial Gram from Vol * alpha! n! / (k+n)!."""
    n, k = S.n, S.k
    logd = np.sum(gammaln(S.exps + 1), axis=1) + gammaln(n + 1) - gammaln(k + n + 1)
    exact = fs_volume(n) * np.exp(logd)
    G = S.monomial_gram()
    off = np.abs(G - np.diag(np.diag(G))) / np.sqrt(np.outer(exact, exact))
    return float(max(np.max(np.abs(np.real(np.diag(G)) / exact - 1)), np.max(off)))


def space_checks(ctx: Context, k, prefix=""):
    S = ctx.space(k)
    tol = ctx.tol
    rng = np.random.default_rng(ctx.cfg.seed)
    xs = sample_uniform(ctx.n, 20, rng)
    alt = global_rule(S.rule.degree + 6, n=ctx.n)
    E = S.values(alt.points)
    ortho = float(np.max(np.abs(integrate_gram(E, E, alt) - np.eye(S.dim))))
    total = float(integrate(S.bergman_function(alt.points), alt))
    ma = float(integrate(ctx.w.ma_ratio(alt.points), alt))
    checks = [
        check(prefix + "bergman_diagonal", diagonal_identity_error(S, xs), tol["bergman_diagonal"]),
        check(prefix + "reproducing", reproducing_error(S, xs), tol["reproducing"]),
        check(prefix + "orthonormality", ortho, tol["orthonormality"]),
        check(prefix + "bergman_total", abs(total - S.dim) / S.dim, tol["bergman_diagonal"]),
        check(prefix + "ma_total_mass", abs(ma / ma_total_mass(ctx.n) - 1), tol["ma_total_mass"]),
    ]
    result = {**S.to_dict(), "bergman_integral": total, "ma_total_mass": ma}
    if not ctx.w.is_perturbed:
        B = S.bergman_function(ctx.grid())
        const = S.dim / fs_volume(ctx.n)
        checks.append(check(prefix + "fs_bergman_constant", np.max(np.abs(B - const)), tol["fs_bergman_constant"]))
        checks.append(check(prefix + "fs_monomial_gram", fs_monomial_gram_error(S), tol["fs_monomial_gram"]))
        result["fs_bergman_constant"] = const
    return result, checks


def cmd_space(ctx: Context):
    k = ctx.cfg.k
    S = ctx.space(k)
    result, checks = space_checks(ctx, k)
    e0, e1 = basis_point(0, ctx.n), basis_point(1, ctx.n)
    th = np.linspace(0, math.pi / 2, 64)
    path = np.cos(th)[:, None] * e0[None] + np.sin(th)[:, None] * e1[None]
    plot = Plot("bergman_profile", "geodesic parameter", "k^-n B_k")
    plot.add("k^-n B_k", th, S.bergman_function(path) / k ** ctx.n)
    plot.add("pi^-n dm/dV", th, ctx.w.ma_ratio(path) / math.pi ** ctx.n)
    probes = fibonacci_grid(64) if ctx.n == 1 else dense_grid(2, 64)
    files = {"space.json": S.to_json() + "\n", "kernel_slice.csv": kernel_slice_csv(S, e0[None], probes)}
    return result, checks, files, [plot]


# ---------------------------------------------------------------------------
# fekete


def fekete_checks(ctx: Context, k, prefix=""):
    tol = ctx.tol
    F = ctx.fekete(k)
    S = ctx.space(k)
    L = lagrange_sections(S, F.points)
    D = dual_sections(S, F.points, L)
    rng = np.random.default_rng(ctx.cfg.seed + 1)
    e1, e2, e3 = dual_identity_errors(S, L, D, sample_uniform(ctx.n, 50, rng))
    checks = [
        check(prefix + "certificate", F.certificate["lagrange_sup"], 1.0 + F.certificate["tau"]),
        check(prefix + "lagrange_delta", L.delta_error(), tol["lagrange_delta"]),
        check(prefix + "dual_pairing", e1, tol["dual_pairing"]),
        check(prefix + "dual_tiling", e2, tol["dual_tiling"]),
        check(prefix + "dual_modulus", e3, tol["dual_modulus"]),
    ]
    return F, checks


def cmd_fekete(ctx: Context):
    k = ctx.cfg.k
    F, checks = fekete_checks(ctx, k)
    if k == 1 and ctx.n == 1:
        d = float(fs_distance(F.points[:1], F.points[1:])[0])
        checks.append(check("antipodal", abs(d - math.pi / 2), 1e-8))
    x, y = _sphere_coords(F.points)
    labels = ("azimuth", "height") if ctx.n == 1 else ("|z1|^2", "|z2|^2")
    plot = Plot("fekete_points", *labels, kind="scatter").add(f"k={k}", x, y)
    files = {"fekete.json": F.to_json() + "\n", "points.csv": F.points_csv()}
    return F.to_dict(), checks, files, [plot]


# ---------------------------------------------------------------------------
# landau


def landau_run(ctx: Context, k, center, radius, gammas):
    S = ctx.space(k)
    region = BallRegion(normalize(center), min(radius, math.pi / 2))
    T = build_concentration(S, region)
    rep = spectral_report(T, gammas)
    tr = bergman_trace_integral(S, region)
    hs = hs_integral(S, region)
    mass = offdiag_mass(S, region)
    bounds = {g: count_bounds(S, region, g, mass) for g in gammas}
    return S, T, rep, tr, hs, mass, bounds


def cmd_landau(ctx: Context):
    cfg, tol = ctx.cfg, ctx.tol
    lc = cfg.landau
    center = basis_point(0, ctx.n) if lc["center"] is None else np.array([complex(a, b) for a, b in lc["center"]])
    gammas = tuple(lc["gammas"])
    S, T, rep, tr, hs, mass, bounds = landau_run(ctx, cfg.k, center, lc["radius"], gammas)
    ev = rep.eigenvalues
    checks = [
        check("spectrum_below", -float(np.min(ev)), tol["spectrum"]),
        check("spectrum_above", float(np.max(ev)) - 1.0, tol["spectrum"]),
        check("trace", abs(rep.trace - tr), tol["trace"]),
        check("hs", abs(rep.hs2 - hs), tol["hs"]),
    ]
    for g in gammas:
        lo, hi = bounds[g]
        checks.append(flag(f"count_bounds_{g:g}", lo - 1e-9 <= rep.counts[float(g)] <= hi + 1e-9))
    if lc["radius"] >= math.pi / 2:
        checks.append(check("whole_space_trace", abs(rep.trace - S.dim), tol["trace"]))
    result = {**rep.to_dict(), "trace_integral": tr, "hs_integral": hs, "offdiag_mass": mass,
              "count_bounds": {str(g): list(b) for g, b in bounds.items()}, "asymmetry": T.asymmetry}
    plot = Plot("spectrum", "index", "eigenvalue").add(f"k={cfg.k}", np.arange(len(ev)), ev)
    plot.hlines = {f"gamma={g:g}": g for g in gammas}
    csv = "index,eigenvalue\n" + "".join(f"{i},{v:.17g}\n" for i, v in enumerate(ev))
    return result, checks, {"spectrum.json": rep.to_json() + "\n", "eigenvalues.csv": csv}, [plot]


# ---------------------------------------------------------------------------
# frames and density


def _family_kind(cfg):
    if cfg.family == "perturbed-fekete":
        return "sampling" if cfg.sign > 0 else "interpolation"
    if cfg.family == "spiral":
        return "sampling" if cfg.density_factor > 1 else "interpolation"
    return "critical"


def cmd_frames(ctx: Context):
    cfg, tol = ctx.cfg, ctx.tol
    ks = cfg.k_range
    fam = ctx.family(ks)
    grid = ctx.grid()
    reps = [frame_report(ctx.space(k), fam[k], grid, ensemble=256, seed=cfg.seed) for k in ks]
    kind = _family_kind(cfg)
    checks = []
    ba = [r.B / r.A for r in reps]
    cs = [r.C for r in reps]
    if kind == "sampling":
        checks.append(check("B_over_A_variation", _variation(ba), tol["band"]))
    elif kind == "interpolation":
        checks.append(check("C_variation", _variation(cs), tol["band"]))
    result = {"kind": kind, "provenance": fam.provenance, "delta": fam.delta,
              "levels": [r.to_dict() for r in reps]}
    if kind == "critical":
        probe = simultaneity_probe(ctx.w, ks, ctx.opts, cfg.cache_dir)
        result["simultaneity"] = probe
        checks.append(flag("simultaneity_increasing", probe["increasing"]))
    loc = {}
    for eps in (0.25, 0.5):
        li = localized_interpolant(ctx.w, cfg.k, eps, opts=ctx.opts, cache_dir=cfg.cache_dir)
        loc[str(eps)] = {"k1": li.k1, "k2": li.k2, "ratio": li.ratio, "constant": li.constant,
                         "least_norm_C": li.least_norm_C, "interpolation_error": li.interpolation_error}
        checks.append(check(f"localized_interpolation_{eps:g}", li.interpolation_error, 1e-8))
    trend = loc["0.25"]["constant"] / loc["0.5"]["constant"]
    checks.append(check("localized_eps_trend", trend, 2.0 * 2 ** (2 * ctx.n)))
    result["localized"] = {"k": cfg.k, **loc, "constant_ratio": trend}
    plot = Plot("frame_constants", "k", "constant", logx=True, logy=True)
    plot.add("B/A", ks, ba)
    if all(math.isfinite(c) for c in cs):
        plot.add("C", ks, cs)
    table = "k,count,A,B,C,A_inf,C1\n" + "".join(
        f"{r.k},{r.count},{r.A:.17g},{r.B:.17g},{r.C:.17g},{r.A_inf:.17g},{r.C1:.17g}\n" for r in reps)
    return result, checks, {"family.csv": fam.to_csv(), "frames.csv": table}, [plot]


def _expected_density(ctx, fam):
    prov = fam.provenance
    crit = 1.0 / math.pi ** ctx.n
    if prov["kind"] == "perturbed-fekete":
        return crit * (1 + prov["sign"] * prov["eps"]) ** ctx.n
    if prov["kind"] == "spiral":
        return crit * prov["density_factor"]
    return crit


def density_checks(ctx: Context, fam, prefix=""):
    cfg, tol = ctx.cfg, ctx.tol
    rep = density_report(ctx.w, fam, cfg.R_grid, normalization=cfg.density_normalization)
    expect = _expected_density(ctx, fam)
    checks = [check(prefix + "D_minus", abs(rep.D_minus / expect - 1), tol["density_rel"])]
    if fam.provenance["kind"] == "fekete":
        checks.append(check(prefix + "D_plus", abs(rep.D_plus / expect - 1), tol["density_rel"]))
    Rs = [R for R in (2.0, 4.0, 8.0) if R in rep.R]
    M = density_deficit_constants(rep, Rs) if Rs else {}
    pos = [m for m in M.values() if m > 0]
    if len(pos) >= 2:
        checks.append(check(prefix + "M_variation", _variation(pos), tol["band"]))
    result = {**rep.to_dict(), "expected": expect, "M": M, "provenance": fam.provenance}
    plot = Plot("density", "R", "nu(R)", logx=True)
    plot.add("nu-", rep.R, rep.nu_minus).add("nu+", rep.R, rep.nu_plus)
    plot.hlines = {"expected": expect}
    return result, checks, plot


def density_levels(cfg):
    ks = [k for k in cfg.k_range if k >= cfg.density_min_k]
    if not ks:
        raise ConfigInvalid(f"no level in k_range reaches density_min_k={cfg.density_min_k}")
    return ks


def cmd_density(ctx: Context):
    fam = ctx.family(density_levels(ctx.cfg))
    result, checks, plot = density_checks(ctx, fam)
    return result, checks, {"family.csv": fam.to_csv()}, [plot]


# ---------------------------------------------------------------------------
# wasserstein


def wasserstein_run(ctx: Context, ks, prefix=""):
    tol = ctx.tol
    brs = []
    for k in ks:
        S = ctx.space(k)
        P = ctx.fekete(k).points
        L = lagrange_sections(S, P)
        D = dual_sections(S, P, L)
        brs.append(wasserstein_bracket(S, P, L, D))
    rk = np.sqrt(np.asarray(ks, float))
    vals = [b.value for b in brs]
    checks = [
        flag(prefix + "sandwich", all(b.sandwich for b in brs)),
        check(prefix + "lower_sqrt_k", float(np.min(np.array([b.lower for b in brs]) * rk)), tol["lower_sqrt_k_min"], ">="),
        check(prefix + "coupling_sqrt_k_band", _variation(list(np.array([b.coupling for b in brs]) * rk)), tol["band"]),
        check(prefix + "dual_gap", max(b.meta["dual_gap"] for b in brs), tol["dual_gap"]),
    ]
    slope = loglog_slope(ks, vals) if len(ks) > 1 else math.nan
    if len(ks) > 1:
        checks.insert(0, check(prefix + "slope", slope, [tol["slope_min"], tol["slope_max"]], "in"))
    result = {"k": list(ks), "slope": slope, "brackets": [b.to_dict() for b in brs]}
    table = "k,lower,value,upper,value_bergman,coupling,tv\n" + "".join(
        f"{b.k},{b.lower:.17g},{b.value:.17g},{b.upper:.17g},{b.value_bergman:.17g},{b.coupling:.17g},{b.tv:.17g}\n"
        for b in brs)
    plot = Plot("wasserstein", "k", "W1", logx=True, logy=True)
    for name in ("lower", "value", "upper"):
        plot.add(name, ks, [getattr(b, name) for b in brs])
    files = {"brackets.csv": table, f"plan_k{brs[-1].k}.csv": plan_csv(brs[-1].plan, 1e-15)}
    return result, checks, files, plot


def cmd_wasserstein(ctx: Context):
    result, checks, files, plot = wasserstein_run(ctx, ctx.cfg.k_range)
    return result, checks, files, [plot]


# ---------------------------------------------------------------------------
# kernel asymptotics


def fock_center(n):
    return normalize(np.array([1.0, 0.5 + 0.25j]) if n == 1 else np.array([1.0, 0.3, 0.2j]))


def cmd_fock(ctx: Context):
    cfg, tol = ctx.cfg, ctx.tol
    ks = cfg.k_range
    x0 = fock_center(ctx.n)
    grid = ctx.grid(2000)
    fock, tian, decay, l1 = [], [], [], []
    for k in ks:
        S = ctx.space(k)
        fock.append(rescaled_kernel_vs_fock(S, x0))
        tian.append(tian_error(S, grid))
        if k >= 8:
            decay.append(decay_profile(S, seed=cfg.seed).c)
        b = l1_kernel_bounds(S, seed=cfg.seed)
        l1.append({"k": k, "sup_l1": b.sup_l1, "offdiag_l1": b.offdiag_l1,
                   "sup_moment_sqrt_k": b.sup_moment * math.sqrt(k)})
    tian_c = [k * e for k, e in zip(ks, tian)]
    checks = [
        flag("fock_decreasing", all(b < a for a, b in zip(fock, fock[1:]))),
        check("tian_constant_variation", _variation(tian_c), tol["band"]),
        check("l1_sup_variation", _variation([r["sup_l1"] for r in l1]), tol["band"]),
        check("l1_moment_variation", _variation([r["sup_moment_sqrt_k"] for r in l1]), tol["band"]),
    ]
    # off-diagonal L^1 mass is O(R^(2n-1)): the sup over R of the scaled mass must stay put in k
    scaled = [max(v / float(R) ** (2 * ctx.n - 1) for R, v in r["offdiag_l1"].items()) for r in l1]
    checks.append(check("l1_offdiag_variation", _variation(scaled), tol["band"]))
    if decay:
        checks.append(check("decay_positive", min(decay), 0.0, ">="))
        if len(decay) > 1:
            steps = [abs(b / a - 1) for a, b in zip(decay, decay[1:])]
            checks.append(check("decay_stability", max(steps), tol["decay_stability"]))
    result = {"k": list(ks), "center": [[z.real, z.imag] for z in x0], "fock_error": fock, "tian_error": tian,
              "tian_constant": tian_c, "decay_c": decay, "l1": l1}
    plot = Plot("kernel_asymptotics", "k", "sup error", logx=True, logy=True)
    plot.add("Fock", ks, fock).add("Tian", ks, tian)
    return result, checks, {}, [plot]


# ---------------------------------------------------------------------------
# full report


def cmd_full(ctx: Context, stage):
    """Spaces, Fekete, dual identities, equidistribution, Wasserstein, density.

    ``stage(name, result, checks, files, plots)`` stores each step's outputs.
    """
    cfg = ctx.cfg
    ks = cfg.k_range
    checks, summary = [], {}

    res, chk = {}, []
    for k in ks:
        r, c = space_checks(ctx, k, prefix=f"k{k}_")
        res[str(k)] = r
        chk += c
    stage("spaces", res, chk, {}, [])
    checks += chk

    res, chk = {}, []
    for k in ks:
        F, c = fekete_checks(ctx, k, prefix=f"k{k}_")
        res[str(k)] = {"objective": F.objective, "certificate": F.certificate}
        chk += c
    files = {f"points_k{k}.csv": ctx.fekete(k).points_csv() for k in ks}
    stage("fekete", res, chk, files, [])
    checks += chk

    table = equidistribution_table(ctx.w, {k: ctx.fekete(k).points for k in ks}, r_size=cfg.r_grid_size,
                                   x_grid=fibonacci_grid(cfg.x_grid_size) if ctx.n == 1 else None)
    chk = [check("equidistribution_variation", table.variation, ctx.tol["band"])] if len(ks) > 1 else []
    res = {"constants": table.constants, "variation": table.variation}
    plot = Plot("equidistribution", "k", "constant", logx=True).add("sup discrepancy", sorted(table.constants),
                                                                   [table.constants[k] for k in sorted(table.constants)])
    stage("equidistribution", res, chk, {"table.csv": table.csv()}, [plot])
    checks += chk
    summary["equidistribution"] = res

    res, chk, files, plot = wasserstein_run(ctx, ks)
    stage("wasserstein", res, chk, files, [plot])
    checks += chk
    summary["wasserstein_slope"] = res["slope"]

    fam = fekete_family(ctx.w, density_levels(cfg), ctx.opts, cfg.cache_dir)
    res, chk, plot = density_checks(ctx, fam)
    stage("density", res, chk, {}, [plot])
    checks += chk
    summary["density"] = {"D_minus": res["D_minus"], "D_plus": res["D_plus"], "expected": res["expected"]}

    return summary, checks, {}, []


COMMANDS = {
    "space": cmd_space,
    "fekete": cmd_fekete,
    "landau": cmd_landau,
    "frames": cmd_frames,
    "density": cmd_density,
    "wasserstein": cmd_wasserstein,
    "fock-check": cmd_fock,
}
