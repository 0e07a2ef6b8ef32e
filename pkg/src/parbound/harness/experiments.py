"""Theorem-level experiments.

Every experiment solves at each resolution of the config, measures a
quantity per dyadic scale, fits one constant by max-fitting (the smallest
constant making the inequality hold at every scale) and compares fitted
constants across resolutions.
"""

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.optimize import brentq

from ..errors import ConfigError, DegeneracyError
from ..geometry import check_exterior_C1, check_interior_C1, parabolic_distance_arrays
from ..grid import GridFunction, GridSpec
from ..moduli import (DINI, ModulusSpec, SampledModulus, closed_form_dini, dini_integral,
                      is_dini, omega_f_from_field, tilde_omega)
from ..solver import ParabolicProblem, solve, special_solution
from .green import dyadic_green_bound
from .report import ExperimentReport
from .zoom import level_for, sample, zoom_solve

NONNEG_TOL = 1e-12
_ZOOM_CACHE = {}


def thread_cap():
    """Worker count from ``PARBOUND_THREADS`` (default 1)."""
    raw = os.environ.get("PARBOUND_THREADS", "1")
    try:
        k = int(raw)
    except ValueError as err:
        raise ConfigError(f"PARBOUND_THREADS must be an integer, got {raw!r}") from err
    if k < 1:
        raise ConfigError("PARBOUND_THREADS must be at least 1")
    return k


def _map(func, items):
    """Ordered map; concurrent when the thread cap allows it."""
    items = list(items)
    k = min(thread_cap(), len(items))
    if k <= 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(func, items))


def dyadic_scales(lo, hi):
    """Powers of two from ``hi`` down to ``lo``."""
    k0, k1 = round(-math.log2(hi)), round(-math.log2(lo))
    return [2.0 ** -k for k in range(k0, k1 + 1)]


def modulus_integral(omega, a, b):
    """``int_a^b omega ds/s``, closed form where available."""
    if omega is None or omega.is_zero or b <= a:
        return 0.0
    if omega.family in ("power", "log_inverse"):
        return closed_form_dini(omega, a, b)
    return dini_integral(omega, a, b)


def fit_lower(measured, integrals):
    """Smallest ``C`` with ``m >= exp(-C I) / C`` at every scale."""
    best = 0.0
    for m, I in zip(measured, integrals):
        if not m > 0:
            return math.inf
        target = math.log(1.0 / m)
        if I == 0:
            best = max(best, 1.0 / m)
            continue
        f = lambda C: math.log(C) + C * I - target
        hi = 1.0
        while f(hi) < 0:
            hi *= 2
        best = max(best, brentq(f, 1e-300, hi, xtol=1e-15, rtol=1e-15))
    return best


def fit_upper(measured, prefactor, integrals):
    """Smallest ``C`` with ``m <= C * P * exp(C I)`` at every scale."""
    best = 0.0
    for m, I in zip(measured, integrals):
        if m <= 0:
            continue
        if not prefactor > 0:
            return math.inf
        target = math.log(m / prefactor)
        if I == 0:
            best = max(best, m / prefactor)
            continue
        f = lambda C: math.log(C) + C * I - target
        hi = 1.0
        while f(hi) < 0:
            hi *= 2
        best = max(best, brentq(f, 1e-300, hi, xtol=1e-15, rtol=1e-15))
    return best


def _zoom(cfg, N, depth, source_average=False, domain=True, keep_times=()):
    key = json.dumps([cfg.kind in ("hopf", "upper_bound"), cfg.n, cfg.domain, cfg.lam, cfg.Lam,
                      cfg.coefficients, cfg.source, cfg.data, cfg.anchor, cfg.steps_per_radius2,
                      N, depth, source_average, domain, sorted(keep_times)],
                     sort_keys=True, default=repr)
    if key not in _ZOOM_CACHE:
        dom = cfg.domain_obj() if domain else None
        r0 = 2.0 * cfg.anchor if domain else 1.0
        steps = max(1, int(round(cfg.steps_per_radius2 * N * N)))
        src = cfg.source_fn()
        data = cfg.data_fn(dom.graph if dom is not None else None)
        levels = zoom_solve(dom, cfg.coefficient_field(), src, data, r0, N, steps, depth,
                            keep_times=keep_times, source_average=source_average, n=cfg.n)
        _ZOOM_CACHE[key] = (levels, data)
    return _ZOOM_CACHE[key]


def clear_cache():
    _ZOOM_CACHE.clear()


def _axis_point(n, height):
    p = np.zeros((1, n))
    p[0, -1] = height
    return p


def _spread_check(report, band, label="fitted constant"):
    sp = report.spread
    finite = all(math.isfinite(v) for v in report.fitted.values())
    report.check("fitted_finite", finite and bool(report.fitted),
                 ", ".join(f"{k}: {v:.6g}" for k, v in sorted(report.fitted.items())))
    report.check("cross_resolution_spread", finite and sp <= band,
                 f"{label} spread {sp:.4g} (band {band:g})")


# Hopf --------------------------------------------------------------------

def run_hopf(cfg):
    """Centerline growth ``u(rho e_n, 0)/rho`` against the exponential Dini factor."""
    t0 = time.perf_counter()
    rep = ExperimentReport("hopf")
    a = cfg.anchor
    omega = cfg.modulus() or ModulusSpec.zero(2 * a)
    dom = cfg.domain_obj()
    scales = dyadic_scales(cfg.rho_min, cfg.r_max)
    if scales[0] > a / 4 * (1 + 1e-12):
        raise ConfigError("measurement radii must satisfy rho <= r/4", key="r_max")
    if not omega.is_zero:
        c1 = check_interior_C1(dom, omega, min(omega.eta0, 2 * a))
        rep.check("interior_C1", c1.holds, f"margin {c1.margin:.3g}")
    r_levels = [rho / cfg.zoom_ratio for rho in scales]
    r0 = 2 * a
    depth = round(math.log2(r0 / r_levels[-1]))
    if any(abs(math.log2(r0 / r) - round(math.log2(r0 / r))) > 1e-9 for r in r_levels) \
            or r_levels[0] > r0 * (1 + 1e-12):
        raise ConfigError("centerline points leave the zoom grids", key="zoom_ratio")
    integrals = [modulus_integral(omega, rho, 2 * a) for rho in scales]
    dini = omega.is_zero or is_dini(omega) == DINI

    def one(N):
        levels, data = _zoom(cfg, N, depth, keep_times=(-3 * a * a,))
        anchor_val = float(levels[0].value(_axis_point(cfg.n, a), -3 * a * a, data)[0])
        meas = []
        for rho, rl in zip(scales, r_levels):
            lv = level_for(levels, rl)
            meas.append(float(lv.value(_axis_point(cfg.n, rho), 0.0, data)[0]) / rho)
        low = min(float(np.nanmin(lv.solution.values)) for lv in levels)
        return anchor_val, np.array(meas), low

    results = _map(one, cfg.resolutions)
    for N, (anchor_val, meas, low) in zip(cfg.resolutions, results):
        if not anchor_val > 0:
            raise DegeneracyError("anchor value is not positive")
        m = meas / (anchor_val / a)
        C = fit_lower(m, integrals)
        rep.fitted[N] = C
        for rho, mv, I in zip(scales, m, integrals):
            pred = math.exp(-C * I) / C
            rep.rows.append({"resolution": N, "scale": rho, "measured": float(mv),
                             "predicted": pred, "ratio": float(mv) / pred, "integral": I})
        rep.check(f"nonnegative_{N}", low >= -NONNEG_TOL, f"min u = {low:.3g}")
        if dini:
            floor = float(m.min() / m.max())
            rep.extras[f"min_over_max_{N}"] = floor
            rep.check(f"bounded_below_{N}", floor >= 0.3, f"min/max {floor:.4g} (>= 0.3)")
        else:
            A = np.vstack([np.ones(len(integrals)), integrals]).T
            coef = np.linalg.lstsq(A, np.log(m), rcond=None)[0]
            decay = float(-coef[1])
            rep.extras[f"decay_constant_{N}"] = decay
            ok = decay > 0 and C / 2 <= decay <= 2 * C
            rep.check(f"decay_vs_fitted_{N}", ok,
                      f"log-ratio decay {decay:.4g} vs fitted exponent {C:.4g} (factor 2)")
        if omega.is_zero and cfg.domain.get("family") == "flat":
            dev = float(np.max(np.abs(m - 1)))
            rep.extras[f"max_ratio_deviation_{N}"] = dev
            rep.check(f"exact_ratio_{N}", dev <= 1e-6 and abs(C - 1) <= 1e-6,
                      f"|ratio - 1| <= {dev:.2g}, C = {C:.12g}")
    _spread_check(rep, cfg.band)
    rep.runtime = time.perf_counter() - t0
    return rep


# upper bound -------------------------------------------------------------

def source_modulus(cfg, N, r_top):
    """Measured source modulus on ``[4h, r_top]`` of a grid over ``Q_{r_top}``."""
    src = cfg.source_fn()
    if not callable(src) and src == 0.0:
        return None
    grid = GridSpec.on(np.zeros(cfg.n), 0.0, r_top, N, N)
    X = grid.coordinates()
    vals = np.empty((grid.M + 1,) + grid.shape)
    dom = cfg.domain_obj() if cfg.kind in ("hopf", "upper_bound") else None
    off = (np.arange(4) + 0.5) / 4 - 0.5
    mesh = np.stack(np.meshgrid(*([off] * cfg.n), indexing="ij"), axis=-1).reshape(-1, cfg.n)
    for k, t in enumerate(grid.times):
        if callable(src):
            # cell averages keep singular sources finite at the nodes
            pts = X[..., None, :] + grid.h * mesh
            v = np.mean(src(pts, t), axis=-1)
        else:
            v = np.full(grid.shape, float(src))
        if dom is not None:
            v = np.where(dom.gap(X, t) > 0, v, np.nan)
        vals[k] = v
    f = GridFunction(grid, vals, grid.times)
    radii = [r_top * 2.0 ** -j for j in range(0, 64) if r_top * 2.0 ** -j >= 4 * grid.h * (1 - 1e-12)]
    return omega_f_from_field(f, sorted(radii))


def sampled_integral(sm, a, b, f_sup, n):
    """``int_a^b omega ds/s`` for a measured modulus.

    Above the smallest measured scale the tabulated modulus is integrated;
    below it the bound ``omega_f(s) <= c_n sup|f| s`` (volume of ``Q_s``) is
    used, or a power law through the two smallest samples if ``f`` is unbounded.
    """
    if sm is None or b <= a:
        return 0.0
    xs = np.asarray(sm.scales)
    ys = np.asarray(sm.values)
    s0 = xs[0]
    total = 0.0
    if a < s0:
        lo_end = min(b, s0)
        if math.isfinite(f_sup):
            cn = (2.0 ** n) ** (1 / (n + 1)) if n == 2 else (2 * math.pi) ** (1 / (n + 1))
            total += cn * f_sup * (lo_end - a)
        else:
            beta = math.log(ys[1] / ys[0]) / math.log(xs[1] / xs[0]) if ys[0] > 0 else 1.0
            if beta <= 0:
                return math.inf
            total += ys[0] / s0 ** beta * (lo_end ** beta - a ** beta) / beta
    if b > s0:
        lo = max(a, s0)
        om = sm.as_modulus()
        hi = min(b, xs[-1])
        if hi > lo:
            total += dini_integral(om, lo, hi)
        if b > xs[-1]:
            total += ys[-1] * math.log(b / max(lo, xs[-1]))
    return total


def graph_data_modulus(cfg, data, radius, samples=4000, seed=0):
    """``sup |g - g(0,0)| / s`` over graph points of ``Q_s`` (tabulated at dyadic ``s``)."""
    rng = np.random.default_rng(seed)
    graph = cfg.graph()
    n = cfg.n
    g0 = float(data(np.zeros((1, n)), 0.0)[0])
    scales = [radius * 2.0 ** -j for j in range(0, 12)][::-1]
    vals = []
    for s in scales:
        xp = rng.uniform(-s, s, (samples, n - 1))
        t = -rng.uniform(0, s * s, samples)
        pts = np.concatenate([xp, graph(xp, t)[:, None]], axis=1)
        inside = np.all(np.abs(pts) <= s, axis=1)
        dev = np.abs(data(pts[inside], t[inside]) - g0) if inside.any() else np.zeros(1)
        vals.append(float(np.max(dev, initial=0.0)) / s)
    return SampledModulus.from_raw(scales, vals)


def run_upper_bound(cfg):
    """``sup_{Q_rho} |u - g(0,0)| / rho`` against ``(|v|/r + int(w_f + w_g)) exp(C int w)``."""
    t0 = time.perf_counter()
    rep = ExperimentReport("upper_bound")
    a = cfg.anchor
    omega = cfg.modulus() or ModulusSpec.zero(2 * a)
    dom = cfg.domain_obj()
    scales = dyadic_scales(cfg.rho_min, cfg.r_max)
    if scales[0] > a / 4 * (1 + 1e-12):
        raise ConfigError("measurement radii must satisfy rho <= r/4", key="r_max")
    if not omega.is_zero:
        c1 = check_exterior_C1(dom, omega, min(omega.eta0, 2 * a))
        rep.check("exterior_C1", c1.holds, f"margin {c1.margin:.3g}")
    r0 = 2 * a
    r_levels = [rho / cfg.zoom_ratio for rho in scales]
    depth = round(math.log2(r0 / r_levels[-1]))
    integrals = [modulus_integral(omega, rho, a) for rho in scales]
    n = cfg.n
    rng_seed = cfg.seed

    def one(N):
        levels, data = _zoom(cfg, N, depth, keep_times=(-3 * a * a,))
        g00 = float(data(np.zeros((1, n)), 0.0)[0])
        # sup |v| on Omega cap Q_rho, read off the level measuring rho
        sups = []
        for rho, rl in zip(scales, r_levels):
            sups.append(_sup_in_cylinder(level_for(levels, rl).solution, rho, g00) / rho)
        vmax = _sup_in_cylinder(levels[0].solution, a, g00)
        sm_f = source_modulus(cfg, N, a)
        sm_g = graph_data_modulus(cfg, data, a, seed=rng_seed)
        If = sampled_integral(sm_f, 0.0, a, cfg.source_sup(), n)
        Ig = sampled_integral(sm_g, 0.0, a, math.inf, n) if max(sm_g.values) > 0 else 0.0
        return levels, data, g00, np.array(sups), vmax, sm_f, sm_g, If, Ig

    results = _map(one, cfg.resolutions)
    for N, (levels, data, g00, sups, vmax, sm_f, sm_g, If, Ig) in zip(cfg.resolutions, results):
        pref = vmax / a + If + Ig
        C = fit_upper(sups, pref, integrals)
        rep.fitted[N] = C
        rep.extras[f"prefactor_{N}"] = pref
        rep.extras[f"source_integral_{N}"] = If
        for rho, mv, I in zip(scales, sups, integrals):
            pred = C * pref * math.exp(C * I)
            rep.rows.append({"resolution": N, "scale": rho, "measured": float(mv),
                             "predicted": pred, "ratio": float(mv) / pred if pred > 0 else 0.0,
                             "integral": I})
        if omega.is_zero and cfg.domain.get("family") == "flat" and cfg.source["kind"] == "zero":
            dev = float(np.max(np.abs(sups - 1)))
            rep.extras[f"max_ratio_deviation_{N}"] = dev
            rep.check(f"exact_ratio_{N}", dev <= 1e-6 and abs(C - 1) <= 1e-6,
                      f"|ratio - 1| <= {dev:.2g}, C = {C:.12g}")
        K = _boundary_modulus_constant(cfg, levels, data, g00, C, pref, sm_f, sm_g, omega)
        rep.extras[f"boundary_modulus_constant_{N}"] = K
    Ks = [rep.extras[f"boundary_modulus_constant_{N}"] for N in cfg.resolutions]
    okK = all(math.isfinite(k) and k > 0 for k in Ks) and max(Ks) / min(Ks) <= cfg.band
    rep.check("boundary_modulus", okK,
              "fitted constants " + ", ".join(f"{k:.4g}" for k in Ks) + f" (band {cfg.band:g})")
    _spread_check(rep, cfg.band)
    rep.runtime = time.perf_counter() - t0
    return rep


def _sup_in_cylinder(sol, rho, g00):
    g = sol.grid
    X = g.coordinates()
    inbox = np.all(np.abs(X) <= rho * (1 + 1e-12), axis=-1)
    sel = sol.times >= -rho * rho * (1 + 1e-12)
    vals = np.abs(sol.values[sel][:, inbox] - g00)
    return float(np.nanmax(vals)) if np.any(np.isfinite(vals)) else 0.0


def _sum_modulus(sm_f, sm_g, top):
    scales = np.geomspace(top * 2.0 ** -14, top, 57)
    vals = np.zeros_like(scales)
    for sm in (sm_f, sm_g):
        if sm is not None:
            vals = vals + np.asarray([sm(s) for s in scales])
    if not np.any(vals > 0):
        return ModulusSpec.zero(top)
    return SampledModulus.from_raw(scales, vals).as_modulus()


def _boundary_modulus_constant(cfg, levels, data, g00, C, pref, sm_f, sm_g, omega):
    """Fit ``K`` in ``|u(x,t) - u(0,0)| <= K tilde_omega(d_p)`` on sampled points."""
    a = cfg.anchor
    n = cfg.n
    om1 = _sum_modulus(sm_f, sm_g, a)
    om2 = omega if not omega.is_zero else ModulusSpec.zero(a)
    tw = tilde_omega(pref, a, C, om1, om2)
    rng = np.random.default_rng(cfg.seed)
    dom = cfg.domain_obj()
    lo, hi = cfg.rho_min, min(cfg.r_max, tw.eta0)
    pts, ts, dps = [], [], []
    need = cfg.samples
    while need > 0:
        m = 4 * need
        d = np.exp(rng.uniform(math.log(lo), math.log(hi), m))
        frac = rng.uniform(0, 1, m)            # share of d taken by the time lag
        lag = (frac * d) ** 2
        x = rng.normal(size=(m, n))
        x *= ((1 - frac) * d / np.linalg.norm(x, axis=1))[:, None]
        ok = dom.gap(x, -lag) > 0
        pts.append(x[ok][:need])
        ts.append(-lag[ok][:need])
        dps.append(d[ok][:need])
        need -= int(min(ok.sum(), need))
    x = np.concatenate(pts)
    t = np.concatenate(ts)
    d = np.concatenate(dps)
    vals = _level_values(levels, x, t, data)
    dp = parabolic_distance_arrays(x, t, np.zeros_like(x), np.zeros_like(t))
    bound = tw(np.minimum(dp, tw.eta0 * (1 - 1e-12)))
    ratio = np.abs(vals - g00) / bound
    return float(np.max(ratio))


# almost positivity ------------------------------------------------------

def lobe_data(graph, width=0.25, start=0.75):
    """Unit lobe on the graph for ``|x'| >= start``, fading off the graph over ``width``."""
    def g(x, t):
        x = np.asarray(x, dtype=float)
        rad = np.linalg.norm(x[..., :-1], axis=-1)
        gap = x[..., -1] - graph(x[..., :-1], t)
        prof = np.clip((rad - start) / (1 - start), 0.0, 1.0)
        return prof * np.clip(1 - np.maximum(gap, 0.0) / width, 0.0, 1.0)
    return g


def _single_level(cfg, N, data, keep_from):
    dom = cfg.domain_obj()
    steps = max(1, int(round(cfg.steps_per_radius2 * N * N)))
    grid = GridSpec.on(np.zeros(cfg.n), 0.0, 1.0, N, steps)
    prob = ParabolicProblem(dom, cfg.coefficient_field(), cfg.source_fn(), data, grid)
    return prob, solve(prob, keep=[-0.75], keep_from=keep_from)


def run_almost_positivity(cfg):
    """Empirical ``mu_0`` of the quantitative maximum principle."""
    t0 = time.perf_counter()
    rep = ExperimentReport("almost_positivity")
    graph = cfg.graph()
    if graph.L > 1 / 16 * (1 + 1e-12):
        raise ConfigError(f"Lipschitz constant {graph.L:g} exceeds 1/16", key="domain")
    n = cfg.n
    z = _axis_point(n, 0.5)
    pos_data = cfg.data_fn(graph)
    neg_data = lobe_data(graph)

    def one(N):
        _, up = _single_level(cfg, N, pos_data, -0.25)
        _, w = _single_level(cfg, N, neg_data, -0.25)
        return up, w

    mus = []
    for N, (up, w) in zip(cfg.resolutions, _map(one, cfg.resolutions)):
        dom = cfg.domain_obj()
        uz = float(sample(up, dom, z, -0.75, pos_data)[0])
        wz = float(sample(w, dom, z, -0.75, lambda x, t: np.zeros(len(x)))[0])
        if not uz > 1e-10:
            raise DegeneracyError("positive solution vanishes at the normalization point")
        X = up.grid.coordinates()
        inbox = np.all(np.abs(X) <= 0.5 * (1 + 1e-12), axis=-1)
        sel = up.times >= -0.25 * (1 + 1e-12)
        P = up.values[sel][:, inbox] / uz
        W = w.values[sel][:, inbox]
        fin = np.isfinite(P) & np.isfinite(W)
        P, W = P[fin], W[fin]
        excess = W - wz * P
        risky = excess > 0
        mu_star = float(np.min(P[risky] / excess[risky])) if risky.any() else math.inf
        mus.append(mu_star)
        rep.fitted[N] = mu_star
        bad = []
        for mu in cfg.mu_sweep:
            umin = float(np.min((1 + mu * wz) * P - mu * W)) if P.size else 0.0
            holds = umin >= -NONNEG_TOL
            rep.rows.append({"resolution": N, "scale": mu, "measured": umin,
                             "predicted": 0.0, "ratio": float(holds), "holds": holds})
            near = math.isfinite(mu_star) and abs(mu - mu_star) <= 1e-6 * max(mu_star, 1e-300)
            if holds != (mu <= mu_star) and not near:
                bad.append(mu)
        rep.check(f"sweep_consistent_{N}", not bad,
                  "sweep agrees with the linear threshold" if not bad else f"disagree at {bad}")
        zero_row = [r for r in rep.rows if r["resolution"] == N and r["scale"] == 0.0]
        if zero_row:
            rep.check(f"mu_zero_nonnegative_{N}", zero_row[0]["holds"],
                      f"min u = {zero_row[0]['measured']:.3g}")
        rep.check(f"mu0_positive_{N}", mu_star > 0, f"mu0 = {mu_star:.6g}")
    fin = [m for m in mus if math.isfinite(m)]
    if len(fin) == len(mus) and len(mus) > 1:
        sp = max(mus) / min(mus)
        rep.check("refinement_stability", sp <= 1.25, f"mu0 spread {sp:.4g} (<= 1.25)")
    rep.runtime = time.perf_counter() - t0
    return rep


# boundary Harnack --------------------------------------------------------

def tilted_gap(graph, tilt):
    tilt = np.asarray(tilt, dtype=float)

    def g(x, t):
        x = np.asarray(x, dtype=float)
        gap = np.maximum(x[..., -1] - graph(x[..., :-1], t), 0.0)
        return gap * (1.0 + x[..., :tilt.size] @ tilt) if tilt.size else gap
    return g


def harnack_quotient(u, v, domain, alpha=0.5, pairs=10_000, seed=0, margin=5.0, radius=0.5):
    """Ratio ``u / v`` on nodes of ``Omega cap Q_radius`` with gap above ``margin h``.

    Returns ``(sup ratio, inf ratio, Hoelder quotient, excluded count, included count)``.
    """
    grid = u.grid
    h = grid.h
    X = grid.coordinates().reshape(-1, grid.n)
    inbox = np.all(np.abs(X) <= radius * (1 + 1e-12), axis=-1)
    pts, tms, rat = [], [], []
    excluded = 0
    for k, t in enumerate(u.times):
        if t < -radius * radius * (1 + 1e-12):
            continue
        uu = u.values[k].ravel()
        vv = v.values[k].ravel()
        ok = inbox & np.isfinite(uu) & np.isfinite(vv) & (domain.gap(X, t) > margin * h)
        small = ok & (np.abs(vv) < 1e-10)
        excluded += int(small.sum())
        ok &= ~small
        pts.append(X[ok])
        tms.append(np.full(int(ok.sum()), t))
        rat.append(uu[ok] / vv[ok])
    P = np.concatenate(pts)
    T = np.concatenate(tms)
    R = np.concatenate(rat)
    if R.size < 2:
        raise DegeneracyError("too few evaluation nodes for the ratio")
    rng = np.random.default_rng(seed)
    i = rng.integers(0, R.size, pairs)
    j = rng.integers(0, R.size, pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    dp = parabolic_distance_arrays(P[i], T[i], P[j], T[j])
    q = np.abs(R[i] - R[j]) / dp ** alpha
    return float(R.max()), float(R.min()), float(q.max(initial=0.0)), excluded, int(R.size)


def run_boundary_harnack_ratio(cfg):
    """Hoelder quotient of ``u / v`` for two positive solutions vanishing on the graph."""
    t0 = time.perf_counter()
    rep = ExperimentReport("boundary_harnack")
    graph = cfg.graph()
    dom = cfg.domain_obj()
    n = cfg.n
    gu = tilted_gap(graph, cfg.data.get("u_tilt", [0.5] + [0.0] * (n - 2)))
    gv = tilted_gap(graph, cfg.data.get("v_tilt", [-0.3] + [0.0] * (n - 2)))
    z = _axis_point(n, 0.5)

    def one(N):
        _, u = _single_level(cfg, N, gu, -0.25)
        _, v = _single_level(cfg, N, gv, -0.25)
        return u, v

    for N, (u, v) in zip(cfg.resolutions, _map(one, cfg.resolutions)):
        vz = float(sample(v, dom, z, -0.75, gv)[0])
        rep.extras[f"normalization_{N}"] = vz
        rep.check(f"normalization_positive_{N}", vz > 1e-10, f"v(e_n/2, -3/4) = {vz:.6g}")
        hi, lo, q, excl, used = harnack_quotient(u, v, dom, cfg.holder_exponent,
                                                 seed=cfg.seed)
        rep.fitted[N] = q
        rep.extras[f"excluded_{N}"] = excl
        rep.rows.append({"resolution": N, "scale": u.grid.h, "measured": q, "predicted": hi,
                         "ratio": lo, "ratio_sup": hi, "ratio_inf": lo, "nodes": used})
    _spread_check(rep, cfg.band, "Hoelder quotient")
    rep.runtime = time.perf_counter() - t0
    return rep


# dyadic consistency -----------------------------------------------------

def consistency_ratios(field, ks, N, C0, coefficients=None, strict=True):
    """``||v - w||_inf / eps_{k-1}`` for each ``k`` (special solutions at ``r_k = 2^{-k-1}``).

    Returns a list of dicts with the ratio, the sup difference and both
    normalization values.
    """
    radii = sorted({2.0 ** (-k) for k in ks} | {2.0 ** (-k - 1) for k in ks}, reverse=True)
    sols = {}
    for r in radii:
        sols[r] = special_solution(field, r, nodes_per_radius=N, C0=C0,
                                   coefficients=coefficients, strict=strict)
    dom = field.domain
    n = dom.n
    zero = lambda x, t: np.zeros(np.shape(x)[0])
    out = []
    for k in ks:
        s = 2.0 ** (-k - 1)
        coarse, fine = sols[2.0 ** (-k)], sols[s]
        zk = _axis_point(n, s / 2)
        tk = -0.75 * s * s
        cz = float(sample(coarse.phi, dom, zk, tk, zero)[0])
        fz = float(sample(fine.phi, dom, zk, tk, zero)[0])
        if cz < 1e-10 or fz < 1e-10:
            raise DegeneracyError(f"normalization value below 1e-10 at k = {k}")
        grid = fine.phi.grid
        X = grid.coordinates().reshape(-1, n)
        diff = 0.0
        vz = wz = None
        for j, t in enumerate(fine.phi.times):
            w = fine.phi.values[j].ravel()
            ok = np.isfinite(w)
            if not ok.any():
                continue
            v = sample(coarse.phi, dom, X[ok], t, zero) / cz
            diff = max(diff, float(np.max(np.abs(v - w[ok] / fz))))
        vz = float(sample(coarse.phi, dom, zk, tk, zero)[0]) / cz
        wz = float(sample(fine.phi, dom, zk, tk, zero)[0]) / fz
        eps = coarse.epsilon
        if diff <= 1e-12:
            ratio = 0.0
        elif eps > 0:
            ratio = diff / eps
        else:
            ratio = math.inf
        out.append({"k": k, "ratio": ratio, "difference": diff, "epsilon": eps,
                    "v_at_z": vz, "w_at_z": wz})
    return out


def run_dyadic_consistency(field, cfg):
    """Normalized special solutions at consecutive scales, compared on ``Q_1``."""
    t0 = time.perf_counter()
    rep = ExperimentReport("dyadic_consistency")
    ks = sorted(cfg.levels)
    for N in cfg.resolutions:
        res = consistency_ratios(field, ks, N, cfg.C0, cfg.coefficient_field())
        ratios = [r["ratio"] for r in res]
        M = max(ratios)
        rep.fitted[N] = M
        for r in res:
            rep.rows.append({"resolution": N, "scale": 2.0 ** (-r["k"] - 1),
                             "measured": r["difference"], "predicted": r["epsilon"],
                             "ratio": r["ratio"], "k": r["k"]})
        norm_ok = all(r["v_at_z"] == 1.0 and r["w_at_z"] == 1.0 for r in res)
        rep.check(f"normalization_{N}", norm_ok, "v(z) = w(z) = 1")
        if M == 0:
            rep.check(f"stable_in_k_{N}", True, "all ratios vanish")
        else:
            ok = math.isfinite(M) and min(ratios) >= 0.5 * M
            rep.check(f"stable_in_k_{N}", ok,
                      f"ratios {', '.join(f'{x:.4g}' for x in ratios)} within 50% of M = {M:.4g}")
    finite = all(math.isfinite(v) for v in rep.fitted.values())
    rep.check("fitted_finite", finite, "")
    rep.runtime = time.perf_counter() - t0
    return rep


# interior modulus -------------------------------------------------------

def _level_values(levels, x, t, data):
    """Evaluate at each point on the finest level whose half-cylinder contains it."""
    x = np.atleast_2d(x)
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
    size = np.maximum(np.max(np.abs(x), axis=1), np.sqrt(np.maximum(-t, 0.0)))
    out = np.full(x.shape[0], np.nan)
    for lv in levels:
        mine = size <= lv.radius / 2 * (1 + 1e-12)
        if mine.any():
            out[mine] = lv.value(x[mine], t[mine], data)
    return out


def second_order_oscillation(levels, d, n, data):
    """Max of symmetric second differences at the origin (``|z| = d``) and the
    time increment over lag ``d^2``."""
    ang = np.linspace(0, np.pi, 8, endpoint=False)
    if n == 2:
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        dirs = np.concatenate([np.eye(3), np.stack([np.cos(ang), np.sin(ang),
                                                    np.zeros_like(ang)], axis=1)])
    c = np.zeros((1, n))
    u0 = _level_values(levels, c, 0.0, data)[0]
    up = _level_values(levels, d * dirs, 0.0, data)
    um = _level_values(levels, -d * dirs, 0.0, data)
    second = np.max(np.abs(up + um - 2 * u0))
    lag = abs(u0 - _level_values(levels, c, -d * d, data)[0])
    return float(max(second, lag))


def run_interior_modulus(cfg):
    """Increments of ``u`` against ``d int_d^4 omega_f dr/r`` on ``Q_{1/4}``."""
    t0 = time.perf_counter()
    rep = ExperimentReport("interior_modulus")
    n = cfg.n
    scales = dyadic_scales(cfg.rho_min, cfg.r_max)
    r_levels = [d / cfg.zoom_ratio for d in scales]
    depth = round(math.log2(1.0 / r_levels[-1]))
    singular = cfg.source["kind"] == "radial_power"
    beta = 1.0 - float(cfg.source.get("exponent", 0.5)) if singular else 1.0

    def one(N):
        levels, data = _zoom(cfg, N, depth, source_average=singular, domain=False)
        return levels, data

    for N, (levels, data) in zip(cfg.resolutions, _map(one, cfg.resolutions)):
        if cfg.source["kind"] == "zero":
            osc = [0.0 for _ in scales]
        else:
            # second differences need the level whose quarter radius is d
            osc = [second_order_oscillation(levels[round(math.log2(1.0 / rl)):], d, n, data)
                   for d, rl in zip(scales, r_levels)]
        om = _interior_source_modulus(cfg, N, levels)
        rng = np.random.default_rng(cfg.seed)
        rows = []
        C_fit = 0.0
        G_fit = 0.0
        for d, o in zip(scales, osc):
            x, t, y, s = _pairs_at(rng, n, d, max(cfg.samples // len(scales), 8))
            du = np.abs(_level_values(levels, x, t, data) - _level_values(levels, y, s, data))
            pred = d * sampled_integral(om, d, 4.0, cfg.source_sup(), n) if om is not None else 0.0
            meas = float(du.max())
            if pred > 0:
                C_fit = max(C_fit, meas / pred)
            elif meas > 1e-14:
                C_fit = math.inf
            if om is not None:
                gb = np.array([dyadic_green_bound(x[i], t[i], y[i], s[i], om, n=n)
                               for i in range(min(8, x.shape[0]))])
                G_fit = max(G_fit, float(np.max(du[:gb.size] / gb)))
            rows.append({"resolution": N, "scale": d, "measured": meas, "predicted": pred,
                         "ratio": meas / pred if pred > 0 else 0.0, "oscillation": o})
        rep.rows.extend(rows)
        rep.fitted[N] = C_fit
        rep.extras[f"green_constant_{N}"] = G_fit
        if cfg.source["kind"] != "zero":
            slope = float(np.polyfit(np.log(scales), np.log(osc), 1)[0])
            rep.extras[f"oscillation_exponent_{N}"] = slope
            need = 1 + beta - 0.15
            rep.check(f"oscillation_exponent_{N}", slope >= need,
                      f"slope {slope:.4g} (>= {need:.4g})")
        else:
            rep.check(f"zero_solution_{N}", max(max(r["measured"] for r in rows), 0) <= 1e-14,
                      "u = 0")
    if cfg.source["kind"] != "zero":
        _spread_check(rep, cfg.band)
        Gs = [rep.extras[f"green_constant_{N}"] for N in cfg.resolutions]
        okG = all(math.isfinite(g) and g > 0 for g in Gs) and max(Gs) / min(Gs) <= cfg.band
        rep.check("green_bound_dominates", okG,
                  "fitted constants " + ", ".join(f"{g:.4g}" for g in Gs))
    rep.runtime = time.perf_counter() - t0
    return rep


def _pairs_at(rng, n, d, count):
    """Pairs in ``Q_{1/4}`` at parabolic distance ``d``."""
    x = rng.uniform(-0.25 + d, 0.25 - d, (count, n))
    t = -rng.uniform(0, 1 / 16 - d * d, count)
    frac = rng.uniform(0, 1, count)
    dirs = rng.normal(size=(count, n))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    y = x + ((1 - frac) * d)[:, None] * dirs
    s = t - (frac * d) ** 2
    return x, t, y, s


def _interior_source_modulus(cfg, N, levels):
    """Source modulus measured on the level grids, enveloped over levels."""
    if cfg.source["kind"] == "zero":
        return None
    scales, values = [], []
    for lv in levels:
        sm = source_modulus(cfg, N, lv.radius)
        for s, v in zip(sm.scales, sm.values):
            if s <= lv.radius / 2 * (1 + 1e-12) or lv is levels[0]:
                scales.append(s)
                values.append(v)
    order = np.argsort(scales)
    xs = np.asarray(scales)[order]
    ys = np.asarray(values)[order]
    uniq, idx = np.unique(xs, return_index=True)
    ys = np.maximum.reduceat(ys, idx)
    # beyond Q_1 the source vanishes, so the L^{n+1} norm is constant there
    xs = np.append(uniq, 4.0)
    ys = np.append(ys, ys[-1])
    return SampledModulus.from_raw(xs, ys)
