"""Parabolic points, cylinders, graph domains and boundary-condition checks.

Points are split as ``x = (x', x_n)``. The cylinder ``Q_r(x, t)`` is
``B'_r(x') x (x_n - r, x_n + r) x (t - r^2, t)``; its thin variant ``Q'_r``
drops the ``x_n`` interval. A domain is the space-time epigraph
``{x_n > Gamma(x', t)}`` of a :class:`BoundaryGraph` inside ``Q_R``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError
from .moduli import ModulusSpec

GRAPH_FAMILIES = ("flat", "cone", "radial_profile", "time_wave", "sampled", "callable")


@dataclass(frozen=True)
class ParabolicPoint:
    x: tuple
    t: float

    def __post_init__(self):
        x = tuple(float(v) for v in np.atleast_1d(self.x))
        if not all(math.isfinite(v) for v in x) or not math.isfinite(self.t):
            raise ContractError("point components must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n(self):
        return len(self.x)

    @property
    def xp(self):
        return self.x[:-1]

    @property
    def xn(self):
        return self.x[-1]


def parabolic_distance(p, q):
    """``|x - y| + |t - s|^{1/2}``."""
    if p.n != q.n:
        raise ContractError("points of different dimension")
    return float(np.linalg.norm(np.subtract(p.x, q.x)) + math.sqrt(abs(p.t - q.t)))


def parabolic_distance_arrays(x, t, y, s):
    """Vectorized parabolic distance; ``x, y`` have trailing axis ``n``."""
    return np.linalg.norm(np.asarray(x) - np.asarray(y), axis=-1) + \
        np.sqrt(np.abs(np.asarray(t) - np.asarray(s)))


@dataclass(frozen=True)
class ParabolicCylinder:
    center: ParabolicPoint
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ContractError("cylinder radius must be positive")

    def contains(self, x, t, thin=False):
        """Open-cylinder membership for points ``x`` (..., n) and times ``t``."""
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center.x)
        r = self.r
        d = x - c
        ok = np.linalg.norm(d[..., :-1], axis=-1) < r
        if not thin:
            ok &= np.abs(d[..., -1]) < r
        dt = np.asarray(t, dtype=float) - self.center.t
        return ok & (dt > -r * r) & (dt < 0)


# boundary graphs ------------------------------------------------------

@dataclass(frozen=True)
class BoundaryGraph:
    """Lateral-boundary function ``Gamma(x', t)`` on a patch ``B'_R x [-R^2, R^2]``.

    Families and their ``params``:

    ``flat``            none
    ``cone``            ``slope``: ``Gamma = slope |x'|`` (negative slope opens down)
    ``radial_profile``  ``omega`` (ModulusSpec), ``sign``: ``Gamma = sign |x'| omega(|x'|)``
    ``time_wave``       ``amplitude``, ``frequency``: ``A sin(nu x_1 + nu^2 t)``
    ``sampled``         ``axes`` (x' axes), ``times``, ``values``; bilinear in
                        ``(x', -sqrt(-t))`` so the time axis is parabolically scaled
    ``callable``        ``func(xp, t)`` and a declared ``L``

    Analytic families are also evaluated for ``t > 0`` (the same formula),
    which lets cylinders reach the top of the patch symmetrically.
    """

    family: str
    params: dict = field(default_factory=dict)
    n: int = 2
    R: float = 1.0
    L: float = None
    _interp: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in GRAPH_FAMILIES:
            raise ContractError(f"unknown graph family {self.family!r}")
        if self.n not in (2, 3):
            raise ContractError("only n = 2 and n = 3 are supported")
        if not self.R > 0:
            raise ContractError("patch radius must be positive")
        object.__setattr__(self, "params", dict(self.params))
        p = self.params
        if self.family == "radial_profile":
            om = p["omega"]
            if isinstance(om, dict):
                om = ModulusSpec.from_record(om)
                p["omega"] = om
            if om.eta0 <= self.R * (1 - 1e-12) and om.family != "power":
                raise ContractError("radial profile modulus must be defined on the whole patch")
            p.setdefault("sign", 1.0)
        if self.family == "sampled":
            from scipy.interpolate import RegularGridInterpolator
            axes = [np.asarray(a, dtype=float) for a in p["axes"]]
            times = np.asarray(p["times"], dtype=float)
            if np.any(times > 0):
                raise ContractError("sampled graphs are defined for t <= 0")
            tau_axis = -np.sqrt(-times)
            order = np.argsort(tau_axis)
            vals = np.asarray(p["values"], dtype=float)
            vals = np.take(vals, order, axis=-1)
            interp = RegularGridInterpolator(tuple(axes) + (tau_axis[order],), vals,
                                             method="linear", bounds_error=False,
                                             fill_value=None)
            object.__setattr__(self, "_interp", interp)
        if self.family == "callable" and self.L is None:
            raise ContractError("callable graphs need a declared L")
        if self.L is None:
            object.__setattr__(self, "L", self._lipschitz_constant())
        if abs(float(self(np.zeros(self.n - 1), 0.0))) > 1e-12:
            raise ContractError("graph must pass through the origin")

    # constructors ---------------------------------------------------------
    @classmethod
    def flat(cls, n=2, R=1.0):
        return cls("flat", {}, n, R)

    @classmethod
    def cone(cls, slope, n=2, R=1.0):
        return cls("cone", {"slope": float(slope)}, n, R)

    @classmethod
    def radial_profile(cls, omega, sign=1.0, n=2, R=1.0):
        return cls("radial_profile", {"omega": omega, "sign": float(sign)}, n, R)

    @classmethod
    def time_wave(cls, amplitude, frequency, n=2, R=1.0):
        return cls("time_wave", {"amplitude": float(amplitude),
                                 "frequency": float(frequency)}, n, R)

    @classmethod
    def sampled(cls, axes, times, values, n=2, R=1.0, L=None):
        return cls("sampled", {"axes": axes, "times": times, "values": values}, n, R, L)

    @classmethod
    def from_callable(cls, func, L, n=2, R=1.0):
        return cls("callable", {"func": func}, n, R, float(L))

    # evaluation ---------------------------------------------------------
    def __call__(self, xp, t):
        xp = np.asarray(xp, dtype=float)
        t = np.asarray(t, dtype=float)
        fam = self.family
        p = self.params
        if fam == "flat":
            out = np.zeros(np.broadcast_shapes(xp.shape[:-1], t.shape))
        elif fam == "cone":
            out = p["slope"] * np.linalg.norm(xp, axis=-1) + 0.0 * t
        elif fam == "radial_profile":
            rho = np.linalg.norm(xp, axis=-1)
            out = p["sign"] * rho * p["omega"]._values(rho) + 0.0 * t
        elif fam == "time_wave":
            nu = p["frequency"]
            out = p["amplitude"] * np.sin(nu * xp[..., 0] + nu * nu * t)
        elif fam == "sampled":
            tt = -np.sqrt(np.maximum(-t, 0.0))
            shape = np.broadcast_shapes(xp.shape[:-1], t.shape)
            pts = np.concatenate([np.broadcast_to(xp, shape + (self.n - 1,)),
                                  np.broadcast_to(tt, shape)[..., None]], axis=-1)
            out = self._interp(pts.reshape(-1, self.n)).reshape(shape)
        else:
            # user functions may ignore t; broadcast so callers see the pair shape
            out = np.broadcast_to(np.asarray(p["func"](xp, t), dtype=float),
                                  np.broadcast_shapes(xp.shape[:-1], t.shape))
        return out

    def kinks(self):
        """Spatial locations where ``Gamma`` is not smooth (for quadrature panels)."""
        if self.family in ("cone", "radial_profile"):
            return (0.0,)
        return ()

    def _lipschitz_constant(self):
        fam = self.family
        p = self.params
        if fam == "flat":
            return 0.0
        if fam == "cone":
            return abs(p["slope"])
        if fam == "time_wave":
            return math.sqrt(2.0) * abs(p["amplitude"]) * abs(p["frequency"])
        if fam == "radial_profile":
            s = np.linspace(0.0, self.R, 20001)
            g = s * p["omega"]._values(s)
            return float(np.max(np.abs(np.diff(g)) / np.diff(s)))
        # sampled: discrete quotient over neighboring samples
        vals = np.asarray(p["values"], dtype=float)
        best = 0.0
        for k, ax in enumerate(p["axes"]):
            best = max(best, float(np.max(np.abs(np.diff(vals, axis=k))) / np.min(np.diff(ax))))
        times = np.sort(np.asarray(p["times"], dtype=float))
        if times.size > 1:
            dv = np.abs(np.diff(np.take(vals, np.argsort(p["times"]), axis=-1), axis=-1))
            best = max(best, float(np.max(dv / np.sqrt(np.diff(times)))))
        return best

    def to_record(self):
        p = dict(self.params)
        if "omega" in p:
            p["omega"] = p["omega"].to_record()
        if self.family in ("sampled", "callable"):
            raise ContractError(f"{self.family} graphs do not serialize to records")
        return {"family": self.family, "params": p, "n": self.n, "R": self.R, "L": self.L}

    @classmethod
    def from_record(cls, record):
        p = dict(record.get("params", {}))
        fam = record["family"]
        if fam == "radial_profile":
            p["omega"] = ModulusSpec.from_record(p["omega"])
        return cls(fam, p, int(record.get("n", 2)), float(record.get("R", 1.0)),
                   record.get("L"))


@dataclass(frozen=True)
class ParabolicDomain:
    """``Omega = {(x, t) in Q_R : x_n > Gamma(x', t)}``; the top ``t = 0`` is included."""

    graph: BoundaryGraph
    R: float = None

    def __post_init__(self):
        if self.R is None:
            object.__setattr__(self, "R", self.graph.R)
        if self.R > self.graph.R * (1 + 1e-12):
            raise ContractError("domain patch exceeds graph patch")

    @property
    def n(self):
        return self.graph.n

    def in_patch(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        R = self.R
        return (np.linalg.norm(x[..., :-1], axis=-1) < R) & (np.abs(x[..., -1]) < R) & \
            (t > -R * R) & (t <= 0)

    def gap(self, x, t):
        """Signed vertical gap ``x_n - Gamma(x', t)`` (no membership check)."""
        x = np.asarray(x, dtype=float)
        return x[..., -1] - self.graph(x[..., :-1], t)

    def contains(self, x, t):
        return self.in_patch(x, t) & (self.gap(x, t) > 0)


def vertical_gap(domain, x, t):
    """``x_n - Gamma(x', t)`` for points of the domain."""
    x = np.asarray(x, dtype=float)
    if not np.all(domain.contains(x, t)):
        raise DomainError("point outside the domain")
    g = domain.gap(x, t)
    return float(g) if np.ndim(g) == 0 else g


def lateral_boundary_distance(domain, x, t, points_per_axis=33, rounds=3):
    """Estimate ``inf d_p((x, t), graph)`` by refined grid minimization.

    The search box is ``x' +- V`` in space and ``t +- V^2`` in time, with
    ``V`` the vertical gap (the vertical foot is always a candidate). Each
    round recenters at the best sample and shrinks the box by a factor 4.
    ``s = t + sigma |sigma|`` concentrates time samples near ``t``.
    """
    x = np.asarray(x, dtype=float)
    t = float(t)
    V = vertical_gap(domain, x, t)
    graph = domain.graph
    m = points_per_axis
    u = np.linspace(-1.0, 1.0, m)
    nsp = domain.n - 1
    R = domain.R
    best = V
    cx = x[:-1].copy()
    cs = 0.0            # parabolic time offset sigma, s = t + sigma |sigma|
    half_x = V
    half_sig = V
    for _ in range(rounds + 1):
        axes = [cx[k] + half_x * u for k in range(nsp)] + [cs + half_sig * u]
        mesh = np.meshgrid(*axes, indexing="ij")
        yp = np.stack(mesh[:-1], axis=-1).reshape(-1, nsp)
        sig = mesh[-1].ravel()
        s = t + sig * np.abs(sig)
        ok = (np.linalg.norm(yp, axis=1) < R) & (s >= -R * R) & (s <= R * R)
        if not ok.any():
            break
        yp, sig, s = yp[ok], sig[ok], s[ok]
        yn = graph(yp, s)
        dist = np.sqrt(np.sum((yp - x[:-1]) ** 2, axis=1) + (yn - x[-1]) ** 2) + np.abs(sig)
        k = int(np.argmin(dist))
        if dist[k] < best:
            best = float(dist[k])
        cx = yp[k]
        cs = sig[k]
        half_x /= 4.0
        half_sig /= 4.0
    return best


def local_seminorm(graph, xp, t, r, samples=10_000, seed=0, two_sided=False):
    """Sampled parabolic Lipschitz seminorm of ``Gamma`` on ``Q'_r(x', t)``.

    Pairs are drawn four ways: pairs through the center (pure space and pure
    time), consecutive points of a fine lattice along each axis, random far
    pairs, and random near-diagonal pairs with log-uniform offset scale.
    ``two_sided`` uses the time window ``(t - r^2, t + r^2)``.
    """
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    nsp = xp.size
    rng = np.random.default_rng(seed)
    t_hi = r * r if two_sided else 0.0

    def draw(k):
        if nsp == 1:
            d = rng.uniform(-r, r, size=(k, 1))
        else:
            ang = rng.uniform(0, 2 * np.pi, k)
            rad = r * np.sqrt(rng.uniform(0, 1, k))
            d = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
        return xp + d, t + rng.uniform(-r * r, t_hi, k)

    nfar = samples // 3
    nnear = samples // 3
    ncen = samples - nfar - nnear
    p1, s1 = draw(nfar)
    p2, s2 = draw(nfar)
    a, sa = draw(nnear)
    scale = r * 10.0 ** rng.uniform(-6, 0, nnear)
    direc = rng.normal(size=(nnear, nsp + 1))
    direc /= np.linalg.norm(direc, axis=1, keepdims=True)
    b = a + scale[:, None] * direc[:, :nsp]
    sb = sa + np.sign(direc[:, -1]) * (scale * direc[:, -1]) ** 2
    # Center pairs: a fraction in pure space, a fraction in pure time.
    c, sc = draw(ncen)
    cen = np.broadcast_to(xp, c.shape)
    pure_t = np.arange(ncen) % 3 == 2
    c[pure_t] = xp
    sc[~pure_t] = t
    # Consecutive pairs on a fine lattice along each spatial axis and in time.
    u = np.linspace(-1.0, 1.0, 513) * r * (1 - 1e-9)
    lat_a, lat_b, lat_s, lat_sb = [], [], [], []
    for k in range(nsp):
        line = np.repeat(xp[None, :], u.size, axis=0)
        line[:, k] += u
        lat_a.append(line[:-1])
        lat_b.append(line[1:])
        lat_s.append(np.full(u.size - 1, t))
        lat_sb.append(np.full(u.size - 1, t))
    ts = t - r * r + (r * r + t_hi) * (u / r + 1.0) / 2.0
    lat_a.append(np.repeat(xp[None, :], u.size - 1, axis=0))
    lat_b.append(np.repeat(xp[None, :], u.size - 1, axis=0))
    lat_s.append(ts[:-1])
    lat_sb.append(ts[1:])
    P = np.concatenate([p1, a, cen] + lat_a)
    S = np.concatenate([s1, sa, np.full(ncen, t)] + lat_s)
    Qx = np.concatenate([p2, b, c] + lat_b)
    Qs = np.concatenate([s2, sb, sc] + lat_sb)
    inside = np.linalg.norm(Qx - xp, axis=1) <= r
    inside &= (Qs >= t - r * r) & (Qs <= t + t_hi)
    P, S, Qx, Qs = P[inside], S[inside], Qx[inside], Qs[inside]
    den = np.linalg.norm(P - Qx, axis=1) + np.sqrt(np.abs(S - Qs))
    keep = den > 0
    num = np.abs(graph(P[keep], S[keep]) - graph(Qx[keep], Qs[keep]))
    if not keep.any():
        return 0.0
    return float(np.max(num / den[keep]))


# pointwise C^1 conditions ----------------------------------------------

@dataclass(frozen=True)
class C1Check:
    holds: bool
    witness: tuple = None       # (x', t, Gamma, bound)
    margin: float = math.inf    # min over samples of bound - Gamma (interior)

    def csv_row(self):
        if self.witness is None:
            return ["holds", "", "", "", "", repr(self.margin)]
        xp, t, g, b = self.witness
        return ["fails", " ".join(repr(float(v)) for v in xp), repr(t), repr(g), repr(b),
                repr(self.margin)]


def _c1_samples(n, eta0, omega, levels_per_octave=4, octaves=40, splits=9, directions=8):
    top = min(eta0, omega.eta0)
    k = np.arange(levels_per_octave * octaves + 1)
    rho = top * 2.0 ** (-k / levels_per_octave) * (1 - 1e-9)
    theta = np.linspace(0.0, 1.0, splits)
    if n == 2:
        dirs = np.array([[1.0], [-1.0]])
    else:
        a = np.linspace(0, 2 * np.pi, directions, endpoint=False)
        dirs = np.stack([np.cos(a), np.sin(a)], axis=1)
    R, TH, D = np.meshgrid(rho, theta, np.arange(len(dirs)), indexing="ij")
    R, TH, D = R.ravel(), TH.ravel(), D.ravel()
    xp = (TH * R)[:, None] * dirs[D]
    t = -((1.0 - TH) * R) ** 2
    ok = (np.linalg.norm(xp, axis=1) < eta0) & (t > -eta0 * eta0)
    return xp[ok], t[ok], R[ok]


def _check_c1(domain, omega, eta0, sign):
    xp, t, rho = _c1_samples(domain.n, eta0, omega)
    bound = rho * omega._values(rho)
    g = domain.graph(xp, t)
    if sign > 0:
        bad = (g > bound * (1 + 1e-12) + 1e-15) & (bound < eta0)
        margin = float(np.min(bound - g))
    else:
        bad = (g < -bound * (1 + 1e-12) - 1e-15) & (bound < eta0)
        margin = float(np.min(g + bound))
    if not bad.any():
        return C1Check(True, None, margin)
    idx = np.flatnonzero(bad)
    k = idx[np.argmin(rho[idx])]
    return C1Check(False, (tuple(xp[k]), float(t[k]), float(g[k]), float(sign * bound[k])),
                   margin)


def check_interior_C1(domain, omega, eta0):
    """Check ``Gamma <= rho omega(rho)`` with ``rho = |x'| + |t|^{1/2}`` on ``Q_eta0``.

    Samples accumulate geometrically toward the origin; on failure the
    witness is the violating sample closest to it.
    """
    return _check_c1(domain, omega, eta0, +1)


def check_exterior_C1(domain, omega, eta0):
    """Check ``Gamma >= -rho omega(rho)`` (mirror of :func:`check_interior_C1`)."""
    return _check_c1(domain, omega, eta0, -1)
