"""Locally regularized distance to a graph boundary.

The parametrization height

    p(x', x_n, t) = int eta(w, sigma) Gamma(x' + x_n w, t + x_n^2 sigma) dw dsigma + x_n

is increasing in ``x_n`` for graphs with small Lipschitz constant, and the
regularized distance ``d`` solves ``p(y', d, t) = y_n``. The kernel is the
normalized polynomial bump ``(1 - |w|^2)^3_+ (1 - sigma^2)^3_+``.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize.elementwise import find_root

from .errors import ContractError, DegeneracyError, DomainError, ResolutionError
from .geometry import local_seminorm
from .quadrature import gauss_legendre, panel_rule

MAX_LIPSCHITZ = 0.1


@dataclass(frozen=True)
class MollifierKernel:
    """Even polynomial bump on ``B'_1 x (-1, 1)`` with unit mass."""

    n: int = 2

    @property
    def normalization(self):
        # int_{-1}^{1} (1 - s^2)^3 ds = 32/35; over the unit disk it is pi/4.
        time_mass = 32.0 / 35.0
        space_mass = 32.0 / 35.0 if self.n == 2 else math.pi / 4.0
        return 1.0 / (time_mass * space_mass)

    def __call__(self, w, sigma):
        w = np.asarray(w, dtype=float)
        r2 = np.sum(w * w, axis=-1) if w.ndim and w.shape[-1] == self.n - 1 else w * w
        return self.normalization * np.clip(1 - r2, 0, None) ** 3 * \
            np.clip(1 - np.asarray(sigma) ** 2, 0, None) ** 3

    def rule(self, order=16, breaks=None):
        """Product quadrature on the support.

        For ``n = 2`` the spatial axis is split at ``breaks`` (array of
        shape ``(P, k)`` of interior break points, per evaluation point).
        For ``n = 3`` a polar rule is used. Returns spatial nodes of shape
        ``(P, m, n - 1)``, time nodes ``(q,)`` and weights ``(P, m, q)``
        including the kernel values.
        """
        sx, sw = gauss_legendre(order)
        if self.n == 2:
            if breaks is None:
                breaks = np.empty((1, 0))
            b = np.clip(np.sort(breaks, axis=-1), -1.0, 1.0)
            full = np.concatenate([-np.ones(b.shape[:-1] + (1,)), b,
                                   np.ones(b.shape[:-1] + (1,))], axis=-1)
            wn, ww = panel_rule(full, order)
            prof = np.clip(1 - wn * wn, 0, None) ** 3
            nodes = wn[..., None]
            space_w = ww * prof
        else:
            rn, rw = panel_rule(np.array([0.0, 1.0]), order)
            m = 2 * order
            ang = 2 * np.pi * np.arange(m) / m
            R, A = np.meshgrid(rn, ang, indexing="ij")
            nodes = np.stack([R * np.cos(A), R * np.sin(A)], axis=-1).reshape(1, -1, 2)
            space_w = (np.outer(rw * rn, np.full(m, 2 * np.pi / m)) *
                       np.clip(1 - R * R, 0, None) ** 3).reshape(1, -1)
        time_w = sw * (1 - sx * sx) ** 3
        weights = self.normalization * space_w[..., :, None] * time_w
        return nodes, sx, weights

    def mass(self, order=16):
        _, _, w = self.rule(order)
        return float(w.sum())


@dataclass(frozen=True)
class RegularizedDistanceField:
    """Regularized distance for a :class:`~parbound.geometry.ParabolicDomain`."""

    domain: object
    kernel: MollifierKernel = None
    order: int = 16
    tol: float = 1e-13
    check_lipschitz: bool = True
    chunk: int = 2048
    _meta: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kernel is None:
            object.__setattr__(self, "kernel", MollifierKernel(self.domain.n))
        if self.kernel.n != self.domain.n:
            raise ContractError("kernel and domain dimensions differ")
        if self.check_lipschitz and self.domain.graph.L > MAX_LIPSCHITZ:
            raise ContractError(f"graph Lipschitz constant {self.domain.graph.L:.3g} "
                                f"exceeds {MAX_LIPSCHITZ}")

    @property
    def n(self):
        return self.domain.n

    # parametrization ------------------------------------------------------
    def _check_footprint(self, xp, xn, t):
        R = self.domain.graph.R
        reach = np.linalg.norm(xp, axis=-1) + xn
        if np.any(xn <= 0):
            raise DomainError("parametrization needs x_n > 0")
        if np.any(reach > R) or np.any(np.abs(t) + xn * xn > R * R):
            raise DomainError("convolution footprint leaves the graph patch")

    def _height(self, xp, xn, t):
        graph = self.domain.graph
        out = np.empty(xn.shape)
        for lo in range(0, xn.size, self.chunk):
            sl = slice(lo, lo + self.chunk)
            a, h, s = xp[sl], xn[sl], t[sl]
            if self.n == 2:
                kinks = np.array(graph.kinks(), dtype=float)
                br = (kinks[None, :] - a[:, :1]) / h[:, None] if kinks.size else None
                nodes, sig, wts = self.kernel.rule(self.order, br)
            else:
                nodes, sig, wts = self.kernel.rule(self.order)
            z = a[:, None, :] + h[:, None, None] * nodes         # (P, m, n-1)
            ts = s[:, None] + h[:, None] ** 2 * sig[None, :]     # (P, q)
            g = graph(z[:, :, None, :], ts[:, None, :])          # (P, m, q)
            out[sl] = np.sum(np.broadcast_to(wts, g.shape) * g, axis=(1, 2)) + h
        return out

    def height(self, xp, xn, t):
        """Parametrization height ``p(x', x_n, t)`` (vectorized)."""
        xp = np.atleast_2d(np.asarray(xp, dtype=float).reshape(-1, self.n - 1))
        xn = np.asarray(xn, dtype=float).ravel()
        t = np.asarray(t, dtype=float).ravel()
        xp, xn, t = _broadcast_points(xp, xn, t)
        self._check_footprint(xp, xn, t)
        return self._height(xp, xn, t)

    # inversion ----------------------------------------------------------
    def distance(self, y, t):
        """Regularized distance ``d(y, t)``; ``y`` has shape ``(..., n)``."""
        y = np.asarray(y, dtype=float)
        shape = y.shape[:-1]
        yf = y.reshape(-1, self.n)
        tf = np.broadcast_to(np.asarray(t, dtype=float), shape).ravel()
        gap = self.domain.gap(yf, tf)
        # The kernel footprint is two-sided in time, so d is defined wherever
        # the footprint stays in the graph patch, including t slightly above 0.
        if np.any(gap <= 0):
            raise DomainError("point outside the domain")
        xp = yf[:, :-1]
        target = yf[:, -1]
        R = self.domain.graph.R
        reach = np.minimum(R - np.linalg.norm(xp, axis=-1),
                           np.sqrt(np.maximum(R * R - np.abs(tf), 0.0)))
        if np.any(reach <= gap):
            raise DomainError("convolution footprint leaves the graph patch")
        lo, hi = 0.5 * gap, np.minimum(2.0 * gap, reach)

        # find_root broadcasts every arg against the bracket, so pass columns.
        def resid(xn, t_, target_, *cols):
            a = np.stack([np.ravel(c) for c in cols], axis=-1)
            return self._height(a, xn.ravel(), t_.ravel()).reshape(xn.shape) - target_

        res = find_root(resid, (lo, hi), args=(tf, target) + tuple(xp.T),
                        tolerances=dict(xatol=0.0, xrtol=4 * np.finfo(float).eps,
                                        fatol=self.tol * 1e-3, frtol=0.0))
        bad = ~res.success
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            eps = 1e-6 * gap[k]
            dn = (self._height(xp[k:k + 1], np.array([gap[k] + eps]), tf[k:k + 1]) -
                  self._height(xp[k:k + 1], np.array([gap[k] - eps]), tf[k:k + 1])) / (2 * eps)
            raise DegeneracyError(
                f"inversion bracket failed at y={yf[k].tolist()}, t={tf[k]:.6g}; "
                f"estimated d p/d x_n = {float(dn[0]):.6g}")
        # One secant step across the final bracket removes the last few ulps;
        # affine parametrizations become exact.
        x = res.x
        fx = res.f_x
        (xl, xr), (fl, fr) = res.bracket, res.f_bracket
        den = fr - fl
        step = np.where(den != 0, fx * (xr - xl) / np.where(den != 0, den, 1.0), 0.0)
        cand = x - step
        fc = resid(cand, tf, target, *xp.T)
        x = np.where(np.abs(fc) <= np.abs(fx), cand, x)
        out = x.reshape(shape)
        return float(out) if out.ndim == 0 else out

    def derivatives(self, y, t, rel_step=1e-3, min_distance=0.0):
        """Central-difference ``(grad d, d_t d, D^2 d)`` at points ``y``.

        Spatial step ``h``, the power of two nearest ``rel_step * d``; time step
        ``h^2``. The Hessian is symmetrized. Returns arrays of shapes ``(P, n)``, ``(P,)``, ``(P, n, n)``.
        """
        y = np.atleast_2d(np.asarray(y, dtype=float))
        P, n = y.shape
        t = np.broadcast_to(np.asarray(t, dtype=float), (P,)).copy()
        d0 = np.atleast_1d(self.distance(y, t))
        if np.any(d0 <= 5 * min_distance):
            raise ResolutionError("point within five grid steps of the boundary")
        # Power-of-two steps keep stencil coordinates exact in floating point.
        h = 2.0 ** np.round(np.log2(rel_step * d0))
        ht = h * h
        eye = np.eye(n)
        offs = [np.zeros(n)]
        for i in range(n):
            offs += [eye[i], -eye[i]]
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        for i, j in pairs:
            offs += [eye[i] + eye[j], eye[i] - eye[j], -eye[i] + eye[j], -eye[i] - eye[j]]
        offs = np.array(offs)
        S = len(offs)
        pts = y[:, None, :] + h[:, None, None] * offs[None, :, :]
        tt = np.repeat(t[:, None], S, axis=1)
        pts = np.concatenate([pts, y[:, None, :], y[:, None, :]], axis=1)
        tt = np.concatenate([tt, (t + ht)[:, None], (t - ht)[:, None]], axis=1)
        if np.any(self.domain.gap(pts.reshape(-1, n), tt.ravel()) <= 0):
            raise ResolutionError("difference stencil leaves the domain")
        vals = self.distance(pts.reshape(-1, n), tt.ravel()).reshape(P, S + 2)
        vals[:, 0] = d0
        grad = np.empty((P, n))
        hess = np.empty((P, n, n))
        for i in range(n):
            fp, fm = vals[:, 1 + 2 * i], vals[:, 2 + 2 * i]
            grad[:, i] = (fp - fm) / (2 * h)
            hess[:, i, i] = (fp - 2 * d0 + fm) / (h * h)
        base = 1 + 2 * n
        for k, (i, j) in enumerate(pairs):
            v = vals[:, base + 4 * k: base + 4 * k + 4]
            mixed = (v[:, 0] - v[:, 1] - v[:, 2] + v[:, 3]) / (4 * h * h)
            hess[:, i, j] = hess[:, j, i] = mixed
        dt = (vals[:, S] - vals[:, S + 1]) / (2 * ht)
        return grad, dt, 0.5 * (hess + np.transpose(hess, (0, 2, 1)))

    def height_derivatives(self, y, t, rel_step=1e-3):
        """Central differences of ``p`` at ``(y', d(y), t)``: ``(grad p, d_t p)``."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        P, n = y.shape
        t = np.broadcast_to(np.asarray(t, dtype=float), (P,))
        d = np.atleast_1d(self.distance(y, t))
        h = rel_step * d
        base = np.concatenate([y[:, :-1], d[:, None]], axis=1)
        grad = np.empty((P, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            a = base + h[:, None] * e
            b = base - h[:, None] * e
            grad[:, i] = (self.height(a[:, :-1], a[:, -1], t) -
                          self.height(b[:, :-1], b[:, -1], t)) / (2 * h)
        ht = h * h
        dtp = (self.height(base[:, :-1], d, t + ht) - self.height(base[:, :-1], d, t - ht)) / (2 * ht)
        return grad, dtp


def _broadcast_points(xp, xn, t):
    P = max(xp.shape[0], xn.size, t.size)
    xp = np.broadcast_to(xp, (P, xp.shape[1]))
    xn = np.broadcast_to(xn, (P,))
    t = np.broadcast_to(t, (P,))
    return xp, xn, t


def cone_moment(kernel, order=64):
    """``c_eta = int eta(w, sigma) |w| dw dsigma`` by an independent rule."""
    if kernel.n == 2:
        x, w = gauss_legendre(order)
        u = 0.5 * (x + 1.0)       # w in (0, 1), doubled by symmetry
        space = np.sum(0.5 * w * u * (1 - u * u) ** 3) * 2.0
    else:
        x, w = gauss_legendre(order)
        u = 0.5 * (x + 1.0)
        space = np.sum(0.5 * w * u * u * (1 - u * u) ** 3) * 2 * np.pi
    return kernel.normalization * space * (32.0 / 35.0)


# bound verification -----------------------------------------------------

@dataclass
class BoundReport:
    """Per-point deviations and the fitted constant ``C``."""

    points: np.ndarray
    times: np.ndarray
    d: np.ndarray
    ratio_gap: np.ndarray       # d / (x_n - Gamma)
    grad_norm: np.ndarray       # |grad_x d|
    scaled_second: np.ndarray   # d (|d_t d| + |D^2 d|)
    seminorm: np.ndarray

    @property
    def deviations(self):
        return np.stack([np.abs(self.ratio_gap - 1), np.abs(self.grad_norm - 1),
                         self.scaled_second], axis=1)

    def constants(self, zero_tol=1e-9):
        dev = self.deviations.max(axis=1)
        s = self.seminorm
        out = np.zeros_like(dev)
        pos = s > 0
        out[pos] = dev[pos] / s[pos]
        out[~pos & (dev > zero_tol)] = np.inf
        return out

    @property
    def C(self):
        c = self.constants()
        return float(c.max()) if c.size else 0.0

    def to_csv(self, header=()):
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        n = self.points.shape[1]
        w.writerow([f"x{i + 1}" for i in range(n)] +
                   ["t", "d", "d_over_gap", "grad_norm", "scaled_second", "seminorm"])
        for k in range(self.d.size):
            w.writerow([f"{v:.12g}" for v in self.points[k]] +
                       [f"{v:.12g}" for v in (self.times[k], self.d[k], self.ratio_gap[k],
                                              self.grad_norm[k], self.scaled_second[k],
                                              self.seminorm[k])])
        w.writerow(["summary_C", f"{self.C:.12g}"])
        return buf.getvalue()


def verify_regdist_bounds(field, points, times, seminorm_samples=2000, seed=0):
    """Evaluate the three distance ratios and the local seminorm at each point.

    The seminorm at a point is taken on the two-sided thin cylinder of radius
    ``d`` around ``(x', t)``, the footprint of the kernel at that height.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    times = np.broadcast_to(np.asarray(times, dtype=float), (points.shape[0],)).copy()
    grad, dt, hess = field.derivatives(points, times)
    d = np.atleast_1d(field.distance(points, times))
    gap = field.domain.gap(points, times)
    hnorm = np.linalg.norm(hess, axis=(1, 2))
    graph = field.domain.graph
    semi = np.array([local_seminorm(graph, points[k, :-1], times[k], d[k],
                                    samples=seminorm_samples, seed=seed + k, two_sided=True)
                     for k in range(d.size)])
    return BoundReport(points, times, d, d / gap, np.linalg.norm(grad, axis=1),
                       d * (np.abs(dt) + hnorm), semi)
