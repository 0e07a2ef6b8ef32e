"""Pucci extremal operators and the ``d^{1 +- eps}`` barriers.

``M-(H) = lam * sum(pos eig) + Lam * sum(neg eig)`` and
``M+(H) = Lam * sum(pos eig) + lam * sum(neg eig)``. For the barrier
``w = d^q`` the chain rule gives

    D^2 w = q d^{q-1} D^2 d + q (q - 1) d^{q-2} grad d grad d^T.
"""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, ContractError
from .geometry import local_seminorm

SYMMETRY_TOL = 1e-12
SUB = "sub"
SUPER = "super"


@dataclass(frozen=True)
class EllipticityPair:
    lam: float
    Lam: float

    def __post_init__(self):
        if not (0 < self.lam <= self.Lam and math.isfinite(self.Lam)):
            raise ContractError("ellipticity constants need 0 < lambda <= Lambda")


def _symmetric(H):
    H = np.asarray(H, dtype=float)
    if H.shape[-1] != H.shape[-2]:
        raise ContractError("matrix must be square")
    HT = np.swapaxes(H, -1, -2)
    scale = np.maximum(1.0, np.max(np.abs(H), axis=(-1, -2)))
    if np.any(np.max(np.abs(H - HT), axis=(-1, -2)) > SYMMETRY_TOL * scale):
        raise ContractError("matrix is not symmetric")
    return 0.5 * (H + HT)


def _pucci(H, lo, hi):
    ev = np.linalg.eigvalsh(_symmetric(H))
    out = lo * np.sum(np.where(ev > 0, ev, 0.0), axis=-1) + \
        hi * np.sum(np.where(ev < 0, ev, 0.0), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def pucci_minus(H, ell):
    """``inf Tr(A H)`` over ``lam I <= A <= Lam I`` (batched over leading axes)."""
    return _pucci(H, ell.lam, ell.Lam)


def pucci_plus(H, ell):
    """``sup Tr(A H)`` over ``lam I <= A <= Lam I``."""
    return _pucci(H, ell.Lam, ell.lam)


def extremal_matrix(H, ell, which="minus"):
    """Admissible ``A`` attaining ``M-(H)`` (``which='minus'``) or ``M+(H)``."""
    ev, V = np.linalg.eigh(_symmetric(H))
    if which == "minus":
        diag = np.where(ev > 0, ell.lam, ell.Lam)
    elif which == "plus":
        diag = np.where(ev > 0, ell.Lam, ell.lam)
    else:
        raise ContractError("which must be 'minus' or 'plus'")
    return (V * diag[..., None, :]) @ np.swapaxes(V, -1, -2)


# barriers ----------------------------------------------------------------

@dataclass(frozen=True)
class BarrierSpec:
    epsilon: float
    side: str

    def __post_init__(self):
        if not 0 <= self.epsilon < 0.5:
            raise ContractError("barrier exponent must lie in [0, 1/2)")
        if self.side not in (SUB, SUPER):
            raise ContractError("side must be 'sub' or 'super'")

    @classmethod
    def checked(cls, epsilon, side, C0, seminorm):
        """Construct after checking ``epsilon >= C0 * seminorm``."""
        if epsilon < C0 * seminorm * (1 - 1e-12):
            raise ContractError(f"epsilon {epsilon:.4g} below C0 * seminorm = {C0 * seminorm:.4g}")
        return cls(epsilon, side)

    @property
    def power(self):
        return 1 + self.epsilon if self.side == SUB else 1 - self.epsilon


def power_derivatives(d, grad, dt, hess, q):
    """``(d_t w, D^2 w)`` of ``w = d^q`` from the derivatives of ``d``."""
    d = np.asarray(d, dtype=float)
    a = q * d ** (q - 1)
    b = q * (q - 1) * d ** (q - 2)
    outer = grad[..., :, None] * grad[..., None, :]
    return a * dt, a[..., None, None] * hess + b[..., None, None] * outer


def residual_from_derivatives(spec, d, grad, dt, hess, ell):
    wt, wxx = power_derivatives(d, grad, dt, hess, spec.power)
    op = pucci_minus if spec.side == SUB else pucci_plus
    return wt - op(wxx, ell)


def barrier_residual(field, spec, points, t, ell, min_distance=0.0):
    """``d_t w - M-(D^2 w)`` for ``sub`` (want <= 0) or ``d_t w - M+(D^2 w)`` for
    ``super`` (want >= 0), with ``w = d^{1 +- eps}``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    grad, dt, hess = field.derivatives(points, t, min_distance=min_distance)
    d = np.atleast_1d(field.distance(points, t))
    return residual_from_derivatives(spec, d, grad, dt, hess, ell)


# calibration ------------------------------------------------------------

@dataclass
class CalibrationCase:
    """Derivative data of ``d`` at the sample points of one (domain, scale)."""

    family: str
    scale: float
    seminorm: float
    d: np.ndarray
    grad: np.ndarray
    dt: np.ndarray
    hess: np.ndarray

    def residuals(self, eps, ell):
        sub = residual_from_derivatives(BarrierSpec(eps, SUB), self.d, self.grad, self.dt,
                                        self.hess, ell)
        sup = residual_from_derivatives(BarrierSpec(eps, SUPER), self.d, self.grad, self.dt,
                                        self.hess, ell)
        return sub, sup

    def holds(self, eps, ell, tol):
        if eps >= 0.5:
            return False
        sub, sup = self.residuals(eps, ell)
        return bool(np.all(sub <= tol) and np.all(sup >= -tol))

    def minimal_epsilon(self, ell, tol, iters=60):
        if self.holds(0.0, ell, tol):
            return 0.0
        lo, hi = 0.0, 0.5 * (1 - 1e-9)
        if not self.holds(hi, ell, tol):
            return math.inf
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            lo, hi = (lo, mid) if self.holds(mid, ell, tol) else (mid, hi)
        return hi


def sample_calibration_points(field, r, count, seed=0, h=None):
    """Random points of ``Omega cap Q_r`` with ``d > 5 h`` (default ``h = r / 32``)."""
    h = r / 32.0 if h is None else h
    rng = np.random.default_rng(seed)
    dom = field.domain
    n = dom.n
    pts, ts = [], []
    need = count
    tries = 0
    while need > 0 and tries < 50:
        m = 4 * need + 16
        if n == 2:
            xp = rng.uniform(-r, r, (m, 1))
        else:
            ang = rng.uniform(0, 2 * np.pi, m)
            rad = r * np.sqrt(rng.uniform(0, 1, m))
            xp = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
        t = rng.uniform(-r * r, 0.0, m)
        xn = rng.uniform(-r, r, m)
        x = np.concatenate([xp, xn[:, None]], axis=1)
        ok = dom.gap(x, t) > 5 * h
        if ok.any():
            d = np.atleast_1d(field.distance(x[ok], t[ok]))
            keep = d > 5 * h
            pts.append(x[ok][keep])
            ts.append(t[ok][keep])
            need -= int(keep.sum())
        tries += 1
    if not pts:
        return np.empty((0, n)), np.empty(0)
    return np.concatenate(pts)[:count], np.concatenate(ts)[:count]


def working_seminorm(graph, r, samples=10_000, seed=0):
    """Seminorm on ``B'_{2r} x (-4r^2, 4r^2)``, which contains every kernel
    footprint of points in ``Q_r`` with ``d <= 2r``."""
    return local_seminorm(graph, np.zeros(graph.n - 1), 0.0, 2 * r, samples=samples,
                          seed=seed, two_sided=True)


def build_case(field, r, count, seed=0, h=None, family=None):
    pts, ts = sample_calibration_points(field, r, count, seed, h)
    semi = working_seminorm(field.domain.graph, r, seed=seed)
    h = r / 32.0 if h is None else h
    grad, dt, hess = field.derivatives(pts, ts, min_distance=h)
    d = np.atleast_1d(field.distance(pts, ts))
    return CalibrationCase(family or field.domain.graph.family, r, semi, d, grad, dt, hess)


@dataclass
class CalibrationReport:
    C0: float
    cases: list
    minimal_eps: list
    ell: EllipticityPair

    def to_csv(self, header=()):
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "scale", "seminorm", "minimal_epsilon", "implied_C0"])
        for c, e in zip(self.cases, self.minimal_eps):
            implied = e / c.seminorm if c.seminorm > 0 else 0.0
            w.writerow([c.family, f"{c.scale:.12g}", f"{c.seminorm:.12g}", f"{e:.12g}",
                        f"{implied:.12g}"])
        w.writerow(["summary_C0", f"{self.C0:.12g}"])
        return buf.getvalue()


def calibrate_C0(cases, ell, lo=0.1, hi=1e3, tol=1e-8, rtol=1e-8):
    """Smallest ``C0`` in ``[lo, hi]`` with both barrier signs at every sample.

    ``cases`` are :class:`CalibrationCase` records (see :func:`build_case`).
    ``epsilon = C0 * seminorm`` for each case; residual signs are required
    up to ``tol``. The upper end is lowered so that every exponent stays
    below 1/2. Raises :class:`CalibrationError` if even that end fails.
    """
    def ok(C0):
        return all(c.holds(C0 * c.seminorm, ell, tol) for c in cases)

    min_eps = [c.minimal_epsilon(ell, tol) for c in cases]
    # Exponents must stay below 1/2, which caps the useful range of C0.
    smax = max((c.seminorm for c in cases), default=0.0)
    if smax > 0:
        hi = min(hi, 0.5 * (1 - 1e-9) / smax)
    if hi < lo:
        raise CalibrationError(f"seminorm {smax:.4g} too large for any C0 >= {lo:g}")
    if not ok(hi):
        bad = [(c.family, c.scale) for c in cases if not c.holds(hi * c.seminorm, ell, tol)]
        raise CalibrationError(f"no admissible C0 up to {hi:g}; failing cases {bad}")
    if ok(lo):
        return CalibrationReport(lo, cases, min_eps, ell)
    a, b = lo, hi
    while b - a > rtol * b:
        mid = 0.5 * (a + b)
        a, b = (a, mid) if ok(mid) else (mid, b)
    return CalibrationReport(b, cases, min_eps, ell)
