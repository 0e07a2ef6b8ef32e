"""Moduli of continuity: evaluation, Dini tests, the weighted-exponential
transform and measurement of a source modulus from a grid field.

A modulus is described by a :class:`ModulusSpec` record ``{family, params,
eta0}``. Built-in families are

``power``            ``c * s**alpha``
``log_inverse``      ``kappa / log(e/s)**p``
``tabulated``        monotone linear interpolation through ``(scales, values)``
                     with the origin prepended

A modulus measured from data is a :class:`SampledModulus`.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError, ResolutionError
from .quadrature import adaptive_simpson

DINI = "dini"
NOT_DINI = "not_dini"
INCONCLUSIVE = "inconclusive"
YES = "yes"
NO = "no"

FAMILIES = ("power", "log_inverse", "tabulated")


@dataclass(frozen=True)
class ModulusSpec:
    """Parameterized modulus of continuity on ``[0, eta0)``."""

    family: str
    params: dict = field(default_factory=dict)
    eta0: float = 1.0
    _table: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractError(f"unknown modulus family {self.family!r}")
        if not (self.eta0 > 0 and math.isfinite(self.eta0)):
            raise ContractError("eta0 must be a positive finite number")
        p = self.params
        if self.family == "power":
            if p.get("alpha", 0) <= 0 or p.get("coef", 1.0) < 0:
                raise ContractError("power modulus needs alpha > 0 and coef >= 0")
        elif self.family == "log_inverse":
            if p.get("kappa", 0) < 0 or p.get("power", 1.0) <= 0:
                raise ContractError("log_inverse modulus needs kappa >= 0 and power > 0")
            if self.eta0 > math.e:
                raise ContractError("log_inverse modulus is only defined below e")
        else:
            xs = np.asarray(p.get("scales", ()), dtype=float)
            ys = np.asarray(p.get("values", ()), dtype=float)
            if xs.ndim != 1 or xs.shape != ys.shape or xs.size == 0:
                raise ContractError("tabulated modulus needs matching 1-d scales and values")
            if np.any(np.diff(xs) <= 0) or xs[0] <= 0:
                raise ContractError("tabulated scales must be positive and strictly increasing")
            if np.any(ys < 0) or np.any(np.diff(ys) < 0):
                raise ContractError("tabulated values must be nonnegative and nondecreasing")
            if xs[-1] < self.eta0 * (1 - 1e-12):
                raise ContractError("tabulated scales must reach eta0")
            object.__setattr__(self, "_table", (np.concatenate([[0.0], xs]),
                                                np.concatenate([[0.0], ys])))

    # constructors -------------------------------------------------------
    @classmethod
    def power(cls, alpha, coef=1.0, eta0=1.0):
        return cls("power", {"alpha": float(alpha), "coef": float(coef)}, float(eta0))

    @classmethod
    def log_inverse(cls, kappa, power=1.0, eta0=1.0):
        return cls("log_inverse", {"kappa": float(kappa), "power": float(power)}, float(eta0))

    @classmethod
    def tabulated(cls, scales, values, eta0=None):
        scales = tuple(float(v) for v in scales)
        values = tuple(float(v) for v in values)
        if eta0 is None:
            eta0 = scales[-1]
        return cls("tabulated", {"scales": scales, "values": values}, float(eta0))

    @classmethod
    def zero(cls, eta0=1.0):
        return cls.tabulated((eta0,), (0.0,), eta0)

    # evaluation ---------------------------------------------------------
    def _values(self, s):
        s = np.asarray(s, dtype=float)
        p = self.params
        if self.family == "power":
            return p.get("coef", 1.0) * np.power(s, p["alpha"])
        if self.family == "log_inverse":
            out = np.zeros_like(s)
            pos = s > 0
            out[pos] = p["kappa"] / np.log(math.e / s[pos]) ** p.get("power", 1.0)
            return out
        xs, ys = self._table
        return np.interp(s, xs, ys)

    def __call__(self, s):
        return eval_modulus(self, s)

    @property
    def is_zero(self):
        if self.family == "tabulated":
            return not np.any(self._table[1] > 0)
        if self.family == "power":
            return self.params.get("coef", 1.0) == 0
        return self.params["kappa"] == 0

    def to_record(self):
        params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()}
        return {"family": self.family, "params": params, "eta0": self.eta0}

    @classmethod
    def from_record(cls, record):
        try:
            family = record["family"]
            params = dict(record.get("params", {}))
            eta0 = float(record.get("eta0", 1.0))
        except (KeyError, TypeError, AttributeError) as exc:
            raise ContractError(f"malformed modulus record: {record!r}") from exc
        if family == "tabulated":
            return cls.tabulated(params["scales"], params["values"], eta0)
        return cls(family, {k: float(v) for k, v in params.items()}, eta0)


def eval_modulus(omega, s):
    """Evaluate ``omega`` at ``s`` (scalar or array) on ``[0, eta0)``."""
    arr = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr >= omega.eta0):
        raise DomainError(f"modulus argument outside [0, {omega.eta0})")
    out = omega._values(arr)
    return float(out) if out.ndim == 0 else out


def check_modulus(omega, samples=1000, upper=None):
    """Verify ``omega(0) = 0`` and strict monotonicity on a dense grid.

    Returns ``True`` or raises :class:`ContractError`. The zero modulus is
    accepted as the degenerate case.
    """
    upper = omega.eta0 if upper is None else min(upper, omega.eta0)
    s = np.linspace(0.0, upper, samples + 1)[:-1]
    v = omega._values(s)
    if v[0] != 0:
        raise ContractError("modulus does not vanish at 0")
    if omega.is_zero:
        return True
    if np.any(np.diff(v) <= 0):
        k = int(np.argmax(np.diff(v) <= 0))
        raise ContractError(f"modulus not strictly increasing near s={s[k]:.6g}")
    return True


# Dini integrals ---------------------------------------------------------

def dini_integral(omega, a, b, rtol=1e-8):
    """``int_a^b omega(s) ds / s`` by adaptive Simpson in ``u = log s``."""
    if not a > 0:
        raise DomainError("lower limit must be positive; use is_dini for the limit at 0")
    if not b > a:
        raise DomainError("need a < b")
    if b > omega.eta0 * (1 + 1e-12):
        raise DomainError(f"upper limit exceeds eta0={omega.eta0}")
    if omega.is_zero:
        return 0.0
    return adaptive_simpson(lambda u: omega._values(np.exp(u)), math.log(a), math.log(b),
                            rtol=rtol)


def closed_form_dini(omega, a, b):
    """Exact ``int_a^b omega ds/s`` for the power and log_inverse families.

    ``a = 0`` is allowed for the power family.
    """
    p = omega.params
    if omega.family == "power":
        al = p["alpha"]
        return p.get("coef", 1.0) * (b**al - a**al) / al
    if omega.family == "log_inverse":
        if a <= 0:
            return math.inf
        q = p.get("power", 1.0)
        ua, ub = 1.0 - math.log(a), 1.0 - math.log(b)
        if q == 1.0:
            return p["kappa"] * (math.log(ua) - math.log(ub))
        return p["kappa"] * (ua ** (1 - q) - ub ** (1 - q)) / (1 - q)
    raise ContractError("closed form only for power and log_inverse")


def _classify_increments(inc, k):
    """Three-valued convergence verdict for a positive increment sequence."""
    inc = np.maximum(np.asarray(inc, dtype=float), 0.0)
    if inc[-1] < 1e-12 and np.all(inc[-8:] < 1e-6):
        return DINI
    tail = inc[-12:]
    if np.any(tail <= 0):
        return DINI if np.all(tail < 1e-6) else INCONCLUSIVE
    kk = np.asarray(k[-12:], dtype=float)
    # Algebraic decay exponent against log(e / eps_k) and geometric ratio in k.
    q = -np.polyfit(np.log1p(kk * math.log(2.0)), np.log(tail), 1)[0]
    ratio = math.exp(np.polyfit(kk, np.log(tail), 1)[0])
    if ratio < 0.97 or q > 1.2:
        return DINI
    if q <= 1.05:
        return NOT_DINI
    return INCONCLUSIVE


def _shell_increments(omega, weight, kmin=4, kmax=40):
    top = min(1.0, omega.eta0)
    ks = np.arange(kmin, kmax + 1)
    inc = []
    for k in ks:
        lo, hi = top * 2.0 ** (-k - 1), top * 2.0 ** (-k)
        f = (lambda u: omega._values(np.exp(u))) if weight is None else \
            (lambda u: omega._values(np.exp(u)) * weight(u))
        inc.append(adaptive_simpson(f, math.log(lo), math.log(hi), rtol=1e-8))
    return np.array(inc), ks


def is_dini(omega):
    """Classify ``int_0 omega ds/s`` as ``dini``, ``not_dini`` or ``inconclusive``.

    The shell increments ``int_{2^{-k-1}}^{2^{-k}} omega ds/s``, k = 4..40,
    decide: tail below 1e-6, geometric decay, or algebraic decay faster than
    ``log(e/s)**-1.2`` means convergence; decay no faster than
    ``log(e/s)**-1.05`` means divergence.
    """
    if omega.is_zero:
        return DINI
    inc, ks = _shell_increments(omega, None)
    return _classify_increments(inc, ks)


def is_double_dini(omega):
    """Classify the iterated integral ``int (dxi/xi) int_0^xi omega ds/s``.

    By Fubini the iterated integral equals ``int_0^eta omega(s) log(eta/s) ds/s``,
    which is tested on dyadic shells as in :func:`is_dini`.
    """
    if omega.is_zero:
        return YES
    if is_dini(omega) == NOT_DINI:
        return NO
    top = math.log(min(1.0, omega.eta0))
    inc, ks = _shell_increments(omega, lambda u: top - u)
    verdict = _classify_increments(inc, ks)
    return {DINI: YES, NOT_DINI: NO}.get(verdict, INCONCLUSIVE)


# weighted-exponential transform ----------------------------------------

def tilde_omega(a, b, c, omega1, omega2, per_octave=16, octaves=40):
    """Tabulate ``theta (a + int_theta^b w1 ds/s) exp(c int_theta^b w2 ds/s)``.

    The table runs over ``theta = b 2^{-j/per_octave}``, ``j <= per_octave * octaves``.
    The returned modulus is restricted to the largest initial interval on
    which the tabulated values increase strictly; that interval end is its
    ``eta0``.
    """
    if not 0 < b <= min(omega1.eta0, omega2.eta0):
        raise DomainError("b must lie in the domain of both moduli")
    j = np.arange(per_octave * octaves, -1, -1)
    theta = b * 2.0 ** (-j / per_octave)

    def cumulative(om):
        if om.is_zero:
            return np.zeros_like(theta)
        panels = np.array([dini_integral(om, lo, hi)
                           for lo, hi in zip(theta[:-1], theta[1:])])
        tail = np.concatenate([np.cumsum(panels[::-1])[::-1], [0.0]])
        return tail

    i1 = cumulative(omega1)
    i2 = cumulative(omega2)
    vals = theta * (a + i1) * np.exp(c * i2)
    inc = np.diff(vals) > 0
    stop = vals.size if inc.all() else int(np.argmin(inc)) + 1
    if stop < 2:
        raise DomainError("transform is not increasing on any tabulated interval")
    return ModulusSpec.tabulated(theta[:stop], vals[:stop])


# sampled moduli -------------------------------------------------------

@dataclass(frozen=True)
class SampledModulus:
    """Modulus measured at discrete scales, monotone after enveloping."""

    scales: tuple
    values: tuple

    def __post_init__(self):
        xs = np.asarray(self.scales, dtype=float)
        if xs.ndim != 1 or xs.size != len(self.values) or np.any(np.diff(xs) <= 0):
            raise ContractError("sampled scales must be sorted and match values")

    @classmethod
    def from_raw(cls, scales, values):
        order = np.argsort(scales)
        xs = np.asarray(scales, dtype=float)[order]
        ys = np.maximum.accumulate(np.asarray(values, dtype=float)[order])
        return cls(tuple(xs), tuple(ys))

    def __call__(self, s):
        return np.interp(s, np.concatenate([[0.0], self.scales]),
                         np.concatenate([[0.0], self.values]))

    def as_modulus(self):
        return ModulusSpec.tabulated(self.scales, self.values)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scale", "value"])
        for s, v in zip(self.scales, self.values):
            w.writerow([repr(float(s)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        data = np.array(rows[1:], dtype=float).reshape(-1, 2)
        return cls(tuple(data[:, 0]), tuple(data[:, 1]))


def _window_sum(arr, axis, lo, hi, step):
    """Integrate a cellwise-constant field over ``[x_i + lo, x_i + hi]``.

    Cell ``i`` occupies ``[x_i - step/2, x_i + step/2]``; outside the array
    the field is zero.
    """
    n = arr.shape[axis]
    a = np.moveaxis(arr, axis, 0)
    cum = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a, axis=0)]) * step

    def prim(offset):
        # Primitive at x_i + offset measured in cells from the lower edge of cell 0.
        pos = np.arange(n) + 0.5 + offset / step
        pos = np.clip(pos, 0.0, n)
        k = np.minimum(np.floor(pos).astype(int), n - 1)
        frac = (pos - k)[(slice(None),) + (None,) * (a.ndim - 1)]
        return cum[k] + frac * a[k] * step

    out = prim(hi) - prim(lo)
    return np.moveaxis(out, 0, axis)


def _disk_weights(r, h, sub=8):
    """Fractional overlap of square cells of side ``h`` with a disk of radius ``r``."""
    m = int(math.ceil(r / h + 0.5))
    offs = (np.arange(sub) + 0.5) / sub - 0.5
    c = np.arange(-m, m + 1)
    px = (c[:, None] + offs[None, :]).ravel() * h
    X, Y = np.meshgrid(px, px, indexing="ij")
    inside = (X**2 + Y**2 < r * r).astype(float)
    k = 2 * m + 1
    return inside.reshape(k, sub, k, sub).mean(axis=(1, 3)) * h * h


def omega_f_from_field(f, radii):
    """Measure ``omega_f(r) = sup r^{-1/(n+1)} ||f||_{L^{n+1}(Q_r)}`` on a grid.

    ``f`` is a grid function whose ``values`` have shape ``(times, *space)``
    with NaN outside the domain; NaN cells contribute zero. The sup runs
    over grid centers inside the domain, with the backward cylinder
    ``B'_r x (x_n - r, x_n + r) x (t - r^2, t)`` integrated with fractional
    cell overlap. A cumulative-max envelope makes the result monotone.
    """
    grid = f.grid
    h = grid.h
    tau = grid.tau
    vals = np.asarray(f.values, dtype=float)
    n = vals.ndim - 1
    radii = np.sort(np.asarray(radii, dtype=float))
    if np.any(radii < 4 * h * (1 - 1e-12)):
        raise ResolutionError(f"radii must be at least 4 grid spacings (h={h:g})")
    inside = np.isfinite(vals)
    dens = np.where(inside, np.abs(np.nan_to_num(vals)) ** (n + 1), 0.0)
    out = []
    for r in radii:
        acc = _window_sum(dens, 0, -r * r, 0.0, tau)
        acc = _window_sum(acc, n, -r, r, h)
        if n == 2:
            acc = _window_sum(acc, 1, -r, r, h)
        elif n >= 3:
            from scipy.ndimage import correlate
            w = _disk_weights(r, h)
            kern = w.reshape((1,) + w.shape + (1,) * (n - 2))
            acc = correlate(acc, kern, mode="constant", cval=0.0)
        best = float(np.max(np.where(inside, acc, 0.0)))
        out.append(r ** (-1.0 / (n + 1)) * max(best, 0.0) ** (1.0 / (n + 1)))
    return SampledModulus.from_raw(radii, out)
