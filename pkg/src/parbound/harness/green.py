"""Four-region dyadic bound for ``|u(x,t) - u(y,s)|`` with ``u = G * f``.

Gaussian bounds ``|G| <= C tau^{-n/2} exp(-c |z|^2 / tau)`` and
``|grad G| <= C tau^{-(n+1)/2} exp(-c |z|^2 / tau)`` are integrated against
``|f|`` over a partition of the past of ``(x, t)`` into space shells
``S_k`` (the ball ``|z| < 2r`` for ``k = 0``, else ``2^k r <= |z| < 2^{k+1} r``)
and time shells ``T_l`` (lag ``< 4 r^2`` for ``l = 0``, else
``4^l r^2 <= lag < 4^{l+1} r^2``), ``k, l <= M`` with ``M`` minimal such that
``2^{M+1} r >= 5/4``. The four regions are

* near: ``S_0 x T_0``, both kernels bounded separately;
* annuli x recent times: ``S_k x T_0``, ``k >= 1``;
* balls x dyadic past: ``(union_{k <= l} S_k) x T_l``, ``l >= 1``;
* annuli x dyadic past: ``S_k x T_l``, ``k > l >= 1``.

Away from the near region the difference of kernels is bounded by ``r``
times the gradient bound at the distance shrunk by ``r``. On each piece
Hoelder's inequality pairs the ``L^{(n+1)/n}`` norm of the kernel with
``||f||_{L^{n+1}(Q_rho)} = rho^{1/(n+1)} omega_f(rho)``. After scaling out
``r`` every kernel norm is ``r``-independent, so the bound is ``r`` times a
weighted sum of ``omega_f`` at dyadic radii.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegeneracyError
from ..geometry import parabolic_distance_arrays
from ..moduli import ModulusSpec

F_RADIUS_CAP = 4.0


def unit_ball_volume(n):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def dyadic_depth(r):
    """Minimal ``M`` with ``2^{M+1} r >= 5/4``."""
    M = max(0, math.ceil(math.log2(1.25 / r) - 1 - 1e-12))
    while 2.0 ** (M + 1) * r < 1.25:
        M += 1
    return M


@dataclass(frozen=True)
class Piece:
    region: str
    k: int
    l: int
    space: tuple      # (inner, outer) radius in units of r
    time: tuple       # (min lag, max lag) in units of r^2
    rho: float        # radius (units of r) of a cylinder containing the piece
    kernel: str       # "value" or "gradient"


def pieces(M):
    out = [Piece("near", 0, 0, (0.0, 2.0), (0.0, 4.0), 3.0, "value"),
           Piece("near", 0, 0, (0.0, 3.0), (0.0, 5.0), 3.0, "value")]

    def shell(k):
        return (0.0, 2.0) if k == 0 else (2.0 ** k, 2.0 ** (k + 1))

    def tshell(l):
        return (0.0, 4.0) if l == 0 else (4.0 ** l, 4.0 ** (l + 1))

    for k in range(1, M + 1):
        out.append(Piece("annuli_recent", k, 0, shell(k), tshell(0), 2.0 ** (k + 1), "gradient"))
    for l in range(1, M + 1):
        out.append(Piece("balls_past", 0, l, (0.0, 2.0 ** (l + 1)), tshell(l), 2.0 ** (l + 1),
                         "gradient"))
        for k in range(l + 1, M + 1):
            out.append(Piece("annuli_past", k, l, shell(k), tshell(l), 2.0 ** (k + 1),
                             "gradient"))
    return out


def _value_norm(piece, n, c, C):
    """Closed-form bound on ``||C tau^{-n/2} e^{-c z^2/tau}||_{L^q}`` over the piece.

    The spatial integral is extended to the whole space.
    """
    q = (n + 1) / n
    T = piece.time[1]
    mass = C ** q * (math.pi / (c * q)) ** (n / 2) * 2 * math.sqrt(T) if T > 0 else 0.0
    return mass ** (1 / q)


def _gradient_norm(piece, n, c, C):
    """Sup of the shifted gradient kernel over the piece times volume^{1/q}."""
    q = (n + 1) / n
    a, b = piece.space
    lo, hi = piece.time
    zeta = max(a - 1.0, 0.0)
    m = (n + 1) / 2
    A = c * zeta * zeta
    if A == 0:
        if lo <= 0:
            raise DegeneracyError("gradient kernel is singular on this piece")
        sup = lo ** (-m)
    else:
        ts = min(max(A / m, lo), hi)
        sup = ts ** (-m) * math.exp(-A / ts) if ts > 0 else 0.0
    vol = unit_ball_volume(n) * (b ** n - a ** n) * (hi - lo)
    return C * sup * vol ** (1 / q)


def piece_norms(n, M, c=0.25, C=1.0):
    """Scaled kernel norms for every piece (closed-form bounds)."""
    out = []
    for p in pieces(M):
        f = _value_norm if p.kernel == "value" else _gradient_norm
        out.append((p, f(p, n, c, C)))
    return out


def _omega(om, s):
    if isinstance(om, ModulusSpec):
        return float(om._values(np.asarray(min(s, om.eta0))))
    return float(om(s))


def assemble(r, n, omega_f, norms):
    """``r * sum_P rho_P^{1/(n+1)} omega_f(rho_P r) N_P``, with radii capped at 4.

    The cap is valid because ``rho^{1/(n+1)} omega_f(rho)`` is the
    ``L^{n+1}`` norm of ``f`` on ``Q_rho``, which is nondecreasing in ``rho``.
    """
    terms = {}
    for p, N in norms:
        rho = min(p.rho * r, F_RADIUS_CAP)
        val = r * (rho / r) ** (1 / (n + 1)) * _omega(omega_f, rho) * N
        terms[p.region] = terms.get(p.region, 0.0) + val
    return sum(terms.values()), terms


def dyadic_green_bound(x, t, y, s, omega_f, c=0.25, C=1.0, n=None, detail=False):
    """Evaluate the four-region bound at the pair ``(x, t), (y, s)``.

    ``omega_f`` is a :class:`ModulusSpec` (evaluated up to its ``eta0``) or a
    sampled modulus. Returns the bound, or ``(bound, terms)`` with
    ``detail=True``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = n or x.size
    r = float(parabolic_distance_arrays(x[None], np.array([t]), y[None], np.array([s]))[0])
    if not r > 0:
        raise DegeneracyError("the two points coincide")
    M = dyadic_depth(r)
    if getattr(omega_f, "is_zero", False):
        return (0.0, {}) if detail else 0.0
    bound, terms = assemble(r, n, omega_f, piece_norms(n, M, c, C))
    return (bound, terms) if detail else bound


def tail_factor(m, n, c_prime):
    return 2.0 ** (m * (n * n + 1) / (n + 1)) * math.exp(-c_prime * 4.0 ** m)


def dyadic_tail(n, c_prime, terms=40):
    """``sum_{m=1}^{terms} 2^{m (n^2+1)/(n+1)} exp(-c' 4^m)`` (annuli-past weights)."""
    return math.fsum(tail_factor(m, n, c_prime) for m in range(1, terms + 1))
