"""Finite-difference solver for ``d_t u - sum a_ij d_ij u = f`` on ``Omega cap Q_r``.

Nodes of the box grid are classified per time slice. Unknowns are the
nodes strictly inside the box with positive vertical gap; grid lines that
leave the domain through the graph are cut at the crossing, found by
root-finding on ``x_n - Gamma``, and the second difference on that line uses
Shortley-Weller unequal arms with the Dirichlet value at the cut. Mixed
derivatives use the monotone 7-point form (two quadrant differences
oriented by the sign of ``a_ij``); near the boundary a single admissible
quadrant is used. Time stepping is implicit Euler by default.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize.elementwise import find_root
from scipy.sparse.linalg import splu

from .errors import ContractError, PropertyFailure, SolverError
from .grid import GridFunction, GridSpec

INTERIOR = 0
BOUNDARY_ADJACENT = 1
EXTERIOR = 2
DIRICHLET = 3

TINY_GAP = 1e-6       # nodes closer than this fraction of h to the graph are boundary nodes
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class CoefficientField:
    """Symmetric coefficients ``A(x, t)``.

    ``matrix`` is either a constant ``n x n`` array or a callable
    ``(x, t) -> (..., n, n)``. Ellipticity is checked at construction (for
    constants) and on every evaluation.
    """

    matrix: object
    ell: object = None
    modulus: object = None

    def __post_init__(self):
        from .barriers import EllipticityPair
        if not callable(self.matrix):
            A = np.asarray(self.matrix, dtype=float)
            object.__setattr__(self, "matrix", A)
            if self.ell is None:
                ev = np.linalg.eigvalsh(A)
                object.__setattr__(self, "ell", EllipticityPair(float(ev[0]), float(ev[-1])))
            self._check(A)
        elif self.ell is None:
            raise ContractError("variable coefficients need a declared ellipticity pair")

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @property
    def constant(self):
        return not callable(self.matrix)

    def _check(self, A):
        A = np.asarray(A, dtype=float)
        if np.max(np.abs(A - np.swapaxes(A, -1, -2)), initial=0.0) > 1e-12:
            raise ContractError("coefficient matrix is not symmetric")
        ev = np.linalg.eigvalsh(A)
        tol = 1e-12 * max(1.0, self.ell.Lam)
        if np.any(ev < self.ell.lam - tol) or np.any(ev > self.ell.Lam + tol):
            raise ContractError("coefficients violate the ellipticity bounds")

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        if self.constant:
            return np.broadcast_to(self.matrix, x.shape[:-1] + self.matrix.shape)
        A = np.asarray(self.matrix(x, t), dtype=float)
        self._check(A)
        return A


@dataclass
class ParabolicProblem:
    """Problem data: ``domain`` (``None`` for the whole cylinder), coefficients,
    source ``f(x, t)`` and Dirichlet data ``g(x, t)`` on the parabolic boundary."""

    domain: object
    coefficients: CoefficientField
    source: object
    dirichlet: object
    grid: GridSpec
    source_average: bool = False
    scheme: str = "implicit_euler"
    mixed_stencil: str = "seven_point"

    def __post_init__(self):
        if self.scheme not in ("implicit_euler", "explicit_euler"):
            raise ContractError(f"unknown scheme {self.scheme!r}")
        if self.mixed_stencil not in ("seven_point", "cross"):
            raise ContractError(f"unknown mixed stencil {self.mixed_stencil!r}")
        if self.domain is not None:
            c = self.grid.cylinder
            R = self.domain.graph.R
            reach = math.hypot(*c.center.x[:-1]) + c.r if self.grid.n > 2 else \
                abs(c.center.x[0]) + c.r
            if reach > R * (1 + 1e-12) or abs(c.center.t) + c.r ** 2 > R * R * (1 + 1e-12):
                raise ContractError("grid cylinder leaves the graph patch")

    def f(self, x, t):
        if self.source is None:
            return np.zeros(x.shape[:-1])
        if callable(self.source):
            return np.broadcast_to(np.asarray(self.source(x, t), dtype=float), x.shape[:-1])
        return np.full(x.shape[:-1], float(self.source))

    def g(self, x, t):
        if callable(self.dirichlet):
            return np.broadcast_to(np.asarray(self.dirichlet(x, t), dtype=float), x.shape[:-1])
        return np.full(x.shape[:-1], float(self.dirichlet))

    def gap(self, x, t):
        if self.domain is None:
            return np.full(x.shape[:-1], np.inf)
        return self.domain.gap(x, t)

    @property
    def time_independent_domain(self):
        return self.domain is None or self.domain.graph.family in ("flat", "cone",
                                                                    "radial_profile")


# classification ------------------------------------------------------------

@dataclass
class Classification:
    """Node labels and cut data of one time slice."""

    labels: np.ndarray            # INTERIOR / BOUNDARY_ADJACENT / EXTERIOR / DIRICHLET
    unknown: np.ndarray           # flat indices of unknown nodes (row order)
    theta: np.ndarray             # (U, n, 2) arm fractions, [..., 0] is +, [..., 1] is -
    cut_points: dict = field(default_factory=dict)   # (axis, side) -> (rows, points)

    @property
    def known(self):
        return self.labels == DIRICHLET


def _cut_fractions(problem, x, axis, sign, t, h):
    """Fraction ``theta`` in ``(0, 1]`` at which the segment leaves the domain."""
    e = np.zeros(problem.grid.n)
    e[axis] = sign * h

    def gap(theta, *cols):
        pts = np.stack([np.ravel(c) for c in cols], axis=-1) + np.ravel(theta)[:, None] * e
        return problem.gap(pts, t).reshape(np.shape(theta))

    cols = tuple(x.T)
    lo = np.zeros(x.shape[0])
    hi = np.ones(x.shape[0])
    at_end = gap(hi, *cols)
    out = np.ones(x.shape[0])
    todo = at_end < 0
    if todo.any():
        res = find_root(gap, (lo[todo], hi[todo]), args=tuple(c[todo] for c in cols),
                        tolerances=dict(xatol=1e-15, xrtol=0.0, fatol=0.0, frtol=0.0))
        th = np.clip(res.x, 0.0, 1.0)
        out[todo] = th
    return out


def classify_nodes(problem, t):
    """Classify nodes at time ``t`` and compute cut fractions."""
    grid = problem.grid
    n, h = grid.n, grid.h
    X = grid.coordinates()
    gap = problem.gap(X, t)
    wall = grid.wall_mask()
    inside = gap > 0
    tiny = inside & (gap < TINY_GAP * h) & ~wall
    labels = np.full(grid.shape, EXTERIOR, dtype=np.int8)
    labels[inside & wall] = DIRICHLET
    labels[tiny] = DIRICHLET
    unk = inside & ~wall & ~tiny
    flat = np.flatnonzero(unk)
    U = flat.size
    theta = np.ones((U, n, 2))
    cuts = {}
    Xf = X.reshape(-1, n)
    inside_f = inside.ravel()
    strides = [int(np.prod(grid.shape[k + 1:])) for k in range(n)]
    for k in range(n):
        for side, sign in ((0, 1), (1, -1)):
            nb = flat + sign * strides[k]
            out = ~inside_f[nb]
            if out.any():
                rows = np.flatnonzero(out)
                th = _cut_fractions(problem, Xf[flat[rows]], k, sign, t, h)
                theta[rows, k, side] = th
                pts = Xf[flat[rows]].copy()
                pts[:, k] += sign * th * h
                cuts[(k, side)] = (rows, pts)
    lab = np.where(np.all(theta == 1.0, axis=(1, 2)) & ~np.any(
        [~inside_f[flat + s * st] for st in strides for s in (1, -1)], axis=0),
        INTERIOR, BOUNDARY_ADJACENT)
    labels.ravel()[flat] = lab
    return Classification(labels, flat, theta, cuts)


# assembly ---------------------------------------------------------------

@dataclass
class Stencil:
    """Discrete operator ``L_h`` restricted to the unknowns of one slice."""

    matrix: sp.csr_matrix         # couplings among unknowns (includes the center)
    known_rows: np.ndarray        # contributions from known nodes and cut points
    known_coef: np.ndarray
    known_nodes: np.ndarray       # flat node index, or -1 for a cut point
    known_cut: np.ndarray         # index into cut point list (when node is -1)
    cut_points: np.ndarray
    diag: np.ndarray
    dropped_mixed: int = 0
    monotone: bool = True


def assemble(problem, cls, t):
    grid = problem.grid
    n, h = grid.n, grid.h
    shape = grid.shape
    strides = [int(np.prod(shape[k + 1:])) for k in range(n)]
    flat = cls.unknown
    U = flat.size
    X = grid.coordinates().reshape(-1, n)
    A = problem.coefficients(X[flat], t) if U else np.zeros((0, n, n))
    row_of = np.full(int(np.prod(shape)), -1)
    row_of[flat] = np.arange(U)
    inside = (cls.labels != EXTERIOR).ravel()

    rows, cols, coef = [], [], []          # col: flat node index, or -(1 + cut id)
    cut_list = []
    cut_offset = 0
    center = np.zeros(U)
    ar = np.arange(U)
    for k in range(n):
        hp = cls.theta[:, k, 0] * h
        hm = cls.theta[:, k, 1] * h
        cp = 2 * A[:, k, k] / (hp * (hp + hm))
        cm = 2 * A[:, k, k] / (hm * (hp + hm))
        center -= cp + cm
        for side, sign, c, th in ((0, 1, cp, cls.theta[:, k, 0]), (1, -1, cm, cls.theta[:, k, 1])):
            # A full arm couples to the neighbor node; when that neighbor sits
            # exactly on the graph it is a known node carrying the data value.
            reg = th == 1.0
            rows.append(ar[reg])
            cols.append(flat[reg] + sign * strides[k])
            coef.append(c[reg])
            if (k, side) in cls.cut_points:
                crow, cpts = cls.cut_points[(k, side)]
                short = th[crow] < 1.0
                crow, cpts = crow[short], cpts[short]
                rows.append(crow)
                cols.append(-(1 + cut_offset + np.arange(crow.size)))
                coef.append(c[crow])
                cut_list.append(cpts)
                cut_offset += crow.size

    dropped = 0
    for i in range(n):
        for j in range(i + 1, n):
            a = A[:, i, j]
            nz = np.abs(a) > 0
            if not nz.any():
                continue
            if problem.mixed_stencil == "cross":
                corners = [(1, 1, 0.25), (-1, -1, 0.25), (1, -1, -0.25), (-1, 1, -0.25)]
                ok = np.ones(U, dtype=bool)
                for si, sj, _ in corners:
                    ok &= inside[np.clip(flat + si * strides[i] + sj * strides[j], 0, None)]
                ok &= np.all(cls.theta[:, [i, j], :] == 1.0, axis=(1, 2))
                ok &= nz
                for si, sj, w in corners:
                    rows.append(ar[ok])
                    cols.append(flat[ok] + si * strides[i] + sj * strides[j])
                    coef.append(2 * a[ok] * w / (h * h))
                dropped += int(np.sum(nz & ~ok))
                continue
            sg = np.where(a >= 0, 1, -1)
            quads = []
            for q in (1, -1):
                si = q * np.ones(U, dtype=int)
                sj = q * sg
                side_i = np.where(si > 0, 0, 1)
                side_j = np.where(sj > 0, 0, 1)
                corner = flat + si * strides[i] + sj * strides[j]
                valid = (cls.theta[ar, i, side_i] == 1.0) & (cls.theta[ar, j, side_j] == 1.0)
                valid &= inside[corner]
                valid &= inside[flat + si * strides[i]] & inside[flat + sj * strides[j]]
                quads.append((si, sj, corner, valid))
            nvalid = quads[0][3].astype(int) + quads[1][3].astype(int)
            for si, sj, corner, valid in quads:
                use = valid & nz
                w = np.where(nvalid == 2, 0.5, 1.0)
                c = 2 * np.abs(a) * w / (h * h)
                u = ar[use]
                rows += [u, u, u]
                cols += [corner[use], flat[use] + si[use] * strides[i],
                         flat[use] + sj[use] * strides[j]]
                coef += [c[use], -c[use], -c[use]]
                center[use] += c[use]
            dropped += int(np.sum(nz & (nvalid == 0)))

    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    coef = np.concatenate(coef) if coef else np.zeros(0)
    # Merge duplicate (row, col) pairs so sign checks see net coefficients.
    key = rows.astype(np.int64) * (int(np.prod(shape)) + cut_offset + 2) + (cols + cut_offset + 1)
    uk, inv = np.unique(key, return_inverse=True)
    net = np.bincount(inv, weights=coef)
    first = np.zeros(uk.size, dtype=int)
    first[inv[::-1]] = np.arange(inv.size)[::-1]
    rows, cols, coef = rows[first], cols[first], net
    monotone = bool(np.all(coef >= -1e-12 * np.max(np.abs(coef), initial=1.0)))
    if not monotone:
        warnings.warn("coefficients are not diagonally dominant; the scheme is not monotone",
                      RuntimeWarning, stacklevel=3)
    if dropped:
        warnings.warn(f"mixed derivative dropped at {dropped} nodes with no admissible quadrant",
                      RuntimeWarning, stacklevel=3)

    node_cols = cols >= 0
    to_unknown = np.zeros(cols.size, dtype=bool)
    to_unknown[node_cols] = row_of[cols[node_cols]] >= 0
    mrows = np.concatenate([rows[to_unknown], ar])
    mcols = np.concatenate([row_of[cols[to_unknown]], ar])
    mvals = np.concatenate([coef[to_unknown], center])
    L = sp.csr_matrix((mvals, (mrows, mcols)), shape=(U, U))
    kn = ~to_unknown
    cut_points = np.concatenate(cut_list) if cut_list else np.zeros((0, n))
    kn_nodes = np.where(cols[kn] >= 0, cols[kn], -1)
    kn_cut = np.where(cols[kn] < 0, -cols[kn] - 1, -1)
    return Stencil(L, rows[kn], coef[kn], kn_nodes, kn_cut, cut_points, center,
                   dropped, monotone)


# time stepping --------------------------------------------------------------

class _Stepper:
    """Holds per-slice structures and the cached factorization."""

    def __init__(self, problem):
        self.problem = problem
        self.cache = None
        self.solves = 0
        self.boundary_max = -np.inf
        self.boundary_min = np.inf

    def structures(self, t):
        p = self.problem
        reuse = p.time_independent_domain and p.coefficients.constant
        if reuse and self.cache is not None:
            return self.cache
        cls = classify_nodes(p, t)
        st = assemble(p, cls, t)
        lu = None
        if p.scheme == "implicit_euler":
            U = cls.unknown.size
            sysm = (sp.identity(U, format="csc") / p.grid.tau - st.matrix).tocsc()
            lu = (sysm, splu(sysm)) if U else (sysm, None)
        out = (cls, st, lu)
        if reuse:
            self.cache = out
        return out

    def known_values(self, st, t, cls):
        p = self.problem
        X = p.grid.coordinates().reshape(-1, p.grid.n)
        vals = np.empty(st.known_rows.size)
        nodes = st.known_nodes >= 0
        if nodes.any():
            vals[nodes] = p.g(X[st.known_nodes[nodes]], t)
        if (~nodes).any():
            vals[~nodes] = p.g(st.cut_points[st.known_cut[~nodes]], t)
        if vals.size:
            self.boundary_max = max(self.boundary_max, float(vals.max()))
            self.boundary_min = min(self.boundary_min, float(vals.min()))
        return vals

    def source(self, cls, t):
        p = self.problem
        grid = p.grid
        X = grid.coordinates().reshape(-1, grid.n)[cls.unknown]
        if not p.source_average:
            return p.f(X, t)
        # Average over a 4^n lattice of cell midpoints (for singular sources).
        off = (np.arange(4) + 0.5) / 4 - 0.5
        mesh = np.stack(np.meshgrid(*([off] * grid.n), indexing="ij"), axis=-1).reshape(-1, grid.n)
        vals = p.f(X[:, None, :] + grid.h * mesh[None, :, :], t)
        return vals.mean(axis=1)

    def step(self, u_full, t_new):
        """Advance the full-node vector ``u_full`` (NaN outside) to ``t_new``."""
        p = self.problem
        grid = p.grid
        cls, st, lu = self.structures(t_new)
        X = grid.coordinates().reshape(-1, grid.n)
        unk = cls.unknown
        old = u_full[unk]
        missing = np.isnan(old)
        if missing.any():
            # Nodes entering the domain take the data value at the previous time.
            old = old.copy()
            old[missing] = p.g(X[unk[missing]], t_new - grid.tau)
        kv = self.known_values(st, t_new, cls)
        bc = np.bincount(st.known_rows, weights=st.known_coef * kv, minlength=unk.size)
        f = self.source(cls, t_new)
        out = np.full(u_full.shape, np.nan)
        known = cls.known.ravel()
        knodes = np.flatnonzero(known)
        if knodes.size:
            gk = p.g(X[knodes], t_new)
            out[knodes] = gk
            self.boundary_max = max(self.boundary_max, float(gk.max()))
            self.boundary_min = min(self.boundary_min, float(gk.min()))
        if unk.size == 0:
            return out
        if p.scheme == "explicit_euler":
            tau = grid.tau
            # Old-time boundary data and source; cut rows (short arms, large
            # diagonal) take their diagonal implicitly, which keeps every
            # update a convex combination without a linear solve.
            kv_old = self.known_values(st, t_new - tau, cls)
            bc_old = np.bincount(st.known_rows, weights=st.known_coef * kv_old, minlength=unk.size)
            f_old = self.source(cls, t_new - tau)
            cut = np.any(cls.theta < 1.0, axis=(1, 2))
            full = old + tau * (st.matrix @ old + bc_old + f_old)
            off = full - tau * st.diag * old
            new = np.where(cut, off / (1.0 - tau * st.diag), full)
            if np.any(~cut & (tau * -st.diag > 1.0 + 1e-12)):
                raise ContractError("explicit step violates the stability bound tau * max|diag| <= 1")
            out[unk] = new
            return out
        sysm, fac = lu
        rhs = old / grid.tau + bc + f
        sol = fac.solve(rhs)
        scale = max(1.0, float(np.max(np.abs(rhs))))
        res = float(np.max(np.abs(sysm @ sol - rhs)))
        it = 0
        while res > RESIDUAL_TOL * scale and it < 3:
            sol = sol + fac.solve(rhs - sysm @ sol)
            res = float(np.max(np.abs(sysm @ sol - rhs)))
            it += 1
        if res > RESIDUAL_TOL * scale:
            raise SolverError("linear solve did not reach the residual tolerance", residual=res)
        self.solves += 1
        out[unk] = sol
        return out


def check_cfl(problem):
    """Explicit stability requirement ``tau <= h^2 / (2 n Lambda)``."""
    grid = problem.grid
    lam_max = problem.coefficients.ell.Lam
    return grid.tau <= grid.h ** 2 / (2 * grid.n * lam_max) * (1 + 1e-12)


def initial_slice(problem):
    grid = problem.grid
    t0 = grid.times[0]
    X = grid.coordinates().reshape(-1, grid.n)
    u = np.full(X.shape[0], np.nan)
    inside = problem.gap(X, t0) > 0
    u[inside] = problem.g(X[inside], t0)
    return u


def solve(problem, keep=None, keep_from=None):
    """March from the bottom slice to the top; return the stored slices.

    ``keep`` is ``None`` (all slices), an integer stride, or a sequence of
    times (nearest slices). ``keep_from`` stores every slice with time at
    least that value in addition. The final slice is always stored.
    """
    grid = problem.grid
    if problem.scheme == "explicit_euler" and not check_cfl(problem):
        raise ContractError("explicit scheme requires tau <= h^2 / (2 n Lambda)")
    times = grid.times
    M = grid.M
    store = np.zeros(M + 1, dtype=bool)
    if keep is None:
        store[:] = True
    elif isinstance(keep, (int, np.integer)):
        store[::int(keep)] = True
    else:
        for tv in np.atleast_1d(keep):
            store[int(np.argmin(np.abs(times - tv)))] = True
    if keep_from is not None:
        store |= times >= keep_from - 1e-12 * max(1.0, abs(keep_from))
    store[-1] = True
    stepper = _Stepper(problem)
    u = initial_slice(problem)
    if np.any(np.isfinite(u)):
        stepper.boundary_max = float(np.nanmax(u))
        stepper.boundary_min = float(np.nanmin(u))
    slices = []
    kept = []
    if store[0]:
        slices.append(u.reshape(grid.shape).copy())
        kept.append(times[0])
    for m in range(1, M + 1):
        u = stepper.step(u, times[m])
        if store[m]:
            slices.append(u.reshape(grid.shape).copy())
            kept.append(times[m])
    meta = {"boundary_max": stepper.boundary_max, "boundary_min": stepper.boundary_min,
            "solves": stepper.solves}
    return GridFunction(grid, np.array(slices), np.array(kept), meta)


def step(problem, u_slice, t_new):
    """One time step from the slice ``u_slice`` (grid shape, NaN outside) to ``t_new``."""
    stepper = _Stepper(problem)
    out = stepper.step(np.asarray(u_slice, dtype=float).ravel(), t_new)
    return out.reshape(problem.grid.shape)


def discrete_residual(problem, sol):
    """Max residual of the implicit scheme over all stored consecutive slices."""
    grid = problem.grid
    stepper = _Stepper(problem)
    worst = 0.0
    idx = np.round((sol.times - grid.times[0]) / grid.tau).astype(int)
    for k in range(1, sol.times.size):
        if idx[k] != idx[k - 1] + 1:
            continue
        t = sol.times[k]
        cls, st, _ = stepper.structures(t)
        unk = cls.unknown
        if unk.size == 0:
            continue
        old = sol.values[k - 1].ravel()[unk]
        new = sol.values[k].ravel()[unk]
        kv = stepper.known_values(st, t, cls)
        bc = np.bincount(st.known_rows, weights=st.known_coef * kv, minlength=unk.size)
        r = (new - old) / grid.tau - (st.matrix @ new + bc) - stepper.source(cls, t)
        worst = max(worst, float(np.max(np.abs(r))))
    return worst


# checks ------------------------------------------------------------------

def max_principle_violation(sol):
    """``max u - max(boundary data)`` and ``min(boundary data) - min u`` (both
    should be <= 0 for a source-free problem)."""
    v = sol.values
    return (float(np.nanmax(v) - sol.meta["boundary_max"]),
            float(sol.meta["boundary_min"] - np.nanmin(v)))


def roundoff_tolerance(sol):
    return 1e-13 * max(1.0, abs(sol.meta["boundary_max"]), abs(sol.meta["boundary_min"]))


@dataclass
class ABPKTResult:
    lhs: float
    rhs_boundary: float
    source_norm: float
    C: float


def _source_norm(problem, grid):
    n = grid.n
    X = grid.coordinates().reshape(-1, n)
    total = 0.0
    for t in grid.times[1:]:
        inside = problem.gap(X, t) > 0
        wall = grid.wall_mask().ravel()
        sel = inside & ~wall
        if sel.any():
            total += float(np.sum(np.abs(problem.f(X[sel], t)) ** (n + 1)))
    return (total * grid.h ** n * grid.tau) ** (1.0 / (n + 1))


def abpkt_check(sol, problem):
    """Fit ``C`` in ``sup u <= sup_bdry u^+ + C r^{n/(n+1)} ||f||_{L^{n+1}}``.

    Both ``u`` and ``-u`` are tested; the larger fitted constant is reported.
    """
    grid = problem.grid
    n = grid.n
    r = grid.cylinder.r
    norm = _source_norm(problem, grid)
    tol = roundoff_tolerance(sol)
    cases = [(float(np.nanmax(sol.values)), max(sol.meta["boundary_max"], 0.0)),
             (float(-np.nanmin(sol.values)), max(-sol.meta["boundary_min"], 0.0))]
    C = 0.0
    for lhs, bnd in cases:
        excess = lhs - bnd
        if excess <= tol:
            continue
        if norm == 0:
            C = math.inf
        else:
            C = max(C, excess / (r ** (n / (n + 1)) * norm))
    lhs, bnd = max(cases, key=lambda c: c[0] - c[1])
    return ABPKTResult(lhs, bnd, norm, C)


# special solutions ---------------------------------------------------------

@dataclass
class SpecialSolution:
    phi: GridFunction
    d: np.ndarray                # regularized distance at the top-slice nodes
    epsilon: float
    seminorm: float
    sandwich_violation: float    # max excess over the tolerance (<= 0 means holds)
    sup_error: float             # ||phi - d||_inf over all domain nodes
    K: float                     # sup_error / (r * seminorm)
    checked_nodes: int


def special_solution(field, r, nodes_per_radius=16, steps=None, C0=2.5, ell=None,
                     coefficients=None, strict=True):
    """Solve with data ``d`` on the parabolic boundary of ``Omega cap Q_r``.

    Checks ``(2r)^{-eps} d^{1+eps} <= phi <= (2r)^eps d^{1-eps}`` at nodes
    with ``d > 5h`` on every stored slice, with tolerance ``h`` (one cell
    of ``d`` variation), where ``eps = C0 * seminorm`` and the seminorm is
    taken on ``B'_{2r} x (-4r^2, 4r^2)``. ``strict`` raises
    :class:`PropertyFailure` on a violation.
    """
    from .barriers import working_seminorm
    domain = field.domain
    n = domain.n
    if not 0 < r < 1 / 3:
        raise ContractError("special solutions need 0 < r < 1/3")
    if coefficients is None:
        coefficients = CoefficientField.identity(n)
    h = r / nodes_per_radius
    steps = steps if steps is not None else nodes_per_radius ** 2
    grid = GridSpec.on(np.zeros(n), 0.0, r, nodes_per_radius, steps)
    semi = working_seminorm(domain.graph, r)
    eps = C0 * semi
    if eps >= 0.5:
        raise ContractError(f"seminorm {semi:.3g} too large: epsilon = {eps:.3g}")

    time_indep = domain.graph.family in ("flat", "cone", "radial_profile")
    cache = {}

    def data(x, t):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        xf = x.reshape(-1, n)
        tf = np.broadcast_to(np.asarray(t, dtype=float), shape).ravel()
        out = np.zeros(xf.shape[0])
        pos = domain.gap(xf, tf) > 1e-14
        if pos.any():
            if time_indep:
                keyx = [tuple(v) for v in np.round(xf[pos], 14)]
                need = [i for i, k in enumerate(keyx) if k not in cache]
                if need:
                    idx = np.flatnonzero(pos)[need]
                    vals = np.atleast_1d(field.distance(xf[idx], np.zeros(len(idx))))
                    for i, v in zip(need, vals):
                        cache[keyx[i]] = float(v)
                out[pos] = [cache[k] for k in keyx]
            else:
                out[pos] = np.atleast_1d(field.distance(xf[pos], tf[pos]))
        return out.reshape(shape)

    prob = ParabolicProblem(domain, coefficients, 0.0, data, grid)
    phi = solve(prob)
    X = grid.coordinates().reshape(-1, n)
    worst = -np.inf
    sup_err = 0.0
    count = 0
    dtop = None
    for k, t in enumerate(phi.times):
        v = phi.values[k].ravel()
        sel = np.isfinite(v)
        dv = np.full(v.shape, np.nan)
        dv[sel] = data(X[sel], t)
        good = sel & (dv > 5 * h) & ~grid.wall_mask().ravel()
        if k == phi.times.size - 1:
            dtop = dv.reshape(grid.shape)
        if sel.any():
            sup_err = max(sup_err, float(np.max(np.abs(v[sel] - dv[sel]))))
        if not good.any():
            continue
        dd = dv[good]
        lo = (2 * r) ** (-eps) * dd ** (1 + eps)
        hi = (2 * r) ** eps * dd ** (1 - eps)
        excess = np.maximum(lo - v[good], v[good] - hi) - h
        worst = max(worst, float(excess.max()))
        count += int(good.sum())
    K = sup_err / (r * semi) if semi > 0 else (0.0 if sup_err < 1e-12 else math.inf)
    out = SpecialSolution(phi, dtop, eps, semi, worst, sup_err, K, count)
    if strict and worst > 0:
        raise PropertyFailure(f"special solution sandwich violated by {worst:.3g}", report=out)
    return out
