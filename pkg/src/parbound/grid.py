"""Space-time grids over parabolic cylinders and grid functions on them."""

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ResolutionError
from .geometry import ParabolicCylinder, ParabolicPoint

SLAB_MAGIC = b"PBSLAB1\n"


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on the closed box of ``Q_r(x0, t0)``.

    Spatial nodes ``x0_k + j h``, ``|j| <= N``, with ``N h = r``; time nodes
    ``t0 - r^2 + m tau``, ``m = 0..M``, with ``M tau = r^2``.
    """

    cylinder: ParabolicCylinder
    h: float
    tau: float

    def __post_init__(self):
        r = self.cylinder.r
        N = r / self.h
        M = r * r / self.tau
        if abs(N - round(N)) > 1e-9 * max(1.0, N) or round(N) < 2:
            raise ResolutionError("r / h must be an integer of at least 2")
        if abs(M - round(M)) > 1e-7 * max(1.0, M) or round(M) < 1:
            raise ResolutionError("r^2 / tau must be a positive integer")

    @classmethod
    def from_steps(cls, cylinder, h, tau):
        """Round ``h`` and ``tau`` to divide ``r`` and ``r^2`` evenly."""
        r = cylinder.r
        N = max(2, int(round(r / h)))
        M = max(1, int(math.ceil(r * r / tau - 1e-9)))
        return cls(cylinder, r / N, r * r / M)

    @classmethod
    def on(cls, center_x, center_t, r, nodes_per_radius, steps):
        cyl = ParabolicCylinder(ParabolicPoint(tuple(center_x), center_t), r)
        return cls(cyl, r / nodes_per_radius, r * r / steps)

    @property
    def n(self):
        return self.cylinder.center.n

    @property
    def N(self):
        return int(round(self.cylinder.r / self.h))

    @property
    def M(self):
        return int(round(self.cylinder.r ** 2 / self.tau))

    @property
    def shape(self):
        return (2 * self.N + 1,) * self.n

    @property
    def axes(self):
        c = self.cylinder.center.x
        j = np.arange(-self.N, self.N + 1)
        return tuple(c[k] + j * self.h for k in range(self.n))

    @property
    def times(self):
        c = self.cylinder.center.t
        r2 = self.cylinder.r ** 2
        return c - r2 + np.arange(self.M + 1) * self.tau

    def coordinates(self):
        """Node coordinates, shape ``shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def wall_mask(self):
        """Nodes on the lateral faces of the box."""
        m = np.zeros(self.shape, dtype=bool)
        for k in range(self.n):
            sl = [slice(None)] * self.n
            sl[k] = 0
            m[tuple(sl)] = True
            sl[k] = -1
            m[tuple(sl)] = True
        return m

    def header(self):
        c = self.cylinder
        return {"n": self.n, "h": self.h, "tau": self.tau, "r": c.r,
                "center_x": list(c.center.x), "center_t": c.center.t}

    @classmethod
    def from_header(cls, hd):
        cyl = ParabolicCylinder(ParabolicPoint(tuple(hd["center_x"]), hd["center_t"]), hd["r"])
        return cls(cyl, hd["h"], hd["tau"])


class GridFunction:
    """Values on grid nodes for a subset of time slices; NaN marks exterior nodes."""

    def __init__(self, grid, values, times, meta=None):
        values = np.asarray(values, dtype=float)
        times = np.asarray(times, dtype=float)
        if values.shape != (times.size,) + grid.shape:
            raise ContractError("values must have shape (len(times),) + grid.shape")
        if np.any(np.isinf(values)):
            raise ContractError("grid values must be finite or NaN")
        self.grid = grid
        self.values = values
        self.times = times
        self.meta = dict(meta or {})

    def __repr__(self):
        return f"GridFunction(shape={self.values.shape}, h={self.grid.h:g}, tau={self.grid.tau:g})"

    def slice_at(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)) + 1e-12:
            raise ContractError(f"no stored slice at t={t}")
        return self.values[k]

    def _spatial(self, slab, x):
        """Multilinear interpolation of one slice at points ``x`` (P, n)."""
        g = self.grid
        lo = np.array([a[0] for a in g.axes])
        pos = (x - lo) / g.h
        n_ax = 2 * g.N
        if np.any(pos < -1e-9) or np.any(pos > n_ax + 1e-9):
            raise ResolutionError("interpolation point outside the grid")
        pos = np.clip(pos, 0, n_ax)
        i0 = np.minimum(np.floor(pos).astype(int), n_ax - 1)
        fr = pos - i0
        out = np.zeros(x.shape[0])
        for corner in range(2 ** g.n):
            bits = [(corner >> k) & 1 for k in range(g.n)]
            w = np.ones(x.shape[0])
            idx = []
            for k, b in enumerate(bits):
                w = w * (fr[:, k] if b else 1 - fr[:, k])
                idx.append(i0[:, k] + b)
            v = slab[tuple(idx)]
            # A NaN corner with zero weight does not contaminate the result.
            out = out + np.where(w > 0, w * v, 0.0)
        return out

    def interpolate(self, x, t):
        """Space-time multilinear interpolation at points ``x`` (P, n), times ``t``.

        Returns NaN where a contributing node lies outside the domain.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
        out = np.empty(x.shape[0])
        ts = self.times
        for tv in np.unique(t):
            sel = t == tv
            if tv < ts[0] - 1e-12 or tv > ts[-1] + 1e-12:
                raise ResolutionError(f"time {tv} outside stored slices")
            k = int(np.searchsorted(ts, tv))
            if k < ts.size and abs(ts[k] - tv) <= 1e-12 * max(1.0, abs(tv)):
                out[sel] = self._spatial(self.values[k], x[sel])
                continue
            k = min(max(k, 1), ts.size - 1)
            a = (tv - ts[k - 1]) / (ts[k] - ts[k - 1])
            out[sel] = (1 - a) * self._spatial(self.values[k - 1], x[sel]) + \
                a * self._spatial(self.values[k], x[sel])
        return out

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c, self.times, self.meta)

    __rmul__ = __mul__

    # serialization ---------------------------------------------------------
    def to_slab(self):
        hd = {"grid": self.grid.header(), "times": self.times.tolist(),
              "shape": list(self.values.shape), "dtype": "<f8"}
        head = json.dumps(hd, sort_keys=True).encode()
        return SLAB_MAGIC + len(head).to_bytes(8, "little") + head + \
            self.values.astype("<f8").tobytes()

    @classmethod
    def from_slab(cls, data):
        if not data.startswith(SLAB_MAGIC):
            raise ContractError("not a grid slab")
        k = len(SLAB_MAGIC)
        size = int.from_bytes(data[k:k + 8], "little")
        hd = json.loads(data[k + 8:k + 8 + size])
        vals = np.frombuffer(data[k + 8 + size:], dtype="<f8").reshape(hd["shape"])
        return cls(GridSpec.from_header(hd["grid"]), vals.copy(), hd["times"])

    def slice_csv(self, k, header=()):
        """Long-format CSV of stored slice ``k``: coordinates then value."""
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        n = self.grid.n
        w.writerow([f"x{i + 1}" for i in range(n)] + ["t", "u"])
        X = self.grid.coordinates().reshape(-1, n)
        v = self.values[k].ravel()
        tv = f"{self.times[k]:.12g}"
        for p, u in zip(X, v):
            w.writerow([f"{c:.12g}" for c in p] + [tv, "" if np.isnan(u) else f"{u:.12g}"])
        return buf.getvalue()
