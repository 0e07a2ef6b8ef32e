"""Nested solves on the dyadic cylinders ``Q_{r_l}(0, 0)``, ``r_l = r_0 2^{-l}``.

Level ``l + 1`` uses the same number of nodes per radius as level ``l``, so
its spacing is halved. Data on the graph comes from the problem; on the
box walls and the bottom slice it is the level ``l`` solution, sampled by
:func:`sample`. Accuracy near the vertex therefore improves geometrically
with depth at fixed cost per level.
"""

import numpy as np

from ..errors import ResolutionError
from ..grid import GridSpec
from ..solver import ParabolicProblem, solve

GRAPH_TOL = 1e-9


def sample(sol, domain, x, t, graph_data):
    """Interpolate a stored solution at ``(x, t)`` with a boundary fallback.

    Where the enclosing cell touches exterior nodes, the value is the
    linear interpolant along ``e_n`` between the graph point below (data
    ``graph_data``) and the first point above whose cell is fully inside.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],)).copy()
    out = sol.interpolate(x, t)
    bad = np.isnan(out)
    if domain is None or not bad.any():
        if bad.any():
            raise ResolutionError("sample point outside the stored solution")
        return out
    xb, tb = x[bad], t[bad]
    gap = domain.gap(xb, tb)
    base = xb.copy()
    base[:, -1] -= gap
    gb = graph_data(base, tb)
    res = np.full(xb.shape[0], np.nan)
    h = sol.grid.h
    todo = np.ones(xb.shape[0], dtype=bool)
    for k in range(1, 9):
        if not todo.any():
            break
        q = xb[todo].copy()
        q[:, -1] += k * h
        top = sol.grid.cylinder.center.x[-1] + sol.grid.cylinder.r
        if np.any(q[:, -1] > top):
            break
        uq = sol.interpolate(q, tb[todo])
        ok = np.isfinite(uq)
        idx = np.flatnonzero(todo)[ok]
        g = gap[idx]
        res[idx] = gb[idx] + (uq[ok] - gb[idx]) * g / (g + k * h)
        todo[idx] = False
    if np.any(np.isnan(res)):
        raise ResolutionError("no interior cell above a near-boundary sample point")
    out[bad] = res
    return out


class Level:
    """One solved level: grid, problem and stored slices."""

    def __init__(self, index, radius, problem, solution):
        self.index = index
        self.radius = radius
        self.problem = problem
        self.solution = solution

    def value(self, x, t, graph_data):
        return sample(self.solution, self.problem.domain, x, t, graph_data)


def zoom_solve(domain, coefficients, source, data, r0, nodes, steps, depth,
               keep_times=(), source_average=False, mixed_stencil="seven_point", n=None):
    """Solve on ``Q_{r0}`` then on ``depth`` nested halvings.

    ``keep_times`` are extra times stored at level 0 (anchor evaluations).
    Each level keeps every slice with ``t >= -r_{l+1}^2``.
    """
    n = domain.n if domain is not None else n
    levels = []
    parent = None
    for ell in range(depth + 1):
        r = r0 * 2.0 ** (-ell)
        grid = GridSpec.on(np.zeros(n), 0.0, r, nodes, steps)
        if parent is None:
            g = data
        else:
            g = _child_data(parent, domain, data, r)
        prob = ParabolicProblem(domain, coefficients, source, g, grid,
                                source_average=source_average, mixed_stencil=mixed_stencil)
        keep = list(keep_times) if ell == 0 else []
        sol = solve(prob, keep=keep, keep_from=-(r / 2) ** 2)
        parent = Level(ell, r, prob, sol)
        levels.append(parent)
    return levels


def _child_data(parent, domain, data, r):
    def g(x, t):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        xf = x.reshape(-1, x.shape[-1])
        tf = np.broadcast_to(np.asarray(t, dtype=float), shape).ravel()
        out = np.empty(xf.shape[0])
        if domain is None:
            on_graph = np.zeros(xf.shape[0], dtype=bool)
        else:
            on_graph = domain.gap(xf, tf) <= GRAPH_TOL * r
        if on_graph.any():
            out[on_graph] = data(xf[on_graph], tf[on_graph])
        rest = ~on_graph
        if rest.any():
            out[rest] = parent.value(xf[rest], tf[rest], data)
        return out.reshape(shape)
    return g


def level_for(levels, radius):
    """Level whose cylinder radius equals ``radius`` (relative tolerance 1e-9)."""
    for lv in levels:
        if abs(lv.radius - radius) <= 1e-9 * radius:
            return lv
    raise ResolutionError(f"no zoom level with radius {radius:g}")
