import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import _oracles as O
from parbound.errors import ContractError, DomainError
from parbound.geometry import (BoundaryGraph, ParabolicCylinder, ParabolicDomain,
                               ParabolicPoint, check_exterior_C1, check_interior_C1,
                               lateral_boundary_distance, local_seminorm, parabolic_distance,
                               parabolic_distance_arrays, vertical_gap)
from parbound.moduli import ModulusSpec

SQRT = ModulusSpec.power(0.5, eta0=4.0)

GRAPHS = [BoundaryGraph.flat(), BoundaryGraph.cone(0.05), BoundaryGraph.cone(-0.03),
          BoundaryGraph.radial_profile(SQRT, sign=1.0), BoundaryGraph.time_wave(0.02, 2.0),
          BoundaryGraph.cone(0.05, n=3)]


# distance ------------------------------------------------------------------

def test_distance_examples():
    o = ParabolicPoint((0.0, 0.0), 0.0)
    assert parabolic_distance(o, ParabolicPoint((0.0, 1.0), 0.0)) == 1.0
    assert parabolic_distance(ParabolicPoint((0.0, 0.0), -4.0), o) == 2.0
    assert parabolic_distance(ParabolicPoint((1.0, 0.0), -1.0), o) == 2.0


def test_triangle_inequality_on_random_triples():
    rng = np.random.default_rng(0)
    x, y, z = (rng.uniform(-1, 1, (10_000, 3)) for _ in range(3))
    t, s, u = (rng.uniform(-1, 1, 10_000) for _ in range(3))
    dxy = parabolic_distance_arrays(x, t, y, s)
    dyz = parabolic_distance_arrays(y, s, z, u)
    dxz = parabolic_distance_arrays(x, t, z, u)
    assert np.all(dxz <= dxy + dyz + 1e-12)
    assert np.all(parabolic_distance_arrays(y, s, x, t) == dxy)


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.floats(-2, 2))
def test_distance_zero_iff_equal(x, t):
    p = ParabolicPoint(tuple(x), t)
    assert parabolic_distance(p, p) == 0.0
    q = ParabolicPoint((x[0] + 1e-3, x[1]), t)
    assert parabolic_distance(p, q) > 0


def test_cylinder_membership():
    c = ParabolicCylinder(ParabolicPoint((0.0, 0.0), 0.0), 0.5)
    assert c.contains(np.array([0.1, 0.4]), -0.2)
    assert not c.contains(np.array([0.1, 0.4]), 0.01)
    assert not c.contains(np.array([0.1, 0.4]), -0.26)
    assert not c.contains(np.array([0.6, 0.0]), -0.1)
    assert c.contains(np.array([0.1, 5.0]), -0.1, thin=True)


# graphs and domains ----------------------------------------------------

def test_vertical_gap_examples():
    assert vertical_gap(ParabolicDomain(BoundaryGraph.flat(), 1.0), [0.0, 0.3], -0.1) == 0.3
    cone = ParabolicDomain(BoundaryGraph.cone(0.05, R=2.0), 2.0)
    assert vertical_gap(cone, [1.0, 0.1], 0.0) == pytest.approx(0.05, abs=1e-15)
    prof = ParabolicDomain(BoundaryGraph.radial_profile(SQRT), 1.0)
    assert vertical_gap(prof, [0.25, 0.2], 0.0) == pytest.approx(0.075, abs=1e-15)


def test_vertical_gap_outside():
    with pytest.raises(DomainError):
        vertical_gap(ParabolicDomain(BoundaryGraph.cone(0.05), 1.0), [0.5, 0.0], 0.0)


@pytest.mark.parametrize("graph", GRAPHS)
def test_graph_lipschitz_bound_on_pairs(graph):
    rng = np.random.default_rng(1)
    m = graph.n - 1
    xp, yp = rng.uniform(-0.7, 0.7, (2, 5000, m))
    t, s = rng.uniform(-0.9, 0.0, (2, 5000))
    lhs = np.abs(graph(xp, t) - graph(yp, s))
    rhs = graph.L * (np.linalg.norm(xp - yp, axis=1) + np.sqrt(np.abs(t - s)))
    assert np.all(lhs <= rhs * (1 + 1e-9) + 1e-15)
    assert graph(np.zeros(m), 0.0) == 0.0


@pytest.mark.parametrize("graph", GRAPHS)
def test_membership_consistency(graph):
    dom = ParabolicDomain(graph, 1.0)
    rng = np.random.default_rng(2)
    x = rng.uniform(-1.2, 1.2, (4000, graph.n))
    t = rng.uniform(-1.2, 0.1, 4000)
    expect = dom.in_patch(x, t) & (dom.gap(x, t) > 0)
    assert np.array_equal(dom.contains(x, t), expect)


def test_graph_record_round_trip():
    for g in GRAPHS[:5]:
        assert BoundaryGraph.from_record(g.to_record()) == g


def test_graph_must_pass_through_origin():
    with pytest.raises(ContractError):
        BoundaryGraph.from_callable(lambda xp, t: 0.1 + 0 * t, L=0.0)


# lateral distance ----------------------------------------------------------

def test_lateral_distance_flat_is_height():
    dom = ParabolicDomain(BoundaryGraph.flat(), 1.0)
    assert lateral_boundary_distance(dom, np.array([0.2, 0.3]), -0.1) == 0.3


def test_lateral_distance_cone_against_dense_minimization():
    dom = ParabolicDomain(BoundaryGraph.cone(0.05), 1.0)
    d = lateral_boundary_distance(dom, np.array([0.0, 0.1]), 0.0)
    assert d == pytest.approx(O.FROZEN["cone_lateral_0.05_0.1"], rel=1e-3)
    assert 0.1 / math.sqrt(1.0025) * (1 - 1e-3) <= d <= 0.1


@pytest.mark.parametrize("graph", GRAPHS[:5])
def test_gap_sandwich(graph):
    dom = ParabolicDomain(graph, 1.0)
    rng = np.random.default_rng(4)
    for _ in range(60):
        xp = rng.uniform(-0.5, 0.5, graph.n - 1)
        t = rng.uniform(-0.5, 0.0)
        V = 10 ** rng.uniform(-3, -1)
        x = np.concatenate([xp, [graph(xp, t) + V]])
        d = lateral_boundary_distance(dom, x, t)
        assert d <= V * (1 + 1e-12)
        assert V <= math.sqrt(1 + graph.L ** 2) * d + 1e-3 * V


def test_lateral_distance_below_point_distance():
    graph = BoundaryGraph.cone(0.05)
    dom = ParabolicDomain(graph, 1.0)
    x = np.array([0.1, 0.2])
    y = np.array([0.15, graph(np.array([0.15]), -0.01)])
    r = parabolic_distance_arrays(x, 0.0, y, -0.01)
    assert lateral_boundary_distance(dom, x, 0.0) <= r


# seminorms -----------------------------------------------------------------

def test_seminorm_flat_zero():
    assert local_seminorm(BoundaryGraph.flat(), [0.0], 0.0, 0.2) == 0.0


def test_seminorm_cone_attains_slope():
    assert local_seminorm(BoundaryGraph.cone(0.04), [0.0], 0.0, 0.2) == pytest.approx(0.04,
                                                                                      rel=1e-9)


@pytest.mark.parametrize("r", [1e-2, 1e-3])
def test_seminorm_radial_profile_derivative(r):
    s = local_seminorm(BoundaryGraph.radial_profile(SQRT), [0.0], 0.0, r)
    assert s == pytest.approx(O.radial_seminorm_limit(r), rel=0.02)


@pytest.mark.parametrize("graph", GRAPHS)
def test_seminorm_bounded_by_declared_constant(graph):
    s = local_seminorm(graph, np.zeros(graph.n - 1), -0.1, 0.3, samples=3000)
    assert s <= graph.L * (1 + 1e-9)


def test_seminorm_deterministic_and_grows_with_samples():
    g = BoundaryGraph.time_wave(0.02, 3.0)
    a = local_seminorm(g, [0.1], -0.1, 0.2, samples=500, seed=5)
    assert a == local_seminorm(g, [0.1], -0.1, 0.2, samples=500, seed=5)
    assert local_seminorm(g, [0.1], -0.1, 0.2, samples=20_000, seed=5) >= a * (1 - 1e-3)


# C^1 conditions ----------------------------------------------------------

def test_interior_condition_flat_holds():
    dom = ParabolicDomain(BoundaryGraph.flat(), 1.0)
    assert check_interior_C1(dom, ModulusSpec.log_inverse(0.1), 1.0).holds


def test_interior_condition_profile_equality():
    dom = ParabolicDomain(BoundaryGraph.radial_profile(SQRT), 1.0)
    res = check_interior_C1(dom, SQRT, 1.0)
    assert res.holds
    assert abs(res.margin) <= 1e-15


def test_interior_condition_cone_fails_near_origin():
    dom = ParabolicDomain(BoundaryGraph.cone(0.05), 1.0)
    res = check_interior_C1(dom, ModulusSpec.power(1.0, eta0=1.0), 1.0)
    assert not res.holds
    xp, t, g, b = res.witness
    assert g > b
    assert abs(xp[0]) + math.sqrt(-t) < 0.06
    assert res.csv_row()[0] == "fails"


def test_exterior_condition_mirror():
    flat = ParabolicDomain(BoundaryGraph.flat(), 1.0)
    assert check_exterior_C1(flat, SQRT, 1.0).holds
    down = ParabolicDomain(BoundaryGraph.radial_profile(SQRT, sign=-1.0), 1.0)
    res = check_exterior_C1(down, SQRT, 1.0)
    assert res.holds and abs(res.margin) <= 1e-15
    steep = ParabolicDomain(BoundaryGraph.cone(-0.05), 1.0)
    assert not check_exterior_C1(steep, ModulusSpec.power(1.0, eta0=1.0), 1.0).holds
