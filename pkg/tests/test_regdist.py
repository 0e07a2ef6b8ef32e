import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import _oracles as O
from parbound.errors import ContractError, DomainError, ResolutionError
from parbound.geometry import BoundaryGraph, ParabolicDomain
from parbound.moduli import ModulusSpec
from parbound.regdist import (MollifierKernel, RegularizedDistanceField, cone_moment,
                              verify_regdist_bounds)


def _field(graph, R=1.0, **kw):
    return RegularizedDistanceField(ParabolicDomain(graph, R), **kw)


FLAT = _field(BoundaryGraph.flat())
CONE = _field(BoundaryGraph.cone(0.02))
PROFILE = _field(BoundaryGraph.radial_profile(ModulusSpec.power(0.5, coef=1 / 15, eta0=4.0)))
WAVE = _field(BoundaryGraph.time_wave(0.02, 2.0))


# kernel ------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3])
def test_kernel_unit_mass(n):
    assert MollifierKernel(n).mass() == pytest.approx(1.0, rel=1e-13)


def test_kernel_vanishes_outside_support():
    k = MollifierKernel(2)
    assert k(np.array(1.0), 0.0) == 0.0
    assert k(np.array(0.3), 1.0) == 0.0
    assert k(np.array(0.0), 0.0) > 0


def test_cone_moment_against_high_precision():
    assert cone_moment(MollifierKernel(2)) == pytest.approx(O.FROZEN["cone_moment_2d"],
                                                            rel=1e-13)


def test_lipschitz_limit_enforced():
    with pytest.raises(ContractError):
        _field(BoundaryGraph.cone(0.2))


# parametrization ---------------------------------------------------------

def test_flat_height_is_identity():
    assert FLAT.height([[0.1]], 0.2, -0.1)[0] == pytest.approx(0.2, abs=1e-15)


def test_affine_graph_height():
    a = 0.07
    g = BoundaryGraph.from_callable(lambda xp, t: a * xp[..., 0], L=a)
    f = _field(g)
    p = f.height([[0.2], [-0.1]], [0.1, 0.3], [-0.05, -0.2])
    np.testing.assert_allclose(p, [a * 0.2 + 0.1, -a * 0.1 + 0.3], atol=1e-15)


def test_cone_height_on_axis():
    L = 0.02
    p = CONE.height([[0.0]], [0.1, 0.2], 0.0)
    np.testing.assert_allclose(p, np.array([0.1, 0.2]) * (1 + O.FROZEN["cone_moment_2d"] * L),
                               rtol=1e-13)


def test_height_increasing_in_vertical_variable():
    xn = np.linspace(0.01, 0.3, 200)
    for f in (CONE, PROFILE, WAVE):
        p = f.height([[0.05]], xn, -0.1)
        assert np.all(np.diff(p) > 0)


def test_footprint_outside_patch():
    with pytest.raises(DomainError):
        FLAT.height([[0.9]], 0.2, 0.0)
    with pytest.raises(DomainError):
        FLAT.height([[0.0]], -0.1, 0.0)


# inversion ---------------------------------------------------------------

def test_flat_distance_is_height():
    assert FLAT.distance(np.array([0.3, 0.2]), -0.1) == pytest.approx(0.2, abs=1e-15)


def test_cone_distance_on_axis():
    d = CONE.distance(np.array([0.0, 0.1]), 0.0)
    assert d == pytest.approx(O.FROZEN["cone_axis_distance_0.02_0.1"], rel=1e-13)


@settings(max_examples=25)
@given(st.floats(-0.4, 0.4), st.floats(1e-3, 0.3), st.floats(-0.4, 0.0),
       st.sampled_from([0, 1, 2]))
def test_inversion_round_trip(xp, gap, t, which):
    f = (CONE, PROFILE, WAVE)[which]
    g = f.domain.graph
    y = np.array([xp, float(g(np.array([xp]), t)) + gap])
    d = f.distance(y, t)
    assert f.height([[xp]], d, t)[0] == pytest.approx(y[1], abs=1e-13)


def test_distance_outside_domain_raises():
    with pytest.raises(DomainError):
        CONE.distance(np.array([0.2, 0.0]), 0.0)


def test_distance_is_local():
    # changing the graph far from the footprint leaves d unchanged
    base = BoundaryGraph.from_callable(lambda xp, t: 0.02 * np.abs(xp[..., 0]), L=0.02)
    bump = BoundaryGraph.from_callable(
        lambda xp, t: 0.02 * np.abs(xp[..., 0]) + 0.01 * np.clip(np.abs(xp[..., 0]) - 0.6, 0,
                                                                 None), L=0.03)
    a = _field(base).distance(np.array([0.0, 0.1]), -0.01)
    b = _field(bump).distance(np.array([0.0, 0.1]), -0.01)
    assert a == b


# derivatives and bounds ------------------------------------------------------

def test_flat_derivatives_are_exact():
    grad, dt, hess = FLAT.derivatives(np.array([[0.1, 0.2], [-0.3, 0.05]]), -0.1)
    np.testing.assert_allclose(grad, [[0, 1], [0, 1]], atol=1e-12)
    np.testing.assert_allclose(dt, 0, atol=1e-9)
    np.testing.assert_allclose(hess, 0, atol=1e-8)


def test_cone_normal_derivative_on_axis():
    grad, _, _ = CONE.derivatives(np.array([[0.0, 0.1]]), 0.0)
    assert grad[0, 1] == pytest.approx(1 / (1 + O.FROZEN["cone_moment_2d"] * 0.02), rel=1e-6)


def test_derivatives_refuse_near_boundary():
    with pytest.raises(ResolutionError):
        FLAT.derivatives(np.array([[0.0, 0.01]]), 0.0, min_distance=0.01)


def test_bound_report_flat_constant_zero():
    pts = np.array([[0.1, 0.2], [0.0, 0.05], [-0.2, 0.3]])
    rep = verify_regdist_bounds(FLAT, pts, -0.05)
    assert rep.C == 0.0
    assert "summary_C" in rep.to_csv()


@pytest.mark.parametrize("f", [CONE, PROFILE, WAVE], ids=["cone", "profile", "wave"])
def test_bound_report_constant_finite(f):
    rng = np.random.default_rng(0)
    g = f.domain.graph
    xp = rng.uniform(-0.4, 0.4, 40)
    t = rng.uniform(-0.2, 0.0, 40)
    gap = 10 ** rng.uniform(-2.5, -0.7, 40)
    pts = np.stack([xp, g(xp[:, None], t) + gap], axis=1)
    rep = verify_regdist_bounds(f, pts, t)
    assert np.isfinite(rep.C)
    assert rep.C < 10
    assert np.all(np.abs(rep.ratio_gap - 1) <= 2 * g.L)


def test_three_dimensional_cone():
    f = _field(BoundaryGraph.cone(0.03, n=3))
    d = f.distance(np.array([0.0, 0.0, 0.1]), 0.0)
    c3 = cone_moment(MollifierKernel(3))
    assert d == pytest.approx(0.1 / (1 + c3 * 0.03), rel=1e-10)
