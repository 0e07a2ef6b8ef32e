import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import _oracles as O
from parbound.barriers import (SUB, SUPER, BarrierSpec, EllipticityPair, barrier_residual,
                               build_case, calibrate_C0, extremal_matrix, pucci_minus,
                               pucci_plus, working_seminorm)
from parbound.errors import CalibrationError, ContractError
from parbound.geometry import BoundaryGraph, ParabolicDomain
from parbound.regdist import RegularizedDistanceField

UNIT = EllipticityPair(1.0, 1.0)
ELL = EllipticityPair(1.0, 2.0)

sym = hnp.arrays(float, (3, 3), elements=st.floats(-5, 5)).map(lambda a: a + a.T)


# Pucci operators ----------------------------------------------------------

def test_pucci_diagonal_example():
    H = np.diag([2.0, -1.0])
    assert pucci_minus(H, ELL) == 0.0      # 1*2 + 2*(-1)
    assert pucci_plus(H, ELL) == 3.0       # 2*2 + 1*(-1)
    assert pucci_plus(np.diag([3.0, 0.0]), ELL) == 6.0


def test_unit_ellipticity_is_trace():
    H = np.array([[1.0, 0.3], [0.3, -4.0]])
    assert pucci_minus(H, UNIT) == pytest.approx(np.trace(H))
    assert pucci_plus(H, UNIT) == pytest.approx(np.trace(H))


def test_nonsymmetric_rejected():
    with pytest.raises(ContractError):
        pucci_minus(np.array([[0.0, 1.0], [0.0, 0.0]]), ELL)
    with pytest.raises(ContractError):
        EllipticityPair(2.0, 1.0)


@given(sym)
def test_duality(H):
    assert pucci_plus(H, ELL) == pytest.approx(-pucci_minus(-H, ELL), abs=1e-12)
    assert pucci_minus(H, ELL) <= pucci_plus(H, ELL) + 1e-12


@given(sym, st.floats(0.0, 10.0))
def test_positive_homogeneity(H, s):
    assert pucci_minus(s * H, ELL) == pytest.approx(s * pucci_minus(H, ELL), abs=1e-9)


@given(sym, hnp.arrays(float, 3, elements=st.floats(0, 3)))
def test_monotone_in_matrix_order(H, p):
    Q, _ = np.linalg.qr(np.eye(3) + 0.1 * np.outer(p, p[::-1]))
    P = Q @ np.diag(p) @ Q.T
    P = 0.5 * (P + P.T)
    assert pucci_minus(H + P, ELL) >= pucci_minus(H, ELL) - 1e-9
    assert pucci_plus(H + P, ELL) >= pucci_plus(H, ELL) - 1e-9


@given(sym)
def test_extremal_matrix_attains(H):
    A = extremal_matrix(H, ELL, "minus")
    ev = np.linalg.eigvalsh(A)
    assert ev.min() >= 1 - 1e-9 and ev.max() <= 2 + 1e-9
    assert np.trace(A @ H) == pytest.approx(pucci_minus(H, ELL), abs=1e-9)
    B = extremal_matrix(H, ELL, "plus")
    assert np.trace(B @ H) == pytest.approx(pucci_plus(H, ELL), abs=1e-9)


def test_brute_force_minimum_dominates():
    rng = np.random.default_rng(0)
    for _ in range(5):
        H = rng.normal(size=(2, 2))
        H = H + H.T
        brute = O.brute_pucci_minus(H, 1.0, 2.0, 20_000, rng)
        exact = pucci_minus(H, ELL)
        assert exact <= brute + 1e-12
        assert brute - exact <= 1e-3 * max(1.0, abs(exact))


def test_batched_evaluation():
    H = np.stack([np.diag([1.0, -1.0]), np.diag([-2.0, -3.0])])
    np.testing.assert_allclose(pucci_minus(H, ELL), [-1.0, -10.0])


# barriers ------------------------------------------------------------------

FLAT = RegularizedDistanceField(ParabolicDomain(BoundaryGraph.flat(), 1.0))


def test_exponent_range_and_side():
    with pytest.raises(ContractError):
        BarrierSpec(0.5, SUB)
    with pytest.raises(ContractError):
        BarrierSpec(0.1, "both")
    assert BarrierSpec(0.2, SUB).power == 1.2
    assert BarrierSpec(0.2, SUPER).power == 0.8


def test_checked_requires_exponent_above_threshold():
    with pytest.raises(ContractError):
        BarrierSpec.checked(0.01, SUB, 2.0, 0.05)
    assert BarrierSpec.checked(0.1, SUB, 2.0, 0.05).epsilon == 0.1


def test_flat_super_barrier_residual():
    r = barrier_residual(FLAT, BarrierSpec(0.1, SUPER), [[0.0, 0.5]], -0.1, UNIT)
    assert r[0] == pytest.approx(O.FROZEN["flat_super_0.5_0.1"], rel=1e-8)
    assert r[0] > 0


def test_flat_sub_barrier_residual():
    r = barrier_residual(FLAT, BarrierSpec(0.1, SUB), [[0.2, 0.5]], -0.1, UNIT)
    assert r[0] == pytest.approx(O.FROZEN["flat_sub_0.5_0.1"], rel=1e-8)
    assert r[0] < 0


@given(st.floats(0.05, 0.45), st.floats(0.01, 0.4))
def test_flat_signs_for_every_exponent(x, eps):
    pts = [[0.0, x]]
    assert barrier_residual(FLAT, BarrierSpec(eps, SUB), pts, -0.1, ELL)[0] <= 0
    assert barrier_residual(FLAT, BarrierSpec(eps, SUPER), pts, -0.1, ELL)[0] >= 0


# calibration ----------------------------------------------------------------

def test_working_seminorm():
    assert working_seminorm(BoundaryGraph.flat(), 0.25) == 0.0
    assert working_seminorm(BoundaryGraph.cone(0.05), 0.25) == pytest.approx(0.05, rel=1e-9)


def test_calibration_on_flat_domain_hits_lower_end():
    case = build_case(FLAT, 0.25, 40, seed=1)
    rep = calibrate_C0([case], UNIT)
    assert rep.C0 == 0.1
    assert rep.minimal_eps == [0.0]
    assert "summary_C0" in rep.to_csv()


@pytest.fixture(scope="module")
def cone_case():
    f = RegularizedDistanceField(ParabolicDomain(BoundaryGraph.cone(0.05), 1.0))
    return build_case(f, 0.25, 60, seed=1)


def test_calibrated_constant_gives_signs(cone_case):
    rep = calibrate_C0([cone_case], UNIT)
    assert 0.1 < rep.C0 < 10
    eps = rep.C0 * cone_case.seminorm
    sub, sup = cone_case.residuals(eps, UNIT)
    assert np.all(sub <= 1e-8) and np.all(sup >= -1e-8)
    # the bisection returns the smallest admissible constant up to its tolerance
    assert not cone_case.holds(0.99 * eps, UNIT, 1e-8)


def test_constant_grows_as_ellipticity_degrades(cone_case):
    c = [calibrate_C0([cone_case], EllipticityPair(lam, 1.0)).C0 for lam in (1.0, 0.75, 0.5)]
    assert c[0] <= c[1] <= c[2]


def test_calibration_reports_impossible_cases(cone_case):
    # with an extreme ellipticity ratio no exponent below 1/2 works
    with pytest.raises(CalibrationError):
        calibrate_C0([cone_case], EllipticityPair(0.01, 1.0))
