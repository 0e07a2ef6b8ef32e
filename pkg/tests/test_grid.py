import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parbound.errors import ContractError, ResolutionError
from parbound.geometry import ParabolicCylinder, ParabolicPoint
from parbound.grid import GridFunction, GridSpec


def _grid(N=4, M=8, r=0.5):
    return GridSpec.on([0.0, 0.1], -0.2, r, N, M)


def test_spacing_and_nodes():
    g = _grid()
    assert g.shape == (9, 9)
    assert g.axes[0][0] == -0.5 and g.axes[1][-1] == pytest.approx(0.6)
    assert g.times[0] == pytest.approx(-0.45) and g.times[-1] == pytest.approx(-0.2)
    assert g.coordinates().shape == (9, 9, 2)
    assert g.wall_mask().sum() == 32


def test_spacing_must_divide_radius():
    cyl = ParabolicCylinder(ParabolicPoint((0.0, 0.0), 0.0), 0.5)
    with pytest.raises(ResolutionError):
        GridSpec(cyl, 0.3, 0.25)
    g = GridSpec.from_steps(cyl, 0.3, 0.1)
    assert g.N == 2 and g.M == 3


def test_header_round_trip():
    g = _grid()
    assert GridSpec.from_header(g.header()) == g


def test_values_shape_checked():
    g = _grid()
    with pytest.raises(ContractError):
        GridFunction(g, np.zeros((2, 9, 8)), [0.0, 0.1])
    with pytest.raises(ContractError):
        GridFunction(g, np.full((1, 9, 9), np.inf), [0.0])


def test_slab_round_trip_preserves_nan():
    g = _grid()
    rng = np.random.default_rng(0)
    v = rng.normal(size=(3, 9, 9))
    v[1, 2, 3] = np.nan
    f = GridFunction(g, v, g.times[[0, 4, 8]])
    back = GridFunction.from_slab(f.to_slab())
    assert back.grid == g
    np.testing.assert_array_equal(back.values, v)
    np.testing.assert_array_equal(back.times, f.times)


@given(st.floats(-0.5, 0.5), st.floats(-0.4, 0.6), st.floats(-0.45, -0.2))
def test_interpolation_exact_for_bilinear_in_space_linear_in_time(x, y, t):
    g = _grid()
    X = g.coordinates()
    ts = g.times
    u = lambda X, t: 1 + 2 * X[..., 0] - X[..., 1] + 3 * X[..., 0] * X[..., 1] + 0.5 * t
    vals = np.stack([u(X, tv) for tv in ts])
    f = GridFunction(g, vals, ts)
    got = f.interpolate(np.array([[x, y]]), t)[0]
    assert got == pytest.approx(u(np.array([x, y]), t), abs=1e-12)


def test_interpolation_outside_grid():
    g = _grid()
    f = GridFunction(g, np.zeros((g.M + 1,) + g.shape), g.times)
    with pytest.raises(ResolutionError):
        f.interpolate(np.array([[0.7, 0.0]]), -0.3)
    with pytest.raises(ResolutionError):
        f.interpolate(np.array([[0.0, 0.0]]), 0.0)


def test_nan_corner_only_matters_with_weight():
    g = _grid()
    v = np.ones((1,) + g.shape)
    v[0, 5, 5] = np.nan
    f = GridFunction(g, v, g.times[-1:])
    node = np.array([[g.axes[0][4], g.axes[1][4]]])
    assert f.interpolate(node, g.times[-1])[0] == 1.0
    mid = node + 0.5 * g.h
    assert np.isnan(f.interpolate(mid, g.times[-1])[0])


def test_slice_csv_and_scaling():
    g = _grid(N=2, M=1)
    v = np.arange(2 * 25, dtype=float).reshape(2, 5, 5)
    v[1, 0, 0] = np.nan
    f = 2.0 * GridFunction(g, v, g.times)
    text = f.slice_csv(1, header=["note"])
    lines = text.splitlines()
    assert lines[0] == "# note" and lines[1] == "x1,x2,t,u"
    assert lines[2].endswith(",")            # NaN written as an empty field
    assert len(lines) == 2 + 25
    np.testing.assert_array_equal(f.slice_at(g.times[0]), 2 * v[0])
