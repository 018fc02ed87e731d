import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crlab.grid import (
    GridSpec,
    SingularFrame,
    coordinate_frame,
    derivative,
    exterior_derivative,
    heisenberg_frame,
    integrate,
    l2_norm,
    pointwise_solve,
    wedge,
)

TWO_PI = 2 * math.pi


def test_spacing_and_volume():
    spec = GridSpec((8, 16, 8), periods=(1.0, 2.0, 1.0))
    assert spec.spacing == pytest.approx((0.125, 0.125, 0.125))
    assert spec.volume == pytest.approx(2.0)
    assert spec.names == ("x", "y", "t")
    assert spec.pairs == [(0, 1), (0, 2), (1, 2)]


def test_axis_names_n2():
    assert GridSpec((8,) * 5).names == ("x1", "y1", "x2", "y2", "t")


@pytest.mark.parametrize("axis", [0, 1, 2])
@pytest.mark.parametrize("k", [1, 3, 7])
def test_spectral_derivative_exact_on_modes(axis, k):
    spec = GridSpec((16, 16, 16))
    x = spec.coord(axis)
    f = np.sin(TWO_PI * k * x) + np.zeros(spec.dims)
    df = derivative(f, spec, axis)
    assert np.max(np.abs(df - TWO_PI * k * np.cos(TWO_PI * k * x))) < 1e-11


def test_nyquist_mode_is_dropped():
    spec = GridSpec((8, 8, 8))
    f = np.cos(TWO_PI * 4 * spec.coord(0)) + np.zeros(spec.dims)
    assert np.max(np.abs(derivative(f, spec, 0))) < 1e-12


def test_constant_axis_gives_exact_zero():
    spec = GridSpec((8, 8, 8))
    f = np.sin(TWO_PI * spec.coord(0)) + np.zeros(spec.dims)
    assert not np.any(derivative(f, spec, 2))


def test_fd4_order():
    errs = []
    for n in (16, 32, 64):
        spec = GridSpec((n, 8, 8), scheme="fd4")
        x = spec.coord(0)
        f = np.exp(np.sin(TWO_PI * x)) + np.zeros(spec.dims)
        exact = TWO_PI * np.cos(TWO_PI * x) * f
        errs.append(np.max(np.abs(derivative(f, spec, 0) - exact)))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) > 3.5


def test_complex_input_keeps_imaginary_part():
    spec = GridSpec((16, 8, 8))
    x = spec.coord(0)
    f = np.exp(1j * TWO_PI * x) + np.zeros(spec.dims)
    assert np.max(np.abs(derivative(f, spec, 0) - 1j * TWO_PI * f)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6), st.integers(0, 2))
def test_derivative_integrates_to_zero(c, axis):
    spec = GridSpec((12, 12, 12))
    x, y, t = spec.coords().values()
    f = (c[0] * np.sin(TWO_PI * x) + c[1] * np.cos(TWO_PI * (y + t)) + c[2] * np.sin(TWO_PI * (x - 2 * y))
         + c[3] * np.cos(2 * TWO_PI * t) + c[4] * x * 0 + c[5])
    f = f + np.zeros(spec.dims)
    assert abs(integrate(derivative(f, spec, axis), spec)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_derivative_is_linear(a, b):
    spec = GridSpec((8, 8, 8))
    x, y, t = spec.coords().values()
    f = np.sin(TWO_PI * (x + y)) + np.zeros(spec.dims)
    g = np.cos(TWO_PI * (y - t)) + np.zeros(spec.dims)
    lhs = derivative(a * f + b * g, spec, 1)
    rhs = a * derivative(f, spec, 1) + b * derivative(g, spec, 1)
    assert np.max(np.abs(lhs - rhs)) < 1e-11


def test_integrate_and_norm():
    spec = GridSpec((8, 8, 8))
    assert integrate(np.ones(spec.dims), spec) == pytest.approx(1.0)
    f = np.sin(TWO_PI * spec.coord(0)) + np.zeros(spec.dims)
    assert l2_norm(f, spec) == pytest.approx(math.sqrt(0.5))


def test_heisenberg_bracket_constants():
    spec = GridSpec((8, 8, 8))
    fr = heisenberg_frame(spec)
    # [X, Y] = -T
    assert fr.structure[0, 1, 2] == -1
    assert fr.structure[1, 0, 2] == 1


def test_d_squared_vanishes_coordinate_frame(rng):
    spec = GridSpec((12, 12, 12))
    x, y, t = spec.coords().values()
    f = np.sin(TWO_PI * (x + 2 * t)) * np.cos(TWO_PI * y) + np.zeros(spec.dims)
    fr = coordinate_frame(spec)
    assert np.max(np.abs(exterior_derivative(fr.grad(f), fr))) < 1e-10


def test_d_squared_vanishes_heisenberg_frame():
    spec = GridSpec((12, 12, 12))
    x, y, _ = spec.coords().values()
    f = np.sin(TWO_PI * x) * np.cos(TWO_PI * (x - y)) + np.zeros(spec.dims)
    fr = heisenberg_frame(spec)
    assert np.max(np.abs(exterior_derivative(fr.grad(f), fr))) < 1e-10


def test_d_of_contact_form_is_symplectic():
    spec = GridSpec((8, 8, 8))
    fr = heisenberg_frame(spec)
    theta = np.zeros((3,) + spec.dims)
    theta[2] = 1.0
    dtheta = exterior_derivative(theta, fr)
    # d theta (X, Y) = -theta([X, Y]) = 1
    assert np.allclose(dtheta[0], 1.0) and np.allclose(dtheta[1:], 0.0)


def test_wedge_antisymmetric():
    spec = GridSpec((8, 8, 8))
    a = np.random.default_rng(0).normal(size=(3,) + spec.dims)
    b = np.random.default_rng(1).normal(size=(3,) + spec.dims)
    assert np.allclose(wedge(a, b, spec), -wedge(b, a, spec))


def test_pointwise_solve_and_singular():
    A = np.array([[2.0, 1.0], [0.0, 3.0]])[..., None].repeat(5, axis=-1)
    b = np.array([1.0, 3.0])[:, None].repeat(5, axis=-1)
    x = pointwise_solve(A, b)
    assert np.allclose(x[:, 0], [0.0, 1.0])
    with pytest.raises(SingularFrame):
        pointwise_solve(np.zeros((2, 2, 3)), np.ones((2, 3)))


def test_invalid_axis():
    spec = GridSpec((8, 8, 8))
    with pytest.raises(IndexError):
        derivative(np.zeros(spec.dims), spec, 3)
