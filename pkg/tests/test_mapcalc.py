import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crlab import mapcalc as mc
from crlab.grid import derivative
from crlab.mapcalc import FrameMismatch, MapField
from crlab.target import embedded_sphere_2, flat_torus, webster_metric

TWO_PI = 2 * math.pi


def projection(spec):
    lift = np.zeros((2, 3))
    lift[0, 0] = lift[1, 1] = 1
    return MapField(flat_torus(2), np.zeros((2,) + spec.dims), lift)


def sphere_map(spec, a, b):
    x, y = spec.coord(0), spec.coord(1)
    w = np.stack([a * np.sin(TWO_PI * x) + np.zeros(spec.dims),
                  b * np.cos(TWO_PI * (x - y)) + np.zeros(spec.dims),
                  1 + 0.1 * np.sin(TWO_PI * y) + np.zeros(spec.dims)])
    return MapField(embedded_sphere_2(), w / np.sqrt(np.sum(w * w, axis=0)))


def test_constant_map_has_zero_derivatives(spec16, flat16):
    phi = MapField(flat_torus(3), np.full((3,) + spec16.dims, 0.25))
    D = mc.differentiate(phi, flat16)
    assert not np.any(D.T1) and not np.any(D.R)
    assert not np.any(mc.tension_b(phi, flat16, D))


def test_projection_derivatives(spec16, flat16):
    phi = projection(spec16)
    D = mc.differentiate(phi, flat16)
    assert np.allclose(D.T1[0][:, 0, 0, 0], np.array([1, -1j]) / math.sqrt(2))
    assert np.max(np.abs(D.R)) == 0
    assert np.max(np.abs(mc.tension_b(phi, flat16, D))) < 1e-13


def test_points_include_winding(spec16):
    q = projection(spec16).points(spec16)
    assert np.allclose(q[0], spec16.coord(0) + np.zeros(spec16.dims))


def test_scalar_tension_is_sublaplacian(spec16, flat16):
    x, y = spec16.coord(0), spec16.coord(1)
    f = np.sin(TWO_PI * x) * np.cos(2 * TWO_PI * y) + np.zeros(spec16.dims)
    tau = mc.tension_b(MapField(flat_torus(1), f[None]), flat16)[0]
    lap = -(derivative(derivative(f, spec16, 0), spec16, 0) + derivative(derivative(f, spec16, 1), spec16, 1))
    assert np.max(np.abs(tau - lap)) < 1e-10


def test_identity_into_webster_is_harmonic(spec16, flat16):
    phi = MapField(webster_metric(), np.zeros((3,) + spec16.dims), np.eye(3))
    D = mc.differentiate(phi, flat16)
    assert np.max(np.abs(mc.tension_b(phi, flat16, D))) < 1e-13
    assert np.allclose(D.R[:, 0, 0, 0], [0, 0, 1])
    assert np.max(np.abs(mc.reeb_second(phi, flat16, D))) < 1e-13


@settings(max_examples=10, deadline=None)
@given(st.floats(-0.2, 0.2), st.floats(-0.2, 0.2))
def test_sphere_sections_are_tangent(spec16, flat16, a, b):
    phi = sphere_map(spec16, a, b)
    D = mc.differentiate(phi, flat16)
    w = phi.values
    for sec in (D.T1[0], D.R, mc.tension_b(phi, flat16, D), mc.reeb_second(phi, flat16, D),
                mc.s_b(D.R, phi, flat16, D), mc.delta_nabla(D.R, phi, flat16, D)):
        assert np.max(np.abs(np.sum(sec * w, axis=0))) < 1e-12


def test_s_b_on_sphere_matches_formula(spec16, flat16):
    phi = sphere_map(spec16, 0.1, 0.2)
    D = mc.differentiate(phi, flat16)
    X = D.T1bar[0].real
    A, B = D.T1[0], D.T1bar[0]
    dot = lambda u, v: np.sum(u * v, axis=0)
    expected = (dot(A, B) * X - dot(X, B) * A) + (dot(B, A) * X - dot(X, A) * B)
    assert np.max(np.abs(mc.s_b(X, phi, flat16, D) - expected)) < 1e-12


def test_s_b_vanishes_on_flat_target(spec16, flat16):
    phi = projection(spec16)
    D = mc.differentiate(phi, flat16)
    assert not np.any(mc.s_b(D.T1[0], phi, flat16, D))


def test_im_part():
    assert np.allclose(mc.im_part(np.array([1 + 2j, -3j])), [2, -3])


def test_component_count_checked(spec16):
    with pytest.raises(FrameMismatch):
        MapField(flat_torus(2), np.zeros((3,) + spec16.dims))


def test_sphere_map_must_be_unit(spec16):
    with pytest.raises(ValueError):
        MapField(embedded_sphere_2(), np.ones((3,) + spec16.dims))


def test_divergence_needs_every_frame_vector(spec16, flat16):
    phi = projection(spec16)
    with pytest.raises(FrameMismatch):
        mc.divergence_b(np.zeros((2, 2) + spec16.dims), np.zeros((2, 2) + spec16.dims), phi, flat16)
