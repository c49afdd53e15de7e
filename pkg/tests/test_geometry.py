import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ellipe

from rigidfluid.errors import GeometryError
from rigidfluid.geometry import (
    Ball,
    CurveCavity,
    Disk,
    FourierCurve,
    RectangleCavity,
    body_clearance,
    body_gap,
    boundary_integral,
    boundary_quadrature,
    directions,
    gauss_map_inverse,
    normal_at,
    torque_indicator,
)

SHAPES = [
    Disk((0.3, -0.2), 0.7),
    FourierCurve.ellipse((0.0, 0.0), 2.0, 1.0),
    FourierCurve.ellipse((1.0, 2.0), 1.0, 0.4, angle=0.6),
    FourierCurve.from_radial((0.0, 0.0), 1.0, [0.0, 0.05], [0.0, 0.0, 0.02]),
    FourierCurve.from_radial((0.5, 0.5), 0.8, [0.0, 0.03, 0.0, 0.01], [0.0, 0.04]),
]


def test_ellipse_area_and_perimeter():
    e = FourierCurve.ellipse((0.0, 0.0), 2.0, 1.0)
    assert e.area == pytest.approx(2 * np.pi, rel=1e-13)
    # complete elliptic integral of the second kind, parameter m = 1 - (b/a)^2
    assert e.perimeter == pytest.approx(4 * 2.0 * ellipe(1 - 0.25), rel=1e-12)


def test_disk_closed_forms():
    d = Disk((1.0, 0.0), 2.0)
    assert d.area == pytest.approx(4 * np.pi)
    assert d.perimeter == pytest.approx(4 * np.pi)
    assert d.is_circle
    assert np.allclose(d.centroid, [1.0, 0.0])


def test_negative_radius_is_rejected():
    with pytest.raises(GeometryError, match="radius"):
        Disk((0.0, 0.0), -1.0)
    with pytest.raises(GeometryError, match="radius"):
        Ball((0.0, 0.0, 0.0), 0.0)


@pytest.mark.parametrize("shape", SHAPES + [Ball((0.1, 0.2, 0.3), 0.9)])
def test_closed_surface_normal_integral_vanishes(shape):
    q = boundary_quadrature(shape)
    assert np.linalg.norm(boundary_integral(q, q.normals)) <= 1e-8


@pytest.mark.parametrize("shape", SHAPES)
def test_divergence_theorem_on_position(shape):
    # int x . n dS = 2 |B| in the plane
    q = boundary_quadrature(shape)
    val = boundary_integral(q, lambda x, n: np.sum(x * n, axis=1))
    assert val == pytest.approx(2 * shape.area, rel=1e-12)


@pytest.mark.parametrize("shape", SHAPES)
def test_projection_roundtrip(shape, rng):
    s = rng.uniform(0, 1, 50)
    n, _ = shape.normal(s)
    offs = rng.uniform(-0.05, 0.3, 50)
    pts = shape.point(s) + offs[:, None] * n
    s2, foot, d = shape.project(pts)
    assert np.allclose(foot, shape.point(s), atol=1e-10)
    assert np.allclose(d, offs, atol=1e-10)


@pytest.mark.parametrize("shape", SHAPES)
def test_gauss_map_inverse(shape):
    m = directions(37, 0.1)
    p = gauss_map_inverse(shape, m)
    s, _, _ = shape.project(p)
    n, _ = normal_at(shape, s)
    assert np.allclose(n, m, atol=1e-10)


def test_ball_gauss_map_and_area():
    b = Ball((1.0, 0.0, 0.0), 2.0)
    m = np.array([[0.0, 0.0, 1.0], [0.6, 0.8, 0.0]])
    assert np.allclose(b.gauss_map_inverse(m), b.center + 2.0 * m)
    assert b.surface_area == pytest.approx(16 * np.pi)
    assert boundary_quadrature(b).measure == pytest.approx(16 * np.pi, rel=1e-13)


def test_torque_indicator_vanishes_on_centered_circle():
    d = Disk((0.2, 0.1), 1.3)
    assert np.max(np.abs(torque_indicator(d, d.center, directions(64)))) < 1e-13


def test_torque_indicator_of_offset_disk():
    # disk radius 2 at (1, 0) with barycenter at the origin: T(m) = (1, 0) . perp(m)
    d = Disk((1.0, 0.0), 2.0)
    m = directions(16)
    T = torque_indicator(d, (0.0, 0.0), m)
    assert np.allclose(T, -m[:, 1], atol=1e-13)


def test_moved_shape_is_rigid():
    e = SHAPES[3]
    mv = e.moved(translation=(0.3, -0.1), angle=0.7, pivot=(0.1, 0.2))
    assert mv.area == pytest.approx(e.area, rel=1e-13)
    assert mv.perimeter == pytest.approx(e.perimeter, rel=1e-13)


def test_cavities_and_clearance():
    box = RectangleCavity((0, 0), (2, 1))
    d = Disk((0.5, 0.5), 0.2)
    assert body_clearance(box, d) == pytest.approx(0.3)
    assert body_gap(d, Disk((1.5, 0.5), 0.3)) == pytest.approx(0.5)
    cav = CurveCavity(Disk((0, 0), 1.0))
    assert body_clearance(cav, Disk((0.1, 0.0), 0.5)) == pytest.approx(0.4, abs=1e-9)
    with pytest.raises(GeometryError):
        RectangleCavity((0, 0), (0, 1))


@settings(max_examples=25, deadline=None)
@given(
    st.floats(0.5, 2.0),
    st.lists(st.floats(-0.03, 0.03), min_size=3, max_size=3),
    st.floats(0, 2 * np.pi),
)
def test_random_convex_curves_close(r0, pert, angle):
    c = FourierCurve.from_radial((0.0, 0.0), r0, [0.0, pert[0] * r0], [0.0, pert[1] * r0, pert[2] * r0])
    c = c.moved(angle=angle)
    q = boundary_quadrature(c)
    assert np.linalg.norm(boundary_integral(q, q.normals)) <= 1e-8 * r0
