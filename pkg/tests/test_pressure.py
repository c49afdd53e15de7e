import numpy as np
import pytest

from rigidfluid.dynamics import BodyTrajectory, PrescribedMotion, BodyMotion, Signal
from rigidfluid.eos import PressureLaw
from rigidfluid.errors import GeometryError, InputError, TorqueUnreachableError
from rigidfluid.geometry import (
    Disk,
    FourierCurve,
    RectangleCavity,
    boundary_quadrature,
    cross2,
    directions,
)
from rigidfluid.pressure import (
    SynthesizedPressure,
    atom_at_direction,
    ball_translation_pressure,
    force_atom_2d,
    make_cutoff,
    motion_pressure_2d,
    solve_offset,
    torque_pressure_2d,
)

ELLIPSE = FourierCurve.ellipse((0.0, 0.0), 1.0, 0.5, angle=0.2)
RADIAL = FourierCurve.from_radial((0.1, 0.0), 1.0, [0.0, 0.04], [0.0, 0.0, 0.02])


def wrench(shape, values_fn, x_B, breakpoints=None):
    q = boundary_quadrature(shape, breakpoints=breakpoints)
    p = values_fn(q.params)
    F = (q.weights * p) @ q.normals
    tau = float(np.sum(q.weights * p * cross2(q.nodes - x_B, q.normals)))
    return F, tau, p


@pytest.mark.parametrize("shape", [Disk((0, 0), 1.0), ELLIPSE, RADIAL])
@pytest.mark.parametrize("s0", [0.0, 0.13, 0.5, 0.77])
def test_force_atom_contract(shape, s0):
    a = force_atom_2d(shape, s0, magnitude=2.5)
    F, _, p = wrench(shape, a.boundary_values, shape.centroid, list(a.support))
    n, _ = shape.normal(np.array([s0]))
    assert np.allclose(F, 2.5 * n[0], atol=1e-9)
    assert np.all(p >= 0)
    s = np.linspace(0, 1, 2001)
    v = a.boundary_values(s)
    lo, hi = a.support
    inside = np.mod(s - lo, 1.0) < np.mod(hi - lo, 1.0)
    assert np.all(v[~inside] == 0.0)


def test_force_atom_from_point_and_direction():
    x0 = ELLIPSE.point(np.array([0.3]))[0]
    a = force_atom_2d(ELLIPSE, x0)
    assert a.s0 == pytest.approx(0.3, abs=1e-10)
    m = np.array([0.0, 1.0])
    b = atom_at_direction(ELLIPSE, m)
    assert np.allclose(b.force, m, atol=1e-12)


def test_torque_pressure_on_ellipse():
    for sign in (1, -1):
        c = torque_pressure_2d(ELLIPSE, ELLIPSE.centroid, sign)
        F, tau, p = wrench(ELLIPSE, c.boundary_values, ELLIPSE.centroid, c.breakpoints)
        assert np.linalg.norm(F) <= 1e-10
        assert tau == pytest.approx(sign, abs=1e-10)
        assert np.all(p >= 0)


def test_torque_unreachable_on_centered_circle():
    d = Disk((0.3, 0.2), 0.5)
    with pytest.raises(TorqueUnreachableError, match="torque unreachable"):
        torque_pressure_2d(d, d.center)


def test_offset_disk_torque_is_lever_times_force():
    # any pressure on a circle has torque (c - x_B) x F about x_B
    d = Disk((1.0, 0.0), 2.0)
    rng = np.random.default_rng(3)
    for _ in range(5):
        atoms = [atom_at_direction(d, m) for m in directions(7, rng.uniform(0, 1))]
        w = rng.uniform(0.1, 1.0, len(atoms))
        bps = [b for a in atoms for b in a.support]
        F, tau, _ = wrench(d, lambda s: sum(c * a.boundary_values(s) for c, a in zip(w, atoms)),
                           np.zeros(2), bps)
        assert tau == pytest.approx(cross2(np.array([1.0, 0.0]), F), abs=1e-12)


def test_cutoff_requires_room():
    box = RectangleCavity((0, 0), (1, 1))
    d = Disk((0.5, 0.5), 0.2)
    c = make_cutoff(d, 0.1, box)
    v = c(np.array([[0.5, 0.7], [0.5, 0.72], [0.5, 0.76], [0.5, 0.799]]))
    assert v[0] == 1.0
    assert np.all(np.diff(v) < 0) and v[-1] >= 0
    assert c(np.array([[0.5, 0.85]]))[0] == 0.0
    assert c.support_measure == pytest.approx(np.pi * 0.3**2)
    with pytest.raises(GeometryError):
        make_cutoff(d, 0.35, box)
    with pytest.raises(GeometryError):
        make_cutoff(d, 0.1, box, others=[Disk((0.85, 0.5), 0.1)])


def test_ball_translation_pressure_force():
    d = Disk((0.5, 0.5), 0.2)
    cutoff = make_cutoff(d, 0.1)
    bp = ball_translation_pressure(d, 0.3, lambda t: np.array([np.cos(t), 2.0]), cutoff)
    F, tau = bp.wrench(0.4)
    assert np.allclose(F, 0.3 * np.array([np.cos(0.4), 2.0]), atol=1e-13)
    assert abs(tau) < 1e-13


def test_motion_pressure_realizes_force_and_torque():
    cutoff = make_cutoff(ELLIPSE, 0.1)
    times = np.linspace(0, 1, 9)

    def force(t):
        t = np.atleast_1d(t)
        return np.stack([np.sin(3 * t), -0.5 + 0 * t], axis=-1)

    def torque(t):
        return 0.2 * np.cos(2 * np.atleast_1d(t))

    bp = motion_pressure_2d(ELLIPSE, ELLIPSE.centroid, force, torque, cutoff, times)
    for t in (0.0, 0.33, 0.9):
        F, tau = bp.wrench(t)
        assert np.allclose(F, force(t)[0], atol=1e-10)
        assert tau == pytest.approx(torque(t)[0], abs=1e-10)
        assert np.all(bp.boundary_values(t) >= -1e-14)


def test_solve_offset_mass_and_infeasibility():
    law = PressureLaw(1.0, 1.4)
    vals = [np.array([-0.5, 0.0, 0.5])]
    ws = [np.array([0.1, 0.1, 0.1])]
    p0 = solve_offset(vals, ws, 1.0, law, 3.0)
    M = law.density(p0) * 1.0 + ws[0] @ law.density(vals[0] + p0)
    assert M == pytest.approx(3.0, rel=1e-13)
    with pytest.raises(InputError, match="feasible interval"):
        solve_offset(vals, ws, 1.0, law, 1e-6)


def test_synthesized_pressure_conserves_mass():
    box = RectangleCavity((0, 0), (2, 1))
    d = Disk((0.7, 0.5), 0.15)
    mot = PrescribedMotion([BodyMotion([Signal.from_spec({"sinusoid": {"amplitude": 0.6, "frequency": np.pi}}),
                                        Signal.from_spec(0.0)], [Signal.from_spec(0.0)])], 1.0)
    times = np.linspace(0, 1, 9)
    tr = BodyTrajectory(mot, 0, d.center, times)
    m = np.pi * 0.15**2
    bp = ball_translation_pressure(d, m, lambda t: mot.eta(0, t, 1), make_cutoff(d, 0.15, box), d.center, tr)
    sp = SynthesizedPressure([bp], PressureLaw(), 5.0, box)
    for t in (0.0, 0.5, 1.0):
        assert sp.fluid_mass(t) == pytest.approx(5.0, rel=1e-13)
    assert sp.fluid_volume == pytest.approx(2.0 - m)
