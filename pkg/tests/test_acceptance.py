"""Acceptance criteria 1-9, each timed and reported in the terminal summary.

Every check uses an oracle that is independent of the code path under test:
wrenches are recomputed with a fresh boundary quadrature, Newton scales from
the analytic motion, and the Neumann solver against a closed-form solution.
"""

import time

import numpy as np
import pytest

from conftest import record_acceptance
from oracles import mms_error, observed_orders

from rigidfluid.admissibility import lambda_max_rank_one
from rigidfluid.dynamics import BodyTrajectory, fit_density_for_barycenter, mass_properties
from rigidfluid.eos import PressureLaw
from rigidfluid.errors import TorqueUnreachableError
from rigidfluid.geometry import Ball, Disk, FourierCurve, boundary_quadrature, cross2
from rigidfluid.pipeline import max_newton_residual, run_pipeline, run_restarts, run_reversal
from rigidfluid.pressure import atom_at_direction, force_atom_2d, torque_pressure_2d
from rigidfluid.scenario import load_scenario

SEED = 20240611
DISK_SCENARIO = "scenarios/translating_disk.toml"

SHAPES = {
    "circle": Disk((0.2, -0.1), 0.8),
    "ellipse_a": FourierCurve.ellipse((0.0, 0.0), 1.0, 0.5, angle=0.0),
    "ellipse_b": FourierCurve.ellipse((0.3, 0.4), 0.6, 0.45, angle=0.7),
    "fourier_a": FourierCurve.from_radial((0.0, 0.0), 1.0, [0.0, 0.05], [0.0, 0.0, 0.03]),
    "fourier_b": FourierCurve.from_radial((0.1, 0.2), 0.7, [0.02, 0.0, 0.015], [0.0, 0.03]),
}


def _curve_wrench(shape, values, x_B, breakpoints=None):
    q = boundary_quadrature(shape, breakpoints=breakpoints)
    p = values(q.params)
    F = (q.weights * p) @ q.normals
    tau = float(np.sum(q.weights * p * cross2(q.nodes - x_B, q.normals)))
    return F, tau


def _random_mixture(shape, rng, n_atoms=4, n_modes=4):
    """Random nonnegative atoms plus a random smooth Fourier pressure in the parameter."""
    ang = rng.uniform(0, 2 * np.pi, n_atoms)
    atoms = [atom_at_direction(shape, m) for m in np.stack([np.cos(ang), np.sin(ang)], -1)]
    w = rng.uniform(0.0, 2.0, n_atoms)
    a, b = rng.normal(size=(2, n_modes))
    k = np.arange(1, n_modes + 1)

    def values(s):
        s = np.asarray(s)
        v = 3.0 + np.cos(2 * np.pi * np.outer(s, k)) @ a + np.sin(2 * np.pi * np.outer(s, k)) @ b
        for c, at in zip(w, atoms):
            v = v + c * at.boundary_values(s)
        return v

    return values, [x for at in atoms for x in at.support]


def test_criterion_1_hetero_ball_torque():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 1)
    disk = Disk((1.0, 0.0), 2.0)
    x_B = mass_properties(disk, fit_density_for_barycenter(disk, (0.0, 0.0))).barycenter
    area = disk.area
    worst_F, worst_tau = 0.0, 0.0
    for _ in range(50):
        values, bps = _random_mixture(disk, rng)
        F0, _ = _curve_wrench(disk, values, x_B, bps)
        # a linear term a.(z - c) contributes force |B| a on any body
        lin = (np.array([0.0, 1.0]) - F0) / area

        def total(s, values=values, lin=lin):
            z = disk.point(np.asarray(s))
            return values(s) + (z - disk.center) @ lin

        F, tau = _curve_wrench(disk, total, x_B, bps)
        worst_F = max(worst_F, float(np.linalg.norm(F - [0.0, 1.0])))
        worst_tau = max(worst_tau, abs(tau - 1.0))
    dt = time.perf_counter() - t0
    ok = worst_tau <= 1e-6 and worst_F <= 1e-9 and np.linalg.norm(x_B) < 1e-9 and dt < 5
    record_acceptance(1, "hetero-ball torque identity", ok,
                      f"max |torque - 1| = {worst_tau:.1e}, max |F - (0,1)| = {worst_F:.1e}, "
                      f"|x_B| = {np.linalg.norm(x_B):.0e}", dt, 5)
    assert ok


def test_criterion_2_homogeneous_ball_obstruction():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 2)
    disk = Disk((0.3, -0.2), 0.7)
    worst = 0.0
    for _ in range(100):
        values, bps = _random_mixture(disk, rng)
        _, tau = _curve_wrench(disk, values, disk.center, bps)
        worst = max(worst, abs(tau))
    ball = Ball((0.1, 0.2, -0.3), 0.6)
    q = boundary_quadrature(ball)
    for _ in range(100):
        c = rng.normal(size=(4, 3))
        d = q.normals
        p = 2.0 + np.sin(d @ c[0]) + (d @ c[1]) ** 2 + np.cos(3 * d @ c[2]) * (d @ c[3])
        tau = (q.weights * p) @ np.cross(q.nodes - ball.center, q.normals)
        worst = max(worst, float(np.linalg.norm(tau)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 5
    record_acceptance(2, "homogeneous-ball rotation obstruction", ok,
                      f"max |torque| = {worst:.1e} over 100 disk + 100 sphere pressures", dt, 5)
    assert ok


def test_criterion_3_force_atoms():
    t0 = time.perf_counter()
    worst_ang, worst_mag, worst_neg, leak = 0.0, 0.0, 0.0, 0.0
    s_dense = np.linspace(0.0, 1.0, 4001)
    for name, shape in SHAPES.items():
        for s0 in (np.arange(8) + 0.37) / 8:
            mag = 1.0 + 3 * s0
            at = force_atom_2d(shape, s0, magnitude=mag)
            F, _ = _curve_wrench(shape, at.boundary_values, shape.centroid, list(at.support))
            n = shape.normal(np.array([s0]))[0][0]
            ang = abs(np.arctan2(cross2(n, F), n @ F))
            worst_ang = max(worst_ang, float(ang))
            worst_mag = max(worst_mag, abs(np.linalg.norm(F) - mag) / mag)
            v = at.boundary_values(s_dense)
            worst_neg = min(worst_neg, float(v.min()))
            lo, hi = at.support
            outside = np.mod(s_dense - lo, 1.0) > np.mod(hi - lo, 1.0)
            leak = max(leak, float(np.abs(v[outside]).max()))
    dt = time.perf_counter() - t0
    ok = worst_ang <= 1e-7 and worst_mag <= 1e-7 and worst_neg >= 0 and leak == 0 and dt < 30
    record_acceptance(3, "force atoms", ok,
                      f"angle {worst_ang:.1e} rad, magnitude {worst_mag:.1e} rel, "
                      f"min p {worst_neg:.1e}, leak {leak:.1e}", dt, 30)
    assert ok


def test_criterion_4_torque_pressures():
    t0 = time.perf_counter()
    worst_rel, min_tau, neg = 0.0, np.inf, 0.0
    for name, shape in SHAPES.items():
        if name == "circle":
            continue
        for x_B in (shape.centroid, shape.centroid + [0.05, -0.03]):
            for sign in (1, -1):
                c = torque_pressure_2d(shape, x_B, sign)
                F, tau = _curve_wrench(shape, c.boundary_values, x_B, c.breakpoints)
                scale = float(sum(k * np.linalg.norm(a.force) for k, a in zip(c.coeffs, c.atoms)))
                worst_rel = max(worst_rel, float(np.linalg.norm(F)) / scale)
                min_tau = min(min_tau, sign * tau)
                neg = min(neg, float(np.min(c.coeffs)))
    unreachable = []
    for disk in (SHAPES["circle"], Disk((0.0, 0.0), 2.0)):
        try:
            torque_pressure_2d(disk, disk.center)
            unreachable.append(False)
        except TorqueUnreachableError as exc:
            unreachable.append("torque unreachable" in str(exc))
    dt = time.perf_counter() - t0
    ok = worst_rel <= 1e-8 and min_tau >= 0.5 and neg >= 0 and all(unreachable) and dt < 30
    record_acceptance(4, "torque pressures", ok,
                      f"max |F|/scale {worst_rel:.1e}, min signed torque {min_tau:.3g}, "
                      f"circles unreachable {all(unreachable)}", dt, 30)
    assert ok


def test_criterion_5_neumann_mms():
    t0 = time.perf_counter()
    hs = [1 / 8, 1 / 16, 1 / 32, 1 / 64]
    errs = [mms_error(h)[0] for h in hs]
    pair, fit = observed_orders(hs, errs)
    dt = time.perf_counter() - t0
    ok = bool(np.all(pair >= 1.9)) and errs[-1] <= 1e-4 and dt < 120
    record_acceptance(5, "Neumann solver MMS", ok,
                      f"orders {np.round(pair, 3).tolist()}, error at h=1/64 {errs[-1]:.2e}", dt, 120)
    assert ok


# --------------------------------------------------------------------------
# end-to-end criteria share one forward run at 64 slices

@pytest.fixture(scope="module")
def forward():
    sc = load_scenario(DISK_SCENARIO)
    t0 = time.perf_counter()
    rep = run_pipeline(sc, threads=4)
    return sc, rep, time.perf_counter() - t0


def _newton_scale(sc, rep):
    """m |eta'|_max from the analytic motion on a dense grid."""
    m = rep.artifacts["props"][0].mass
    t = np.linspace(0.0, sc.T, 4001)
    acc = np.linalg.norm(np.atleast_2d(sc.motion().eta(0, t, 1)), axis=-1)
    return m * float(acc.max())


@pytest.mark.slow
def test_criterion_6_end_to_end(forward):
    sc, rep, dt = forward
    assert sc.slices == 64
    detail = rep.verdict
    ok = rep.certified
    if ok:
        fF, fT = max_newton_residual(rep)
        newton_tol = 1e-6 * _newton_scale(sc, rep)
        comp = rep.stage("compatibility").data
        m_fluid = rep.stage("synthesis").data["fluid_mass"]
        tol_compat = 1e-6 * m_fluid / sc.T
        sch = rep.artifacts["final_schedule"]
        eps_half = 0.5 * sch.eps
        E = np.asarray(rep.artifacts["energy"]["total"])
        steps = np.diff(E)
        ok = (max(fF, fT) <= newton_tol and comp["max_residual"] <= tol_compat
              and float(np.min(sch.slack)) >= eps_half and bool(np.all(steps < 0)) and dt < 300)
        detail = (f"{rep.verdict}, Newton {max(fF, fT):.1e} <= {newton_tol:.1e}, "
                  f"compatibility {comp['max_residual']:.1e} <= {tol_compat:.1e}, "
                  f"slack {np.min(sch.slack):.2e} >= {eps_half:.2e}, max dE {steps.max():.1e}")
    record_acceptance(6, "end-to-end certification (64 slices)", ok, detail, dt, 300)
    assert ok


@pytest.mark.slow
def test_criterion_7_time_reversal(forward):
    sc, fwd, _ = forward
    t0 = time.perf_counter()
    rev = run_reversal(sc, forward=fwd, threads=4)
    dt = time.perf_counter() - t0
    fF, fT = max_newton_residual(fwd)
    rF, rT = max_newton_residual(rev)
    ok = rev.certified and rF <= fF + 1e-9 and rT <= fT + 1e-9 and dt < 300
    record_acceptance(7, "time reversal", ok,
                      f"{rev.verdict}, reversed residual {max(rF, rT):.1e} vs forward {max(fF, fT):.1e}",
                      dt, 300)
    assert ok


@pytest.mark.slow
def test_criterion_8_restarts(forward):
    sc, fwd, _ = forward
    t0 = time.perf_counter()
    entries = run_restarts(sc, every=8, forward=fwd, threads=4)
    dt = time.perf_counter() - t0
    certified = all(e["verdict"] == "CERTIFIED" for e in entries)
    ineq = all(e.get("inequality", {}).get("pass", False) for e in entries)
    ref = all(e.get("forward_reference", {}).get("pass", False) for e in entries)
    ok = certified and ineq and ref and len(entries) == 8 and dt < 600
    record_acceptance(8, "restart property (every 8th index)", ok,
                      f"{sum(e['verdict'] == 'CERTIFIED' for e in entries)}/{len(entries)} tails "
                      f"certified, E(t) <= E(s) in tails {ineq}, on forward grid {ref}", dt, 600)
    assert ok


def test_criterion_9_invariants(forward):
    sc, rep, _ = forward
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 9)
    mot = sc.motion()
    # flow-map isometry on the body boundary
    tr = BodyTrajectory(mot, 0, np.array([0.7, 0.5]), sc.times)
    pts = rng.uniform(-1, 1, (20, 2))
    iso = 0.0
    for t in sc.times[::7]:
        xb, Q = tr.pose(t)
        y = xb + (pts - [0.7, 0.5]) @ Q.T
        d0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        d1 = np.linalg.norm(y[:, None] - y[None], axis=-1)
        iso = max(iso, float(np.abs(d1 - d0).max()))
    # closed-surface normal integral
    nint = 0.0
    for shape in list(SHAPES.values()) + [Ball((0.0, 0.0, 0.0), 1.3)]:
        q = boundary_quadrature(shape)
        nint = max(nint, float(np.linalg.norm(q.weights @ q.normals)))
    # EOS round trip
    law = PressureLaw(1.0, 1.4)
    rho = np.exp(rng.uniform(-5, 5, 2000))
    eos = float(np.max(np.abs(law.density(law.pressure(rho)) - rho) / rho))
    # lambda_max against the eigensolver
    lam = 0.0
    for _ in range(200):
        m = rng.normal(size=3) * rng.uniform(0.1, 10)
        r = rng.uniform(0.1, 10)
        ref = np.linalg.eigvalsh(np.outer(m, m) / r)[-1]
        lam = max(lam, abs(lambda_max_rank_one(m, r) - ref) / max(1.0, ref))
    # energy: direct vs closed form from the certified run
    en = rep.artifacts["energy"]
    direct, closed = np.asarray(en["total"]), np.asarray(en["closed"])
    agree = float(np.max(np.abs(direct - closed) / np.abs(direct)))
    dt = time.perf_counter() - t0
    ok = iso <= 1e-9 and nint <= 1e-8 and eos <= 1e-12 and lam <= 1e-12 and agree <= 1e-8 and dt < 60
    record_acceptance(9, "invariant suites", ok,
                      f"isometry {iso:.1e}, int n {nint:.1e}, EOS {eos:.1e}, "
                      f"lambda_max {lam:.1e}, energy forms {agree:.1e}", dt, 60)
    assert ok
