"""End-to-end certification of a scenario.

Stages, in order: geometry, synthesis, offset, compatibility, fields,
newton, lambda, energy.  The first failing stage ends the run; its name and
message become the verdict ``FAILED(stage)``.
"""

import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .admissibility import (
    default_eps,
    energy_inequality_check,
    energy_parts,
    enforce_decreasing_energy,
    initial_data_energy,
    select_lambda,
    total_energy,
    verify_slack,
)
from .dynamics import (
    BodyTrajectory,
    MassProperties,
    mass_properties,
    newton_residual,
    rigid_energy,
)
from .errors import InputError, RigidFluidError, TorqueUnreachableError
from .fields import (
    FluidState,
    compatibility_residual,
    compatible_initial_momentum,
    fill_time_derivatives,
    solve_slice,
)
from .geometry import BoundaryQuadrature, body_clearance, body_gap
from .mesh import build_fluid_mesh
from .pressure import (
    SynthesizedPressure,
    make_cutoff,
    motion_pressure_2d,
    ball_translation_pressure,
)

STAGES = ("geometry", "synthesis", "offset", "compatibility", "fields", "newton", "lambda", "energy")
REVERSAL_SLACK = 1e-9


@dataclass
class StageResult:
    name: str
    ok: bool
    message: str = ""
    data: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "ok": self.ok, "message": self.message, "data": self.data}


@dataclass
class RunReport:
    """Outcome of a pipeline run.

    ``stages`` holds the serializable per-stage results; ``artifacts`` keeps
    the numerical objects (state, schedule, energies) for output writers.
    """

    scenario: object
    stages: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def failed(self):
        for s in self.stages:
            if not s.ok:
                return s
        return None

    @property
    def certified(self):
        return self.failed is None and bool(self.stages)

    @property
    def verdict(self):
        f = self.failed
        return "CERTIFIED" if f is None else f"FAILED({f.name})"

    def stage(self, name):
        for s in self.stages:
            if s.name == name:
                return s
        return None

    def to_dict(self):
        f = self.failed
        return {
            "verdict": self.verdict,
            "failed_stage": None if f is None else f.name,
            "failure_message": None if f is None else f.message,
            "stages": [s.to_dict() for s in self.stages],
        }


class StageFailure(Exception):
    def __init__(self, message, data=None):
        super().__init__(message)
        self.data = data or {}


# --------------------------------------------------------------------------
# helpers


def moved_shape(shape, x_ref, xb, Q):
    """Rigid copy of ``shape`` (reference barycenter ``x_ref``) at pose (xb, Q)."""
    if shape.dim == 2:
        ang = float(np.arctan2(Q[1, 0], Q[0, 0]))
        return shape.moved(translation=xb - x_ref, angle=ang, pivot=x_ref)
    return shape.moved(translation=xb - x_ref, rotation=Q, pivot=x_ref)


def start_poses(scenario, props):
    """Poses at the first slice, reached by integrating the base motion from 0.

    The base clock is stepped with the scenario's time step so that forward,
    reversed and restarted runs see the same positions on shared nodes.
    """
    t = scenario.data["time"]
    t0 = t["start"] + t["T"] if t["reversed"] else t["start"]
    base = scenario.base_motion()
    out = []
    for i, pr in enumerate(props):
        if t0 == 0.0:
            out.append((pr.barycenter.copy(), np.eye(pr.dim)))
            continue
        n = max(1, int(round(t0 / scenario.dt)))
        grid = np.linspace(0.0, t0, n + 1)
        tr = BodyTrajectory(base, i, pr.barycenter, grid)
        out.append((tr.flow.barycenter[-1].copy(), tr.flow.Q(len(grid) - 1)))
    return out


def lab_quadrature(body, t):
    """Body boundary quadrature mapped to the lab frame at time t."""
    q = body.boundary_quadrature()
    xb, Q = body.pose(t)
    return BoundaryQuadrature(xb + (q.nodes - body.x_B0) @ Q.T, q.weights,
                              q.normals @ Q.T, q.params)


def props_at(props, body, t):
    xb, Q = body.pose(t)
    return MassProperties(props.mass, xb, props.rotated(Q).inertia)


# --------------------------------------------------------------------------
# pipeline


class Pipeline:
    """Stateful runner; each ``stage_*`` method raises StageFailure or returns data."""

    def __init__(self, scenario, threads=1, log=None):
        self.sc = scenario
        self.threads = max(1, int(threads))
        self.log = log or (lambda msg: None)
        self.times = scenario.times
        self.tol = dict(scenario.tolerances)

    def map(self, fn, items):
        items = list(items)
        if self.threads == 1 or len(items) < 2:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as ex:
            return list(ex.map(fn, items))

    # geometry -------------------------------------------------------------
    def stage_geometry(self):
        sc = self.sc
        self.cavity = sc.cavity()
        self.shapes = sc.shapes()
        self.dim = sc.dim
        self.props = [mass_properties(s, d) for s, d in zip(self.shapes, sc.densities())]
        self.motion = sc.motion()
        self.margins = sc.margins()
        poses = start_poses(sc, self.props)
        self.trajectories = [
            BodyTrajectory(self.motion, i, xb, self.times, Q0=Q) for i, (xb, Q) in enumerate(poses)
        ]
        # clearance at every slice: cutoff neighbourhoods inside and disjoint
        worst_wall, worst_gap = np.inf, np.inf
        for k, t in enumerate(self.times):
            placed = []
            for i, (s, pr, tr) in enumerate(zip(self.shapes, self.props, self.trajectories)):
                xb, Q = tr.pose(t)
                b = moved_shape(s, pr.barycenter, xb, Q)
                c = body_clearance(self.cavity, b) - self.margins[i]
                worst_wall = min(worst_wall, c)
                if c <= 0:
                    raise StageFailure(
                        f"body {i} comes within its cutoff margin of the wall at t={t:.6g}",
                        {"slice": k, "body": i},
                    )
                placed.append(b)
            for i in range(len(placed)):
                for j in range(i + 1, len(placed)):
                    g = body_gap(placed[i], placed[j]) - self.margins[i] - self.margins[j]
                    worst_gap = min(worst_gap, g)
                    if g <= 0:
                        raise StageFailure(
                            f"cutoff neighbourhoods of bodies {i} and {j} meet at t={t:.6g}",
                            {"slice": k, "bodies": [i, j]},
                        )
        data = {
            "dimension": self.dim,
            "bodies": [
                {
                    "mass": pr.mass,
                    "barycenter": pr.barycenter.tolist(),
                    "inertia": pr.inertia if self.dim == 2 else np.asarray(pr.inertia).tolist(),
                    "margin": m,
                }
                for pr, m in zip(self.props, self.margins)
            ],
            "min_wall_clearance_beyond_margin": float(worst_wall),
        }
        if len(self.shapes) > 1:
            data["min_gap_beyond_margins"] = float(worst_gap)
        return data

    # synthesis ------------------------------------------------------------
    def _scales(self, i):
        pr = self.props[i]
        dense = np.linspace(0.0, self.sc.T, 4 * len(self.times) + 1)
        acc = np.linalg.norm(np.atleast_2d(self.motion.eta(i, dense, 1)), axis=-1)
        alpha = np.abs(np.asarray(self.motion.omega(i, dense, 1)))
        if alpha.ndim > 1:
            alpha = np.linalg.norm(alpha, axis=-1)
        J = pr.inertia if self.dim == 2 else float(np.max(np.linalg.eigvalsh(pr.inertia)))
        ell = 0.5 * self.shapes[i].diameter
        F = pr.mass * float(acc.max())
        tau = J * float(alpha.max())
        f_scale = max(F, tau / ell)
        return f_scale, f_scale * ell

    def stage_synthesis(self):
        sc = self.sc
        self.law = sc.law()
        fl = sc.data["fluid"]
        fluid_volume = self.cavity.area - sum(
            (s.area if self.dim == 2 else s.volume) for s in self.shapes
        )
        self.fluid_mass = float(fl["mass"]) if "mass" in fl else float(fl["mean_density"]) * fluid_volume
        radius = sc.data["synthesis"].get("atom_radius")
        split = float(sc.data["synthesis"].get("split", 0.1))
        bodies = []
        for i, (shape, pr, tr) in enumerate(zip(self.shapes, self.props, self.trajectories)):
            # placement against the wall and other bodies was checked per slice
            cutoff = make_cutoff(shape, self.margins[i])
            m = pr.mass
            J = pr.inertia

            def eta1(t, i=i):
                return np.asarray(self.motion.eta(i, t, 1), dtype=float)

            if self.dim == 3:
                alpha = np.abs(np.asarray(self.motion.omega(i, self.times, 1)))
                if np.max(alpha) > 0:
                    raise TorqueUnreachableError(
                        "torque unreachable: boundary pressures exert no torque on a homogeneous ball"
                    )
                bodies.append(ball_translation_pressure(shape, m, eta1, cutoff, pr.barycenter, tr))
                continue

            def torque(t, i=i, J=J):
                return J * np.atleast_1d(np.asarray(self.motion.omega(i, t, 1), dtype=float))

            if shape.is_circle:
                k = m / shape.area

                def ball_coeff(t, eta1=eta1, k=k):
                    return k * eta1(t)

                bodies.append(motion_pressure_2d(
                    shape, pr.barycenter, None, torque, cutoff, self.times, trajectory=tr,
                    ball_coeff=ball_coeff, radius=radius, split=split,
                ))
            else:
                def force_body(t, eta1=eta1, tr=tr, m=m):
                    t = np.atleast_1d(t)
                    F = m * np.atleast_2d(eta1(t))
                    return np.array([tr.pose(tt)[1].T @ f for tt, f in zip(t, F)])

                bodies.append(motion_pressure_2d(
                    shape, pr.barycenter, force_body, torque, cutoff, self.times, trajectory=tr,
                    radius=radius, split=split,
                ))
        self.bodies = bodies
        self.scales = [self._scales(i) for i in range(len(bodies))]

        # wrench of the synthesized (offset-free) pressure at every slice
        rel = float(self.tol["newton_rel"])
        errs = []
        for i, b in enumerate(bodies):
            fe, te = [], []
            for t in self.times:
                F, tau = b.wrench(t)
                F_req = self.props[i].mass * np.asarray(self.motion.eta(i, t, 1))
                if self.dim == 2:
                    tau_req = self.props[i].inertia * float(self.motion.omega(i, t, 1))
                else:
                    tau_req = np.zeros(3)
                fe.append(float(np.linalg.norm(F - F_req)))
                te.append(float(np.linalg.norm(np.atleast_1d(tau - tau_req))))
            errs.append({"max_force_error": max(fe), "max_torque_error": max(te),
                         "force_scale": self.scales[i][0], "torque_scale": self.scales[i][1]})
        data = {"fluid_mass": self.fluid_mass, "bodies": [b.to_dict() for b in bodies],
                "wrench": errs}
        for i, e in enumerate(errs):
            fs, ts = self._floor_scales(i)
            if e["max_force_error"] > rel * fs or e["max_torque_error"] > rel * ts:
                raise StageFailure(f"synthesized wrench of body {i} misses the required wrench", data)
        return data

    def _floor_scales(self, i):
        """Newton scales, floored at a rounding level when the body is unforced."""
        f, t = self.scales[i]
        ell = 0.5 * self.shapes[i].diameter
        pmax = getattr(self, "p_max", 1.0)
        floor = 1e-8 * pmax * (self.shapes[i].perimeter if self.dim == 2 else self.shapes[i].surface_area)
        f = max(f, floor)
        return f, max(t, floor * ell)

    # offset ---------------------------------------------------------------
    def stage_offset(self):
        self.pressure = SynthesizedPressure(self.bodies, self.law, self.fluid_mass, self.cavity)
        p0 = self.map(self.pressure.offset, self.times)
        pmin = []
        for t, q in zip(self.times, p0):
            lows = [q]
            for b in self.bodies:
                lows.append(float(b.boundary_values(t).min()) + q)
                lows.append(float(b.band_values(t).min()) + q)
            pmin.append(min(lows))
        self.p0 = np.array(p0)
        self.p_max = max(
            float(np.max(b.boundary_values(t))) + q for t, q in zip(self.times, p0) for b in self.bodies
        )
        self.p_max = max(self.p_max, float(self.p0.max()))
        data = {"p0_min": float(self.p0.min()), "p0_max": float(self.p0.max()),
                "pressure_min": float(min(pmin)), "pressure_max": self.p_max}
        if not min(pmin) > 0:
            raise StageFailure("pressure is not positive after the mass offset", data)
        return data

    # compatibility --------------------------------------------------------
    def stage_compatibility(self):
        tol = float(self.tol["compat_rel"]) * self.fluid_mass / self.sc.T
        self.tol_compat = tol
        res = self.map(lambda t: compatibility_residual(self.pressure, self.motion, t), self.times)
        res = np.abs(np.array(res))
        data = {"tolerance": tol, "max_residual": float(res.max()), "residuals": res.tolist()}
        if res.max() > tol:
            raise StageFailure(f"compatibility residual {res.max():.3e} exceeds {tol:.3e}", data)
        return data

    # fields ---------------------------------------------------------------
    def stage_fields(self):
        if self.dim != 2:
            raise StageFailure("fluid meshes and potentials are available in two dimensions only")
        h = self.sc.h
        split = int(self.sc.data["mesh"]["refine_split"])
        ntol = float(self.tol["neumann"])

        def one(t):
            placed = [b.body_at(t) for b in self.bodies]
            mesh = build_fluid_mesh(self.cavity, placed, h, t, refine_band=max(self.margins),
                                    refine_split=split)
            return solve_slice(self.pressure, self.motion, t, mesh)

        slices = self.map(one, self.times)
        self.state = FluidState(np.asarray(self.times), slices, self.pressure, self.law, 2)
        fill_time_derivatives(self.state)
        deficits = np.array([abs(s.neumann.deficit) for s in slices])
        resid = np.array([s.neumann.residual for s in slices])
        flags = np.array([int(np.count_nonzero(s.phi_t_flags >= 2)) for s in slices])
        _, init = compatible_initial_momentum(slices[0], self.pressure, self.motion,
                                              float(self.tol["compat_rel"]), self.tol_compat)
        data = {
            "mesh_h": h,
            "triangles": [int(len(s.mesh.tris)) for s in slices],
            "max_deficit": float(deficits.max()),
            "deficit_tolerance": self.tol_compat,
            "max_relative_residual": float(resid.max()),
            "residual_tolerance": ntol,
            "swept_boundary_nodes": flags.tolist(),
            "initial_momentum": _jsonable(init),
            "density_min": float(min(s.rho.min() for s in slices)),
            "density_max": float(max(s.rho.max() for s in slices)),
        }
        if deficits.max() > self.tol_compat:
            raise StageFailure("discrete compatibility deficit exceeds the tolerance", data)
        if resid.max() > ntol:
            raise StageFailure("Neumann residual exceeds the tolerance", data)
        if not init["ok"]:
            raise StageFailure("initial momentum misses the prescribed boundary flux", data)
        return data

    # newton ---------------------------------------------------------------
    def newton_table(self):
        rows = []
        for k, t in enumerate(self.times):
            for i, b in enumerate(self.bodies):
                q = lab_quadrature(b, t)
                p = b.boundary_values(t) + self.pressure.offset(t)
                rF, rT = newton_residual(self.motion, i, q, p, t, props_at(self.props[i], b, t))
                rows.append((float(t), i, float(np.linalg.norm(rF)),
                             float(np.linalg.norm(np.atleast_1d(rT)))))
        return rows

    def stage_newton(self):
        rows = self.newton_table()
        self.newton_rows = rows
        rel = float(self.tol["newton_rel"])
        data = {"bodies": []}
        bad = None
        for i in range(len(self.bodies)):
            fs, ts = self._floor_scales(i)
            f = max(r[2] for r in rows if r[1] == i)
            tq = max(r[3] for r in rows if r[1] == i)
            data["bodies"].append({"max_force_residual": f, "max_torque_residual": tq,
                                   "force_tolerance": rel * fs, "torque_tolerance": rel * ts})
            if f > rel * fs or tq > rel * ts:
                bad = i
        data.update(self._spot_check())
        if bad is not None:
            raise StageFailure(f"Newton residual of body {bad} exceeds the tolerance", data)
        if not data["spot_check"]["ok"]:
            raise StageFailure("seeded spot check of the wrench failed", data)
        return data

    def _spot_check(self):
        """Wrench from the field evaluator at seeded random times and bodies.

        The pressure is evaluated at lab-frame boundary points through the
        projection path used for the fluid fields, independently of the
        cached boundary tables.
        """
        rng = np.random.default_rng(self.sc.seed)
        n = min(8, len(self.times))
        ks = np.sort(rng.choice(len(self.times), n, replace=False))
        worst = 0.0
        for k in ks:
            t = float(self.times[k])
            for i, b in enumerate(self.bodies):
                q = lab_quadrature(b, t)
                p = self.pressure.value(t, q.nodes)
                rF, rT = newton_residual(self.motion, i, q, p, t, props_at(self.props[i], b, t))
                fs, ts = self._floor_scales(i)
                worst = max(worst, float(np.linalg.norm(rF)) / fs,
                            float(np.linalg.norm(np.atleast_1d(rT))) / ts)
        ok = worst <= float(self.tol["newton_rel"])
        return {"spot_check": {"slices": ks.tolist(), "max_relative_residual": worst, "ok": bool(ok)}}

    # lambda ---------------------------------------------------------------
    def stage_lambda(self):
        st = self.state
        eps = float(self.tol["eps_rel"]) / 1e-3 * default_eps(st, 2)
        sched = select_lambda(st, eps, map_=self.map)
        slack = verify_slack(st, sched, order=16, map_=self.map)
        self.schedule = sched
        data = {"eps": eps, "min_slack": float(slack.min()), "required_slack": eps / 2}
        if slack.min() < eps / 2:
            raise StageFailure(f"criterion slack {slack.min():.3e} below eps/2 = {eps / 2:.3e}", data)
        return data

    # energy ---------------------------------------------------------------
    def stage_energy(self):
        st = self.state
        rigid = []
        for t in self.times:
            rigid.append(sum(
                rigid_energy(self.motion, i, t, props_at(self.props[i], b, t))
                for i, b in enumerate(self.bodies)
            ))
        rigid = np.array(rigid)
        parts = self.map(lambda a: energy_parts(a[0], self.pressure, a[1], 2),
                         list(zip(st.slices, rigid)))
        E0, _, agree0 = total_energy(parts, self.schedule.values)
        delta_E = float(self.tol["delta_E_rel"]) * abs(E0[0]) / self.sc.T
        final = enforce_decreasing_energy(parts, self.schedule, delta_E)
        final.slack = self.schedule.slack + (final.values - self.schedule.values)
        direct, closed, agree = total_energy(parts, final.values)
        steps = np.diff(direct)
        decreasing = bool(np.all(steps < 0))
        fluid = direct - rigid
        ide = initial_data_energy(st.slices[0], self.pressure, rigid[0])
        c5 = [energy_inequality_check(direct, s) for s in range(len(direct))]
        p1 = energy_inequality_check(direct, 0, initial_energy=ide)
        self.final_schedule = final
        self.energy = {"total": direct, "closed": closed, "fluid": fluid, "rigid": rigid}
        data = {
            "delta_E": delta_E,
            "form_agreement": max(agree, agree0),
            "form_tolerance": float(self.tol["energy_forms"]),
            "strictly_decreasing": decreasing,
            "max_step": float(steps.max()) if steps.size else 0.0,
            "lambda_raised_slices": int(np.count_nonzero(final.values > self.schedule.values)),
            "energy_inequality_all_s": bool(all(c["pass"] for c in c5)),
            "initial_data_comparison": p1,
            "initial_data_energy": float(ide),
        }
        if max(agree, agree0) > float(self.tol["energy_forms"]):
            raise StageFailure("direct and closed-form energies disagree", data)
        if not decreasing:
            raise StageFailure("total energy is not strictly decreasing", data)
        if not data["energy_inequality_all_s"]:
            raise StageFailure("energy inequality violated", data)
        return data

    # driver ---------------------------------------------------------------
    def run(self, stages=STAGES):
        report = RunReport(self.sc)
        for name in stages:
            t0 = _time.perf_counter()
            self.log(f"stage {name} ...")
            try:
                data = getattr(self, f"stage_{name}")()
                report.stages.append(StageResult(name, True, "ok", _jsonable(data)))
            except StageFailure as exc:
                report.stages.append(StageResult(name, False, str(exc), _jsonable(exc.data)))
            except (RigidFluidError, np.linalg.LinAlgError) as exc:
                report.stages.append(StageResult(name, False, str(exc), {}))
            report.timings[name] = _time.perf_counter() - t0
            self.log(f"stage {name}: {'ok' if report.stages[-1].ok else 'FAILED'} "
                     f"({report.timings[name]:.2f} s)")
            if not report.stages[-1].ok:
                break
        for key in ("state", "schedule", "final_schedule", "energy", "newton_rows", "pressure",
                    "props", "bodies"):
            if hasattr(self, key):
                report.artifacts[key] = getattr(self, key)
        return report


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def run_pipeline(scenario, threads=1, stages=STAGES, log=None):
    """Run the certification pipeline and return a :class:`RunReport`."""
    return Pipeline(scenario, threads, log).run(stages)


def check_scenario(scenario, log=None):
    """Geometry and mass properties only."""
    return run_pipeline(scenario, 1, ("geometry",), log)


def max_newton_residual(report):
    """Largest force and torque residuals over all bodies and slices."""
    rows = report.artifacts.get("newton_rows", [])
    return (max((r[2] for r in rows), default=np.nan), max((r[3] for r in rows), default=np.nan))


def run_reversal(scenario, forward=None, threads=1, log=None):
    """Certify the time-reversed scenario of a certified forward run.

    The reversed run gets an extra ``reversal`` stage comparing its Newton
    residuals with the forward ones.
    """
    if forward is None:
        forward = run_pipeline(scenario, threads, log=log)
    if not forward.certified:
        raise InputError(f"forward run is not certified: {forward.verdict}")
    rev = run_pipeline(scenario.reversed(), threads, log=log)
    if rev.certified:
        fF, fT = max_newton_residual(forward)
        rF, rT = max_newton_residual(rev)
        ok = rF <= fF + REVERSAL_SLACK and rT <= fT + REVERSAL_SLACK
        data = {"forward_force_residual": fF, "forward_torque_residual": fT,
                "reversed_force_residual": rF, "reversed_torque_residual": rT,
                "slack": REVERSAL_SLACK}
        rev.stages.append(StageResult("reversal", bool(ok),
                                      "ok" if ok else "reversed residual exceeds forward residual",
                                      _jsonable(data)))
    rev.artifacts["forward"] = forward
    return rev


def run_restarts(scenario, every=8, forward=None, threads=1, log=None):
    """Re-certify the tail scenarios starting at every ``every``-th grid index.

    Returns a list of dicts with the tail report, its own energy inequality
    verdict ``E(t) <= E(s)`` and, for reference, the forward energies.
    """
    if forward is None:
        forward = run_pipeline(scenario, threads, log=log)
    out = []
    for s in range(0, scenario.slices - 1, every):
        tail = forward if s == 0 else run_pipeline(scenario.tail(s), threads, log=log)
        entry = {"s": s, "t": float(scenario.times[s]), "verdict": tail.verdict}
        if tail.certified:
            E = tail.artifacts["energy"]["total"]
            entry["inequality"] = energy_inequality_check(E, 0)
            if forward.certified:
                fE = forward.artifacts["energy"]["total"]
                entry["forward_reference"] = energy_inequality_check(fE, s)
        entry["report"] = tail
        out.append(entry)
    return out


__all__ = [
    "STAGES",
    "StageResult",
    "RunReport",
    "Pipeline",
    "run_pipeline",
    "check_scenario",
    "run_reversal",
    "run_restarts",
    "max_newton_residual",
    "start_poses",
    "moved_shape",
]
