"""Mass properties, prescribed rigid motions, flow maps and Newton residuals.

Sign conventions used throughout the package:

* body velocity ``u = eta + omega x (x - x_B)``; in 2D ``omega`` is a scalar
  and ``omega x r = omega * perp(r)`` (counterclockwise positive);
* a boundary pressure ``p`` exerts the force ``int p n dS`` and the torque
  ``int p (x - x_B) x n dS`` with ``n`` the outward normal of the body;
* Newton: ``m eta' = F`` and ``J omega' = (J omega) x omega + tau``
  (``J omega' = tau`` in 2D).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import GeometryError, InputError
from .geometry import boundary_integral, cross2, gauss_legendre, perp, rotation2

# --------------------------------------------------------------------------
# solid density


class SolidDensity:
    """Mass density of a rigid body in its reference configuration.

    ``value`` is ``rho(x)`` for points ``x`` of shape (n, d).  Use
    :meth:`uniform` or :meth:`affine` for the closed forms that scenarios can
    describe.
    """

    def __init__(self, value, description=None):
        self._value = value
        self.description = description or {"kind": "callable"}

    @classmethod
    def uniform(cls, rho=1.0):
        if rho <= 0:
            raise InputError("uniform density must be positive")
        return cls(lambda x: np.full(len(x), float(rho)), {"kind": "uniform", "rho": float(rho)})

    @classmethod
    def affine(cls, c0, grad):
        grad = np.asarray(grad, dtype=float)
        return cls(
            lambda x: c0 + np.asarray(x) @ grad,
            {"kind": "affine", "c0": float(c0), "grad": grad.tolist()},
        )

    @classmethod
    def exponential(cls, c0, grad):
        grad = np.asarray(grad, dtype=float)
        return cls(
            lambda x: c0 * np.exp(np.asarray(x) @ grad),
            {"kind": "exponential", "c0": float(c0), "grad": grad.tolist()},
        )

    def __call__(self, x):
        return np.asarray(self._value(np.atleast_2d(x)), dtype=float)

    def moved(self, x_ref, Q, x_now):
        """Density transported by the rigid map x -> x_now + Q (x - x_ref)."""
        Q = np.asarray(Q)

        def rho(x):
            return self._value(x_ref + (np.atleast_2d(x) - x_now) @ Q)

        return SolidDensity(rho, self.description)


@dataclass
class MassProperties:
    mass: float
    barycenter: np.ndarray
    inertia: object  # float in 2D, (3, 3) array in 3D

    @property
    def dim(self):
        return self.barycenter.size

    def rotated(self, Q):
        if self.dim == 2:
            return self
        return MassProperties(self.mass, self.barycenter, Q @ self.inertia @ Q.T)


def volume_quadrature(shape, n_radial=24, n_angular=None):
    """Nodes and weights covering the body (polar/graph decomposition).

    2D convex curves are swept from their geometric center; balls use
    spherical coordinates.
    """
    if shape.dim == 3:
        nr = n_radial
        xr, wr = gauss_legendre(nr)
        ct, wt = np.polynomial.legendre.leggauss(n_angular or 24)
        na = 2 * (n_angular or 24)
        az = 2 * np.pi * np.arange(na) / na
        R = shape.radius * xr
        r, c, a = np.meshgrid(R, ct, az, indexing="ij")
        st = np.sqrt(1 - c * c)
        pts = np.stack([r * st * np.cos(a), r * st * np.sin(a), r * c], axis=-1).reshape(-1, 3)
        w = (
            (shape.radius * wr * R**2)[:, None, None]
            * wt[None, :, None]
            * np.full(na, 2 * np.pi / na)[None, None, :]
        )
        return shape.center + pts, w.ravel()
    na = n_angular or max(256, 32 * shape.coeffs.shape[1])
    panels = na // 16
    xs, ws = gauss_legendre(16)
    s = ((np.arange(panels)[:, None] + xs[None, :]) / panels).ravel()
    wsa = np.tile(ws / panels, panels)
    v = shape.evaluate(s)
    c = shape.centroid
    g = np.stack([v[0], v[1]], axis=-1) - c
    gp = np.stack([v[2], v[3]], axis=-1)
    jac_s = np.abs(cross2(g, gp))
    xr, wr = gauss_legendre(n_radial)
    pts = c + xr[:, None, None] * g[None, :, :]
    w = (wr * xr)[:, None] * (wsa * jac_s)[None, :]
    return pts.reshape(-1, 2), w.ravel()


def mass_properties(shape, density, dim=None):
    """Total mass, barycenter and inertia of a body."""
    dim = dim or shape.dim
    pts, w = volume_quadrature(shape)
    rho = density(pts)
    if np.any(rho < -1e-14):
        raise InputError("solid density must be nonnegative")
    m = float(w @ rho)
    if not m > 0:
        raise InputError("solid density has zero total mass")
    xb = (w * rho) @ pts / m
    r = pts - xb
    if dim == 2:
        J = float((w * rho) @ np.sum(r * r, axis=1))
    else:
        rr = np.sum(r * r, axis=1)
        J = np.einsum("q,qi,qj->ij", w * rho, r, r)
        J = np.eye(3) * float((w * rho) @ rr) - J
    return MassProperties(m, xb, J)


def fit_density_for_barycenter(shape, target, direction=(1.0, 0.0), c0=1.0):
    """Density ``c0 * exp(k * (direction . x))`` whose barycenter is ``target``.

    The barycenter moves monotonically along ``direction`` as ``k`` varies,
    so ``k`` is found by a bracketed root search.  Only the component of
    ``target`` along ``direction`` is matched; bodies symmetric about that
    axis hit the full target.  An affine profile cannot reach barycenters
    close to the rim while staying nonnegative, hence the exponential.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    pts, w = volume_quadrature(shape)
    t = pts @ d
    tau = float(np.asarray(target, dtype=float) @ d)
    lo, hi = t.min(), t.max()
    if not lo < tau < hi:
        raise InputError("requested barycenter lies outside the body")
    scale = hi - lo

    def shift(k):
        e = np.exp(k * (t - tau) / scale - np.max(k * (t - tau) / scale))
        return float(w @ (e * (t - tau)))

    a, b = -1.0, 1.0
    while shift(a) > 0:
        a *= 2
        if a < -1e4:
            raise InputError("no density of this family realizes the requested barycenter")
    while shift(b) < 0:
        b *= 2
        if b > 1e4:
            raise InputError("no density of this family realizes the requested barycenter")
    k = brentq(shift, a, b, xtol=1e-15, rtol=1e-15) / scale
    return SolidDensity.exponential(c0, k * d)


# --------------------------------------------------------------------------
# motion primitives


class Primitive:
    """Analytic function of time with derivatives of any order."""

    name = "primitive"
    analytic = True

    def __call__(self, t, deriv=0):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


class Constant(Primitive):
    name = "constant"

    def __init__(self, value):
        self.value = float(value)

    def __call__(self, t, deriv=0):
        t = np.asarray(t, dtype=float)
        return np.full(t.shape, self.value if deriv == 0 else 0.0)

    def to_dict(self):
        return {"constant": self.value}


class Polynomial(Primitive):
    """sum_k c_k t^k."""

    name = "polynomial"

    def __init__(self, coeffs):
        self.coeffs = [float(c) for c in coeffs]
        self._poly = np.polynomial.Polynomial(self.coeffs)

    def __call__(self, t, deriv=0):
        p = self._poly.deriv(deriv) if deriv else self._poly
        return p(np.asarray(t, dtype=float))

    def to_dict(self):
        return {"polynomial": list(self.coeffs)}


class Sinusoid(Primitive):
    """amplitude * sin(frequency * t + phase), frequency in rad per unit time."""

    name = "sinusoid"

    def __init__(self, amplitude, frequency, phase=0.0):
        self.amplitude = float(amplitude)
        self.frequency = float(frequency)
        self.phase = float(phase)

    def __call__(self, t, deriv=0):
        t = np.asarray(t, dtype=float)
        w = self.frequency
        return self.amplitude * w**deriv * np.sin(w * t + self.phase + deriv * np.pi / 2)

    def to_dict(self):
        return {
            "sinusoid": {
                "amplitude": self.amplitude,
                "frequency": self.frequency,
                "phase": self.phase,
            }
        }


class Tabulated(Primitive):
    """Cubic spline through sampled values.

    Derivatives are those of the spline, so the third derivative is only
    piecewise constant; tables are therefore flagged as non-analytic.
    """

    name = "table"
    analytic = False

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.size < 3 or np.any(np.diff(self.times) <= 0):
            raise InputError("tabulated motion needs >= 3 strictly increasing times")
        self._spline = CubicSpline(self.times, self.values)

    def __call__(self, t, deriv=0):
        t = np.asarray(t, dtype=float)
        if deriv > 3:
            return np.zeros(t.shape)
        return self._spline(t, deriv)

    def to_dict(self):
        return {"table": {"times": self.times.tolist(), "values": self.values.tolist()}}


PRIMITIVES = {"constant", "polynomial", "sinusoid", "table"}


def primitive_from_dict(d):
    if not isinstance(d, dict) or len(d) != 1:
        raise InputError(f"motion primitive must be a one-key table, got {d!r}")
    (key, val), = d.items()
    if key == "constant":
        return Constant(val)
    if key == "polynomial":
        return Polynomial(val)
    if key == "sinusoid":
        return Sinusoid(val.get("amplitude", 1.0), val.get("frequency", 1.0), val.get("phase", 0.0))
    if key == "table":
        return Tabulated(val["times"], val["values"])
    raise InputError(f"unknown motion primitive {key!r}")


class Signal:
    """Linear combination of primitives (one velocity component)."""

    def __init__(self, terms=()):
        self.terms = list(terms)

    def __call__(self, t, deriv=0):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape)
        for term in self.terms:
            out = out + term(t, deriv)
        return out

    @property
    def analytic(self):
        return all(term.analytic for term in self.terms)

    def to_list(self):
        return [term.to_dict() for term in self.terms]

    @classmethod
    def from_spec(cls, spec):
        if isinstance(spec, (int, float)):
            return cls([Constant(spec)])
        if isinstance(spec, dict):
            spec = [spec]
        return cls([primitive_from_dict(d) for d in spec])


@dataclass
class BodyMotion:
    """Velocity ``eta`` (d components) and angular velocity ``omega``."""

    eta: list
    omega: list

    @property
    def dim(self):
        return len(self.eta)

    @property
    def analytic(self):
        return all(s.analytic for s in self.eta + self.omega)

    def to_dict(self):
        return {"eta": [s.to_list() for s in self.eta], "omega": [s.to_list() for s in self.omega]}


@dataclass
class PrescribedMotion:
    """Motions of all bodies, seen through the affine time map tau = a + b t.

    ``b`` is +1 (forward) or -1 (time reversed).  Velocities transform with
    the factor ``b`` so that positions follow X(a + b t).
    """

    bodies: list
    T: float
    a: float = 0.0
    b: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    def _tau(self, t):
        return self.a + self.b * np.asarray(t, dtype=float)

    def eta(self, i, t, deriv=0):
        tau = self._tau(t)
        f = self.b ** (deriv + 1)
        return np.stack([f * s(tau, deriv) for s in self.bodies[i].eta], axis=-1)

    def omega(self, i, t, deriv=0):
        tau = self._tau(t)
        f = self.b ** (deriv + 1)
        w = np.stack([f * s(tau, deriv) for s in self.bodies[i].omega], axis=-1)
        return w[..., 0] if w.shape[-1] == 1 else w

    @property
    def dim(self):
        return self.bodies[0].dim

    @property
    def analytic(self):
        return all(b.analytic for b in self.bodies)

    def window(self, start, duration, reverse=False):
        """Motion restricted to [start, start + duration] of this motion's clock."""
        if not reverse:
            return PrescribedMotion(self.bodies, duration, self._tau(start).item(), self.b)
        end = self._tau(start + duration).item()
        return PrescribedMotion(self.bodies, duration, end, -self.b)


# --------------------------------------------------------------------------
# rigid velocity and flow map


def rigid_velocity(motion, i, t, x, x_B):
    """Velocity ``eta + omega x (x - x_B)`` of body ``i`` at points ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = x - np.asarray(x_B, dtype=float)
    eta = motion.eta(i, t)
    w = motion.omega(i, t)
    if x.shape[1] == 2:
        return eta + np.asarray(w) * perp(r)
    return eta + np.cross(w, r)


def _skew(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def _polar(Q):
    u, _, vt = np.linalg.svd(Q)
    R = u @ vt
    if np.linalg.det(R) < 0:
        u[:, -1] *= -1
        R = u @ vt
    return R


@dataclass
class FlowMapState:
    """Rigid map ``X(t, x) = x_B(t) + Q(t) (x - x_B(0))`` at grid times."""

    times: np.ndarray
    barycenter: np.ndarray  # (nt, d)
    rotation: np.ndarray  # (nt,) angles in 2D, (nt, 3, 3) in 3D

    @property
    def dim(self):
        return self.barycenter.shape[1]

    def Q(self, k):
        return rotation2(self.rotation[k]) if self.dim == 2 else self.rotation[k]

    def apply(self, k, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.barycenter[k] + (x - self.barycenter[0]) @ self.Q(k).T

    def pose(self, k):
        """(translation, rotation) mapping the reference body to time k."""
        return self.barycenter[k] - self.barycenter[0], self.rotation[k]


def advance_flow_map(motion, i, x_B0, times, substeps=8, Q0=None):
    """Integrate the rigid flow map of body ``i`` on the grid ``times``.

    Classical RK4 with ``substeps`` steps per grid interval; 3D rotations
    are re-orthonormalized (polar projection) after every step.
    """
    times = np.asarray(times, dtype=float)
    d = len(x_B0)
    xb = np.empty((len(times), d))
    xb[0] = x_B0
    if d == 2:
        rot = np.empty(len(times))
        if Q0 is None:
            rot[0] = 0.0
        elif np.ndim(Q0) == 2:
            rot[0] = np.arctan2(Q0[1][0], Q0[0][0])
        else:
            rot[0] = float(Q0)
    else:
        rot = np.empty((len(times), 3, 3))
        rot[0] = np.eye(3) if Q0 is None else Q0

    def f(t, y):
        if d == 2:
            return motion.eta(i, t), float(motion.omega(i, t))
        return motion.eta(i, t), _skew(motion.omega(i, t)) @ y[1]

    for k in range(len(times) - 1):
        t0 = times[k]
        hstep = (times[k + 1] - t0) / substeps
        y = (xb[k].copy(), rot[k].copy() if d == 3 else rot[k])
        for j in range(substeps):
            t = t0 + j * hstep
            k1 = f(t, y)
            y2 = (y[0] + 0.5 * hstep * k1[0], y[1] + 0.5 * hstep * k1[1])
            k2 = f(t + 0.5 * hstep, y2)
            y3 = (y[0] + 0.5 * hstep * k2[0], y[1] + 0.5 * hstep * k2[1])
            k3 = f(t + 0.5 * hstep, y3)
            y4 = (y[0] + hstep * k3[0], y[1] + hstep * k3[1])
            k4 = f(t + hstep, y4)
            y = (
                y[0] + hstep / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
                y[1] + hstep / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
            )
            if d == 3:
                y = (y[0], _polar(y[1]))
        xb[k + 1] = y[0]
        rot[k + 1] = y[1]
    return FlowMapState(times, xb, rot)


class BodyTrajectory:
    """Pose of one body at arbitrary times.

    Grid poses come from :func:`advance_flow_map`; off-grid times are reached
    by a short RK4 integration from the preceding grid node (times outside
    the grid extrapolate from the end intervals).
    """

    def __init__(self, motion, i, x_B0, times, Q0=None, substeps=8):
        self.motion = motion
        self.index = i
        self.substeps = substeps
        self.flow = advance_flow_map(motion, i, np.asarray(x_B0, dtype=float), times, substeps, Q0)
        self._cache = {}

    @property
    def times(self):
        return self.flow.times

    def pose(self, t):
        """(x_B(t), Q(t)) with Q a rotation matrix."""
        t = float(t)
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        times = self.flow.times
        k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        if t == times[k] or (t == times[k + 1]):
            j = k if t == times[k] else k + 1
            out = (self.flow.barycenter[j].copy(), self.flow.Q(j))
        else:
            dt = times[1] - times[0]
            sub = max(2, int(np.ceil(self.substeps * abs(t - times[k]) / dt)))
            f = advance_flow_map(
                self.motion, self.index, self.flow.barycenter[k], [times[k], t], sub,
                self.flow.rotation[k],
            )
            out = (f.barycenter[1], f.Q(1))
        self._cache[t] = out
        return out

    def angle(self, t):
        """Rotation angle (2D only)."""
        Q = self.pose(t)[1]
        return float(np.arctan2(Q[1, 0], Q[0, 0]))


def place_body(shape, flow, k):
    """The body occupying ``flow`` slice ``k`` (rigid copy of ``shape``)."""
    tr, rot = flow.pose(k)
    if shape.dim == 2:
        return shape.moved(translation=tr, angle=rot, pivot=flow.barycenter[0])
    return shape.moved(translation=tr, rotation=rot, pivot=flow.barycenter[0])


def check_trajectory(cavity, shapes, flows, clearance=0.0):
    """Raise GeometryError if any body leaves the cavity or meets another."""
    from .mesh import check_placement

    n = len(flows[0].times)
    for k in range(n):
        bodies = [place_body(s, f, k) for s, f in zip(shapes, flows)]
        try:
            check_placement(cavity, bodies, clearance)
        except GeometryError as exc:
            raise GeometryError(f"at t={flows[0].times[k]:.6g}: {exc}") from None


# --------------------------------------------------------------------------
# Newton balance


def pressure_wrench(quad, p_values, x_B):
    """Force ``int p n dS`` and torque ``int p (x - x_B) x n dS`` of a boundary pressure."""
    p_values = np.asarray(p_values, dtype=float)
    F = boundary_integral(quad, p_values[:, None] * quad.normals)
    r = quad.nodes - np.asarray(x_B, dtype=float)
    if quad.nodes.shape[1] == 2:
        tau = boundary_integral(quad, p_values * cross2(r, quad.normals))
    else:
        tau = boundary_integral(quad, p_values[:, None] * np.cross(r, quad.normals))
    return np.asarray(F), tau


def required_wrench(motion, i, t, props):
    """Force and torque the fluid must exert to realize the motion at ``t``."""
    F = props.mass * motion.eta(i, t, 1)
    if props.dim == 2:
        return F, props.inertia * float(motion.omega(i, t, 1))
    J = props.inertia
    w = motion.omega(i, t)
    return F, J @ motion.omega(i, t, 1) - np.cross(J @ w, w)


def newton_residual(motion, i, quad, p_values, t, props):
    """Residuals of Newton's force and torque balance for a boundary pressure.

    ``quad`` is the boundary quadrature of body ``i`` at time ``t``, ``props``
    its mass properties in the current orientation and ``p_values`` the
    pressure at the quadrature nodes.
    """
    F_req, tau_req = required_wrench(motion, i, t, props)
    F, tau = pressure_wrench(quad, p_values, props.barycenter)
    return F_req - F, tau_req - tau


def rigid_energy(motion, i, t, props):
    eta = motion.eta(i, t)
    w = motion.omega(i, t)
    ke = 0.5 * props.mass * float(np.dot(eta, eta))
    if props.dim == 2:
        return ke + 0.5 * props.inertia * float(w) ** 2
    return ke + 0.5 * float(w @ props.inertia @ w)


def exact_rotation_angle(motion, i, t0, t1, n=64):
    """Reference rotation angle int omega dt (2D) by Gauss-Legendre quadrature."""
    x, w = gauss_legendre(n)
    t = t0 + (t1 - t0) * x
    return float((t1 - t0) * np.sum(w * motion.omega(i, t)))


__all__ = [
    "SolidDensity",
    "MassProperties",
    "mass_properties",
    "volume_quadrature",
    "fit_density_for_barycenter",
    "Constant",
    "Polynomial",
    "Sinusoid",
    "Tabulated",
    "Signal",
    "BodyMotion",
    "PrescribedMotion",
    "rigid_velocity",
    "advance_flow_map",
    "FlowMapState",
    "BodyTrajectory",
    "place_body",
    "check_trajectory",
    "pressure_wrench",
    "required_wrench",
    "newton_residual",
    "rigid_energy",
]
