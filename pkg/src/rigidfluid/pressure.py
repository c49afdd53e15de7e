"""Synthesis of nonnegative boundary pressures with a prescribed wrench.

Building blocks:

* :func:`make_cutoff` - smooth cutoff ``sigma`` equal to 1 on a body and 0
  beyond a margin;
* :func:`ball_translation_pressure` - linear pressure moving a ball;
* :func:`force_atom_2d` - nonnegative pressure bump on a boundary patch
  whose force is normal to the boundary at the patch center;
* :func:`torque_pressure_2d` - zero-force combination of atoms with nonzero
  torque;
* :func:`motion_pressure_2d` - time-dependent atom mixture realizing a
  force and torque history;
* :func:`mass_offset` - the spatially constant offset fixing the fluid mass.

Pressures are represented in the body frame (the body at its pose at time 0)
and carried along by the body trajectory.  Off the boundary they are extended
constantly along normals and multiplied by the cutoff.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import GeometryError, InputError, NumericError, TorqueUnreachableError
from .geometry import (
    body_clearance,
    body_gap,
    boundary_quadrature,
    cross2,
    directions,
    gauss_legendre,
    perp,
    smoothstep,
    torque_indicator,
)

# --------------------------------------------------------------------------
# cutoff


@dataclass
class CutoffField:
    """``sigma(x) = smoothstep(1 - d_B(x) / margin)``."""

    shape: object
    margin: float

    def __call__(self, points):
        d = self.shape.signed_distance(points)
        return smoothstep(1.0 - np.maximum(d, 0.0) / self.margin)

    def of_distance(self, d):
        return smoothstep(1.0 - np.maximum(d, 0.0) / self.margin)

    @property
    def support_measure(self):
        """Measure of the neighbourhood U = {d_B < margin} (Steiner formula)."""
        m = self.margin
        if self.shape.dim == 3:
            return 4.0 / 3.0 * np.pi * (self.shape.radius + m) ** 3
        return self.shape.area + m * self.shape.perimeter + np.pi * m * m


def make_cutoff(shape, margin, cavity=None, others=()):
    """Cutoff around ``shape`` supported in the ``margin`` neighbourhood.

    With ``cavity``/``others`` given, the neighbourhood must stay inside the
    cavity and must not meet the neighbourhoods of the other bodies.
    """
    if not margin > 0:
        raise GeometryError("cutoff margin must be positive")
    if cavity is not None and body_clearance(cavity, shape) <= margin:
        raise GeometryError("cutoff margin exceeds the distance to the cavity wall")
    for o in others:
        if body_gap(shape, o) <= 2 * margin:
            raise GeometryError("cutoff neighbourhoods of two bodies overlap")
    return CutoffField(shape, float(margin))


# --------------------------------------------------------------------------
# force atoms


def _bump(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, (1.0 - u * u) ** 3, 0.0)


def _wrap(u):
    return np.mod(np.asarray(u, dtype=float) + 0.5, 1.0) - 0.5


class _ChartFailure(Exception):
    pass


class PressureAtom:
    """Nonnegative pressure on a boundary patch with force along ``n(x0)``.

    In the tangent chart at ``x0`` (``X`` along the tangent, the boundary a
    convex graph over it) the chart density is

        p_chart(X) = scale * bump(X / R) * f(X),  f(X) = sqrt(-H(-X) / H(X)),

    with ``H`` the tangential component of the normal, so ``p_chart * H`` is
    odd and the tangential force cancels.  The boundary pressure per unit
    arclength is ``p_chart * dX/dS``.  ``scale`` normalizes the normal force
    to ``magnitude``.
    """

    def __init__(self, shape, s0, magnitude=1.0, radius=None, x_B=None, exclusion=None):
        self.shape = shape
        self.s0 = float(np.mod(s0, 1.0))
        self.magnitude = float(magnitude)
        self.x_B = np.asarray(shape.centroid if x_B is None else x_B, dtype=float)
        v = shape.evaluate(np.array([self.s0]))[:, 0]
        self.x0 = v[:2].copy()
        t = v[2:4] / np.hypot(v[2], v[3])
        self.e_t = t
        self.e_n = perp(t)  # inward
        self.normal = -self.e_n
        R0 = 0.2 * shape.perimeter / (2 * np.pi) if radius is None else float(radius)
        self._table()
        last = None
        for _ in range(7):
            try:
                self._setup(R0, exclusion)
                break
            except _ChartFailure as exc:
                last = exc
                R0 *= 0.5
        else:
            raise NumericError(f"force atom chart construction failed ({last})")
        self.force, self.torque = self._wrench()

    # chart geometry ---------------------------------------------------------
    def _coords(self, u):
        v = self.shape.evaluate(self.s0 + np.asarray(u, dtype=float))
        dx, dy = v[0] - self.x0[0], v[1] - self.x0[1]
        X = dx * self.e_t[0] + dy * self.e_t[1]
        Xp = v[2] * self.e_t[0] + v[3] * self.e_t[1]
        Yp = v[2] * self.e_n[0] + v[3] * self.e_n[1]
        sp = np.hypot(v[2], v[3])
        return X, Xp, Yp, sp

    def _table(self):
        u = np.linspace(-0.5, 0.5, 4001)
        X, Xp, _, sp = self._coords(u)
        good = Xp > 0.5 * sp
        mid = len(u) // 2
        r = mid
        while r + 1 < len(u) and good[r + 1]:
            r += 1
        l = mid
        while l - 1 >= 0 and good[l - 1]:
            l -= 1
        self._u_tab = u[l : r + 1]
        self._X_tab = X[l : r + 1]
        self._X_reach = min(self._X_tab[-1], -self._X_tab[0])

    def _solve_u(self, Xt):
        """Chart parameter offsets ``u`` with X(u) = Xt."""
        Xt = np.asarray(Xt, dtype=float)
        u = np.interp(Xt, self._X_tab, self._u_tab)
        for _ in range(30):
            X, Xp, _, _ = self._coords(u)
            du = (X - Xt) / Xp
            u = u - du
            # quadratic convergence: the step after this one is below round-off
            if np.all(np.abs(du) < 1e-14):
                break
        X, _, _, _ = self._coords(u)
        if np.any(np.abs(X - Xt) > 1e-12 * max(self.R, 1e-300)):
            raise NumericError("chart inversion did not converge")
        return u

    def _setup(self, R, exclusion):
        if not R < 0.95 * self._X_reach:
            raise _ChartFailure("boundary is not a graph over the patch")
        self.R = float(R)
        lo, hi = self._solve_u(np.array([-R, R]))
        if not (lo < 0 < hi):
            raise _ChartFailure("degenerate patch")
        self.u_lo, self.u_hi = float(lo), float(hi)
        if exclusion is not None and self._meets(exclusion):
            if _arc_contains(exclusion, self.s0):
                raise GeometryError("atom center lies in the excluded arc")
            raise _ChartFailure("patch meets the excluded arc")
        # f near 0 by linear interpolation through f(0) = 1 (avoids 0/0)
        self._delta = 1e-4 * R
        fd = self._f_direct(np.array([self._delta, -self._delta]))
        self._fslope = (fd[0] - fd[1]) / (2 * self._delta)
        x, w = gauss_legendre(16)
        edges = np.linspace(-R, R, 9)
        X = (edges[:-1, None] + np.diff(edges)[:, None] * x).ravel()
        W = (np.diff(edges)[:, None] * w).ravel()
        u = self._solve_u(X)
        _, Xp, _, sp = self._coords(u)
        c = float(np.sum(W * _bump(X / R) * self.f(X) * Xp / sp))
        self.c = c
        self.scale = self.magnitude / c

    def _meets(self, arc):
        a, b = arc
        s = self.s0 + np.linspace(self.u_lo, self.u_hi, 257)
        return bool(np.any(_arc_contains(arc, s)))

    def H(self, X):
        """Tangential normal component at chart abscissa X."""
        u = self._solve_u(X)
        _, _, Yp, sp = self._coords(u)
        return Yp / sp

    def _f_direct(self, X):
        return np.sqrt(-self.H(-X) / self.H(X))

    def f(self, X):
        X = np.asarray(X, dtype=float)
        out = np.empty_like(X)
        near = np.abs(X) < self._delta
        out[near] = 1.0 + self._fslope * X[near]
        if np.any(~near):
            out[~near] = self._f_direct(X[~near])
        return out

    def chart_values(self, X):
        """The chart density p_chart(X) (zero outside (-R, R))."""
        X = np.asarray(X, dtype=float)
        out = np.zeros_like(X)
        m = np.abs(X) < self.R
        if np.any(m):
            out[m] = self.scale * _bump(X[m] / self.R) * self.f(X[m])
        return out

    @property
    def support(self):
        """Parameter interval (s_lo, s_hi) outside which the atom vanishes."""
        return self.s0 + self.u_lo, self.s0 + self.u_hi

    def boundary_values(self, s):
        """Boundary pressure at curve parameters ``s``."""
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        if self.scale == 0.0:
            return out
        u = _wrap(s - self.s0)
        m = (u > self.u_lo) & (u < self.u_hi)
        if np.any(m):
            X, Xp, _, sp = self._coords(u[m])
            out[m] = self.chart_values(X) * Xp / sp
        return out

    def _quadrature(self, panels=16, order=16):
        x, w = gauss_legendre(order)
        edges = np.linspace(self.u_lo, self.u_hi, panels + 1)
        u = (edges[:-1, None] + np.diff(edges)[:, None] * x).ravel()
        W = (np.diff(edges)[:, None] * w).ravel()
        return self.s0 + u, W

    def _wrench(self):
        s, W = self._quadrature()
        v = self.shape.evaluate(s)
        sp = np.hypot(v[2], v[3])
        n = np.stack([v[3], -v[2]], axis=-1) / sp[:, None]
        p = self.boundary_values(s)
        r = np.stack([v[0], v[1]], axis=-1) - self.x_B
        F = (W * p * sp) @ n
        tau = float(np.sum(W * p * sp * cross2(r, n)))
        return F, tau

    def scaled(self, k):
        a = object.__new__(PressureAtom)
        a.__dict__.update(self.__dict__)
        a.magnitude = self.magnitude * k
        a.scale = self.scale * k
        a.force = self.force * k
        a.torque = self.torque * k
        return a

    def to_dict(self):
        return {
            "s0": self.s0,
            "x0": self.x0.tolist(),
            "normal": self.normal.tolist(),
            "chart_radius": self.R,
            "support": list(self.support),
            "bump": "(1-(X/R)^2)^3",
            "magnitude": self.magnitude,
            "scale": self.scale,
            "force": self.force.tolist(),
            "torque": self.torque,
        }


def _arc_contains(arc, s):
    """Whether parameters ``s`` lie in the periodic arc (a, b)."""
    a, b = arc
    L = np.mod(b - a, 1.0)
    return np.mod(np.asarray(s) - a, 1.0) < L


def force_atom_2d(shape, x0, magnitude=1.0, radius=None, x_B=None, exclusion=None):
    """Pressure atom at boundary point ``x0`` with force ``magnitude * n(x0)``.

    ``x0`` may also be given as a curve parameter (a scalar).
    """
    if shape.dim != 2:
        raise GeometryError("force atoms are two-dimensional")
    if np.ndim(x0) == 0:
        s0 = float(x0)
    else:
        s0 = float(shape.project(np.asarray(x0, dtype=float)[None, :])[0][0])
    return PressureAtom(shape, s0, magnitude, radius, x_B, exclusion)


def atom_at_direction(shape, m, magnitude=1.0, **kw):
    """Atom centered at N(m), pushing along the unit vector ``m``."""
    s0 = float(shape.gauss_map_inverse(np.asarray(m, dtype=float)[None, :])[0])
    return PressureAtom(shape, s0, magnitude, **kw)


# --------------------------------------------------------------------------
# zero-force torque combinations


@dataclass
class AtomCombination:
    """Nonnegative combination of atoms; a boundary pressure with a wrench."""

    atoms: list
    coeffs: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def force(self):
        return sum(c * a.force for c, a in zip(self.coeffs, self.atoms))

    @property
    def torque(self):
        return float(sum(c * a.torque for c, a in zip(self.coeffs, self.atoms)))

    def boundary_values(self, s):
        out = np.zeros(np.shape(s))
        for c, a in zip(self.coeffs, self.atoms):
            out = out + c * a.boundary_values(s)
        return out

    def scaled(self, k):
        return AtomCombination(self.atoms, self.coeffs * k, dict(self.info))

    @property
    def breakpoints(self):
        return [b for a in self.atoms for b in a.support]

    def to_dict(self):
        return {
            "atoms": [a.to_dict() for a in self.atoms],
            "coeffs": self.coeffs.tolist(),
            "force": np.asarray(self.force).tolist(),
            "torque": self.torque,
            **self.info,
        }


def _pair_candidates(T, valid):
    n = T.size
    half = n // 2
    j = np.arange(n)
    opp = (j + half) % n
    ok = valid & valid[opp]
    score = np.where(ok, np.abs(T + T[opp]), -1.0)
    return score, opp


def _triple_candidates(m, T, valid, max_pivots=16, stride=None):
    idx = np.nonzero(valid)[0]
    if idx.size < 3:
        return None
    if stride is None:
        stride = max(1, idx.size // 180)
    sub = idx[::stride]
    pivots = idx[np.argsort(-np.abs(T[idx]), kind="stable")][:max_pivots]
    best = None
    B, C = np.meshgrid(sub, sub, indexing="ij")
    B, C = B.ravel(), C.ravel()
    keep = B < C
    B, C = B[keep], C[keep]
    mb, mc = m[B], m[C]
    det = cross2(mb, mc)
    for a in pivots:
        ma = -m[a]
        with np.errstate(divide="ignore", invalid="ignore"):
            cb = cross2(np.broadcast_to(ma, mb.shape), mc) / det
            cc = cross2(mb, np.broadcast_to(ma, mb.shape)) / det
        ok = (np.abs(det) > 1e-3) & (cb > 0.05) & (cc > 0.05) & (B != a) & (C != a)
        if not np.any(ok):
            continue
        score = (np.abs(T[a]) + cb * np.abs(T[B]) + cc * np.abs(T[C])) / (1 + cb + cc)
        score = np.where(ok, score, -1.0)
        k = int(np.argmax(score))
        if best is None or score[k] > best[0]:
            best = (float(score[k]), (int(a), int(B[k]), int(C[k])))
    return best


def torque_pressure_2d(
    shape, x_B, sign=1, n_directions=720, exclusion=None, min_fraction=1e-3, radius=None
):
    """Nonnegative zero-force pressure with unit torque of the given sign.

    The torque indicator T(m) = (N(m) - x_B) . perp(m) is sampled on
    ``n_directions`` directions; an atom pushing along ``m`` exerts a torque
    close to ``-T(m)``.  A pair of opposite directions (equal coefficients)
    is preferred; otherwise three directions whose positive cone contains
    the origin are combined.  The result is scaled to torque ``sign``.

    Raises
    ------
    TorqueUnreachableError
        If T vanishes identically (circle with centered barycenter) or no
        zero-force combination with the requested torque sign exists.
    """
    x_B = np.asarray(x_B, dtype=float)
    sign = 1 if sign >= 0 else -1
    for attempt, n in enumerate((n_directions, 4 * n_directions)):
        m = directions(n)
        T = torque_indicator(shape, x_B, m)
        Tmax = float(np.max(np.abs(T)))
        if Tmax <= 1e-6 * shape.diameter:
            raise TorqueUnreachableError(
                "torque unreachable: the torque indicator vanishes (circle with centered barycenter)"
            )
        valid = (sign * T < 0) & (np.abs(T) >= 0.05 * Tmax)
        if exclusion is not None:
            s = shape.gauss_map_inverse(m)
            valid &= ~_arc_contains(exclusion, s)
        score, opp = _pair_candidates(T, valid)
        if score.max() > 0:
            top = score >= score.max() * (1 - 1e-12)
            cand = np.nonzero(top)[0]
            params = shape.gauss_map_inverse(m[cand])
            j = int(cand[np.argmin(params)])
            chosen = [j, int(opp[j])]
            kind = "pair"
        else:
            best = _triple_candidates(m, T, valid)
            if best is None:
                continue
            chosen = list(best[1])
            kind = "triple"
        try:
            atoms = [atom_at_direction(shape, m[j], 1.0, x_B=x_B, radius=radius,
                                       exclusion=exclusion) for j in chosen]
        except GeometryError:
            continue
        f = np.array([a.force for a in atoms])
        if kind == "pair":
            coeffs = np.array([1.0, -f[0] @ f[1] / (f[1] @ f[1])])
        else:
            M = np.stack([f[1], f[2]], axis=1)
            cb = np.linalg.solve(M, -f[0])
            coeffs = np.array([1.0, cb[0], cb[1]])
        if np.any(coeffs <= 0):
            continue
        combo = AtomCombination(atoms, coeffs)
        tau = combo.torque
        if sign * tau <= 0:
            continue
        fraction = abs(tau) / (Tmax * float(np.sum(coeffs * np.linalg.norm(f, axis=1))))
        if fraction < min_fraction:
            continue
        combo = combo.scaled(1.0 / abs(tau))
        combo.info.update(
            {
                "kind": kind,
                "directions": [m[j].tolist() for j in chosen],
                "indicator": [float(T[j]) for j in chosen],
                "torque_fraction": fraction,
                "grid": n,
                "refined": attempt > 0,
            }
        )
        return combo
    raise TorqueUnreachableError(
        "torque unreachable: no zero-force nonnegative atom combination with "
        f"torque sign {sign:+d}"
    )


# --------------------------------------------------------------------------
# time-dependent body pressures


def _smooth_split(x, eps):
    """(x_plus, x_minus) >= 0 with difference x, smooth when eps > 0."""
    r = np.sqrt(x * x + eps * eps)
    return 0.5 * (r + x), 0.5 * (r - x)


class _StaticPose:
    def __init__(self, x_B, dim):
        self.x_B = np.asarray(x_B, dtype=float)
        self.Q = np.eye(dim)

    def pose(self, t):
        return self.x_B, self.Q


class BodyPressure:
    """Pressure attached to one body: ball term plus an atom mixture.

    In body coordinates ``z`` (the body at its time-0 pose) the boundary
    pressure is

        a(t) . (z - x_B0) + sum_j c_j(t) atom_j(s),

    where ``a(t)`` is ``ball_coeff(t)`` rotated into the body frame and
    ``c_j(t) = atom_coeffs(t)[j]``.  Off the boundary the value is extended
    constantly along normals (the ball term is used as is) and multiplied by
    the cutoff.
    """

    def __init__(self, shape, x_B0, margin, trajectory=None, ball_coeff=None,
                 atoms=(), atom_coeffs=None, info=None):
        self.shape = shape
        self.dim = shape.dim
        self.x_B0 = np.asarray(x_B0, dtype=float)
        self.cutoff = CutoffField(shape, float(margin))
        self.margin = float(margin)
        self.trajectory = trajectory or _StaticPose(self.x_B0, self.dim)
        self.ball_coeff = ball_coeff
        self.atoms = list(atoms)
        self.atom_coeffs = atom_coeffs
        self.info = info or {}
        self._band = None
        self._quad = None

    # frames -------------------------------------------------------------
    def pose(self, t):
        return self.trajectory.pose(t)

    def to_body(self, t, y):
        xb, Q = self.pose(t)
        return (np.atleast_2d(y) - xb) @ Q + self.x_B0

    def body_at(self, t):
        xb, Q = self.pose(t)
        if self.dim == 2:
            ang = float(np.arctan2(Q[1, 0], Q[0, 0]))
            return self.shape.moved(translation=xb - self.x_B0, angle=ang, pivot=self.x_B0)
        return self.shape.moved(translation=xb - self.x_B0, rotation=Q, pivot=self.x_B0)

    def coefficients(self, t):
        if not self.atoms:
            return np.zeros(0)
        return np.asarray(self.atom_coeffs(t), dtype=float)

    def _ball_body(self, t):
        if self.ball_coeff is None:
            return None
        _, Q = self.pose(t)
        return Q.T @ np.asarray(self.ball_coeff(t), dtype=float)

    # values -------------------------------------------------------------
    def surface_values(self, t, z, s, atom_vals=None):
        """Boundary-extended value (before the cutoff) at body points z."""
        out = np.zeros(len(z))
        a = self._ball_body(t)
        if a is not None:
            out += (z - self.x_B0) @ a
        if self.atoms:
            c = self.coefficients(t)
            if atom_vals is None:
                atom_vals = np.stack([at.boundary_values(s) for at in self.atoms], axis=-1)
            out += atom_vals @ c
        return out

    def value(self, t, y):
        """Pressure contribution at lab points ``y``."""
        z = self.to_body(t, y)
        s, _, d = self.shape.project(z)
        sig = self.cutoff.of_distance(d)
        out = np.zeros(len(z))
        live = sig > 0
        if np.any(live):
            sl = s[live]
            out[live] = sig[live] * self.surface_values(t, z[live], sl)
        return out

    # boundary -----------------------------------------------------------
    @property
    def breakpoints(self):
        return [b for a in self.atoms for b in a.support]

    def boundary_quadrature(self):
        """Body-frame boundary quadrature aligned with the atom supports."""
        if self._quad is None:
            if self.dim == 3:
                self._quad = boundary_quadrature(self.shape)
            else:
                self._quad = boundary_quadrature(
                    self.shape, breakpoints=self.breakpoints or None
                )
            if self.atoms and self.dim == 2:
                vals = np.stack([a.boundary_values(self._quad.params) for a in self.atoms], -1)
            else:
                vals = None
            self._quad_atoms = vals
        return self._quad

    def boundary_values(self, t, quad=None):
        """Boundary pressure (without offset) at the nodes of ``quad``."""
        if quad is None:
            quad = self.boundary_quadrature()
            return self.surface_values(t, quad.nodes, quad.params, self._quad_atoms)
        return self.surface_values(t, quad.nodes, quad.params)

    def wrench(self, t):
        """Lab-frame force and torque about the current barycenter."""
        quad = self.boundary_quadrature()
        p = self.boundary_values(t)
        F = (quad.weights * p) @ quad.normals
        r = quad.nodes - self.x_B0
        _, Q = self.pose(t)
        if self.dim == 2:
            tau = float(np.sum(quad.weights * p * cross2(r, quad.normals)))
            return Q @ F, tau
        tau = (quad.weights * p) @ np.cross(r, quad.normals)
        return Q @ F, Q @ tau

    # band quadrature over U \ B -------------------------------------------
    def band(self, n_nu=12):
        """Body-frame quadrature of the band {0 < d_B < margin}.

        Returns points, weights, parameters, normal offsets and the cached
        unit-atom values at the foot points.
        """
        if self._band is not None:
            return self._band
        xn, wn = gauss_legendre(n_nu)
        nu = self.margin * xn
        wnu = self.margin * wn
        if self.dim == 2:
            q = boundary_quadrature(self.shape, breakpoints=self.breakpoints or None)
            kappa = self.shape.curvature(q.params)
            pts = q.nodes[:, None, :] + nu[None, :, None] * q.normals[:, None, :]
            w = q.weights[:, None] * wnu[None, :] * (1 + kappa[:, None] * nu[None, :])
            s = np.repeat(q.params, n_nu)
            foot = np.repeat(q.nodes, n_nu, axis=0)
        else:
            q = boundary_quadrature(self.shape)
            r = self.shape.radius
            pts = self.shape.center + (r + nu[None, :, None]) * q.normals[:, None, :]
            w = q.weights[:, None] * wnu[None, :] * ((r + nu[None, :]) / r) ** 2
            s = np.repeat(q.params, n_nu, axis=0)
            foot = np.repeat(q.nodes, n_nu, axis=0)
        pts = pts.reshape(-1, self.dim)
        w = w.ravel()
        nu_all = np.tile(nu, len(q.weights))
        sig = self.cutoff.of_distance(nu_all)
        vals = None
        if self.atoms:
            vals = np.stack([a.boundary_values(s) for a in self.atoms], axis=-1)
        self._band = {"points": pts, "weights": w, "params": s, "sigma": sig,
                      "atom_values": vals, "foot": foot}
        return self._band

    def band_values(self, t):
        """Pressure contribution at the band nodes (body frame) at time t."""
        b = self.band()
        out = np.zeros(len(b["weights"]))
        a = self._ball_body(t)
        if a is not None:
            out += (b["points"] - self.x_B0) @ a
        if self.atoms:
            out += b["atom_values"] @ self.coefficients(t)
        return b["sigma"] * out

    def band_points_lab(self, t):
        xb, Q = self.pose(t)
        return xb + (self.band()["points"] - self.x_B0) @ Q.T

    def to_dict(self):
        d = {"margin": self.margin, "ball_term": self.ball_coeff is not None}
        if self.atoms:
            d["atoms"] = [a.to_dict() for a in self.atoms]
        d.update(self.info)
        return d


def ball_translation_pressure(ball, mass, eta_prime, cutoff, x_B=None, trajectory=None):
    """Pressure ``(m / |B|) eta'(t) . (x - x_B(t)) sigma_U`` of a ball.

    The linear profile is centered at the barycenter instead of the origin;
    this changes it by a spatially constant amount only, which exerts no
    force or torque on the closed boundary.
    """
    x_B = ball.centroid if x_B is None else np.asarray(x_B, dtype=float)
    k = mass / ball.area

    def coeff(t):
        return k * np.asarray(eta_prime(t), dtype=float).reshape(ball.dim)

    return BodyPressure(ball, x_B, cutoff.margin, trajectory, ball_coeff=coeff,
                        info={"kind": "ball"})


def motion_pressure_2d(shape, x_B, force, torque, cutoff, times, trajectory=None,
                       ball_coeff=None, exclusion=None, radius=None, split=0.1):
    """Body pressure realizing ``force(t)`` and ``torque(t)``.

    ``force`` returns body-frame forces (n, 2) and ``torque`` torques (n,)
    for time arrays.  The force part uses four fixed unit atoms along the
    body axes with the smooth nonnegative split
    ``c_pm = (sqrt(F^2 + eps^2) pm F) / 2``; when ``ball_coeff`` is given the
    ball term supplies the force instead.  The torque defect is supplied by
    unit-torque zero-force combinations of the needed sign(s).
    """
    times = np.asarray(times, dtype=float)
    dense = np.sort(np.concatenate([times, 0.5 * (times[1:] + times[:-1])]))
    x_B = np.asarray(x_B, dtype=float)
    atoms = []
    info = {"kind": "atoms"}

    if ball_coeff is None:
        axes = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        Fs = np.asarray(force(dense), dtype=float).reshape(len(dense), 2)
        eps_f = split * float(np.max(np.abs(Fs))) if Fs.size else 0.0
        unit = [atom_at_direction(shape, m, 1.0, x_B=x_B, radius=radius, exclusion=exclusion)
                for m in axes]
        atoms.extend(unit)
        fx = np.array([a.force for a in unit])

        def force_coeffs(t):
            F = np.asarray(force(np.atleast_1d(t)), dtype=float).reshape(-1, 2)
            # components in the basis of the (unit, nearly opposite) atom forces
            G = np.array([fx[0] - fx[1], fx[2] - fx[3]]).T / 2
            g = np.linalg.solve(G, F.T).T
            a1, b1 = _smooth_split(g[:, 0], eps_f)
            a2, b2 = _smooth_split(g[:, 1], eps_f)
            return np.stack([a1, b1, a2, b2], axis=-1)

        info["force_split_eps"] = eps_f
        tau_unit = np.array([a.torque for a in unit])

        def tau1(t):
            return force_coeffs(t) @ tau_unit

        coeff_force = force_coeffs
    else:
        quad = boundary_quadrature(shape)
        r = quad.nodes - x_B
        lever = (quad.weights * cross2(r, quad.normals)) @ r

        pose = (trajectory or _StaticPose(x_B, 2)).pose

        def tau1(t):
            t = np.atleast_1d(t)
            a = np.array([pose(tt)[1].T @ np.asarray(ball_coeff(tt), dtype=float) for tt in t])
            return a @ lever

        coeff_force = None
        info["kind"] = "ball"

    def defect(t):
        return np.asarray(torque(np.atleast_1d(t)), dtype=float) - tau1(t)

    k = defect(dense)
    kscale = float(np.max(np.abs(k))) if k.size else 0.0
    tscale = float(np.max(np.abs(np.asarray(torque(dense))))) if k.size else 0.0
    tol = 1e-12 * max(1.0, tscale)
    combos = []
    if kscale > tol:
        need_pos = bool(np.max(k) > tol)
        need_neg = bool(np.min(k) < -tol)
        pos = torque_pressure_2d(shape, x_B, +1, exclusion=exclusion, radius=radius) if need_pos else None
        neg = torque_pressure_2d(shape, x_B, -1, exclusion=exclusion, radius=radius) if need_neg else None
        eps_k = split * kscale if (need_pos and need_neg) else 0.0
        for c in (pos, neg):
            if c is not None:
                combos.append(c)
                atoms.extend(c.atoms)
        info["torque_split_eps"] = eps_k
        info["torque_combinations"] = [c.info for c in combos]

        def torque_weights(t):
            kk = defect(t)
            if pos is not None and neg is not None:
                kp, kn = _smooth_split(kk, eps_k)
                return [(pos, kp / pos.torque), (neg, kn / -neg.torque)]
            c = pos if pos is not None else neg
            return [(c, kk / c.torque)]
    else:
        torque_weights = None

    def atom_coeffs(t):
        t = np.atleast_1d(t)
        parts = []
        if coeff_force is not None:
            parts.append(coeff_force(t))
        if torque_weights is not None:
            for c, w in torque_weights(t):
                parts.append(w[:, None] * c.coeffs[None, :])
        out = np.concatenate(parts, axis=-1) if parts else np.zeros((len(t), 0))
        return out[0] if out.shape[0] == 1 else out

    return BodyPressure(shape, x_B, cutoff.margin, trajectory, ball_coeff=ball_coeff,
                        atoms=atoms, atom_coeffs=atom_coeffs if atoms else None, info=info)


# --------------------------------------------------------------------------
# fluid mass and the offset p0


def solve_offset(band_values, band_weights, outside_area, law, mass, floor_values=()):
    """Offset ``p0`` with ``sum w rho(p + p0) + rho(p0) * outside_area = mass``.

    ``band_values``/``band_weights`` are lists of arrays (one per body).
    ``floor_values`` are extra samples of the pressure (e.g. a dense scan)
    that must stay positive after the offset.

    Raises
    ------
    InputError
        If ``mass`` is outside the feasible interval of the monotone map
        ``p0 -> mass``.
    """
    vals = [np.asarray(v, dtype=float) for v in band_values]
    ws = [np.asarray(w, dtype=float) for w in band_weights]
    lows = [0.0 if outside_area > 0 else np.inf]
    lows += [float(v.min()) for v in vals if v.size]
    lows += [float(np.min(f)) for f in floor_values if np.size(f)]
    pmin = min(lows)
    if not np.isfinite(pmin):
        pmin = 0.0

    def M(p0):
        tot = float(law.density(p0)) * outside_area if outside_area > 0 else 0.0
        for v, w in zip(vals, ws):
            tot += float(w @ law.density(v + p0))
        return tot

    scale = max(1.0, abs(pmin), max((float(np.abs(v).max()) for v in vals if v.size), default=0.0))
    lo = -pmin + 1e-12 * scale
    M_lo = M(lo)
    if not mass > M_lo:
        raise InputError(
            f"fluid mass {mass:.6g} is outside the feasible interval ({M_lo:.6g}, inf) "
            "for this pressure"
        )
    hi = lo + scale
    while M(hi) < mass:
        hi = lo + 2 * (hi - lo)
        if hi > 1e300:
            raise NumericError("could not bracket the pressure offset")
    p0 = brentq(lambda q: M(q) - mass, lo, hi, xtol=1e-15 * scale, rtol=1e-15, maxiter=500)
    # polish with Newton steps (derivative d rho / dp = 1 / p'(rho))
    for _ in range(2):
        dM = float(1.0 / law.dpressure(law.density(p0))) * outside_area if outside_area > 0 else 0.0
        for v, w in zip(vals, ws):
            rho = law.density(v + p0)
            dM += float(w @ (1.0 / law.dpressure(rho)))
        step = (M(p0) - mass) / dM
        if p0 - step > lo:
            p0 -= step
    return float(p0)


class SynthesizedPressure:
    """Total pressure ``sum_i p_i(t, x) + p0(t)`` on the fluid domain.

    ``p0`` is solved per time so that the fluid mass equals ``mass``, unless
    ``offset`` (a callable of t) is supplied.
    """

    def __init__(self, bodies, law, mass, cavity, offset=None):
        self.bodies = list(bodies)
        self.law = law
        self.mass = float(mass)
        self.cavity = cavity
        self._offset = offset
        self._p0 = {}
        self.outside_area = cavity.area - sum(b.cutoff.support_measure for b in self.bodies)
        if self.outside_area < 0:
            raise GeometryError("cutoff neighbourhoods exceed the cavity")

    @property
    def fluid_volume(self):
        return self.cavity.area - sum(b.shape.area for b in self.bodies)

    def offset(self, t):
        t = float(t)
        if self._offset is not None:
            return float(self._offset(t))
        p0 = self._p0.get(t)
        if p0 is None:
            p0 = mass_offset(self, self.law, self.mass, t)
            self._p0[t] = p0
        return p0

    def tilde(self, t, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.zeros(len(y))
        for b in self.bodies:
            out += b.value(t, y)
        return out

    def value(self, t, y):
        return self.tilde(t, y) + self.offset(t)

    def density(self, t, y):
        return self.law.density(self.value(t, y))

    def density_rate(self, t, y, delta=1e-3):
        """Fourth-order central difference of the density in time at fixed y."""
        f = [self.density(t + k * delta, y) for k in (-2, -1, 1, 2)]
        return (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * delta)

    def band_data(self, t):
        """Lab band points, weights and pressure-without-offset per body."""
        return [(b.band_points_lab(t), b.band()["weights"], b.band_values(t)) for b in self.bodies]

    def fluid_mass(self, t, offset=None):
        p0 = self.offset(t) if offset is None else offset
        tot = float(self.law.density(p0)) * self.outside_area
        for b in self.bodies:
            tot += float(b.band()["weights"] @ self.law.density(b.band_values(t) + p0))
        return tot

    def boundary_pressure(self, i, t):
        """Body-frame quadrature of body i and the total pressure at its nodes."""
        b = self.bodies[i]
        q = b.boundary_quadrature()
        return q, b.boundary_values(t) + self.offset(t)

    def to_dict(self):
        return {"bodies": [b.to_dict() for b in self.bodies]}


def mass_offset(pressure, law, mass, t, dense=True):
    """Offset ``p0(t)`` making the fluid mass equal to ``mass``.

    The integral over the fluid domain splits into the region outside the
    cutoff neighbourhoods, where the pressure is the constant ``p0``, and the
    bands around the bodies, integrated in normal coordinates.
    """
    vals, ws, floors = [], [], []
    for b in pressure.bodies:
        vals.append(b.band_values(t))
        ws.append(b.band()["weights"])
        if dense:
            floors.append(b.boundary_values(t))
    return solve_offset(vals, ws, pressure.outside_area, law, mass, floors)


__all__ = [
    "CutoffField",
    "make_cutoff",
    "PressureAtom",
    "force_atom_2d",
    "atom_at_direction",
    "AtomCombination",
    "torque_pressure_2d",
    "BodyPressure",
    "ball_translation_pressure",
    "motion_pressure_2d",
    "solve_offset",
    "SynthesizedPressure",
    "mass_offset",
]
