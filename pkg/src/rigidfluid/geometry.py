"""Body shapes, cavities, normals, the Gauss map and boundary quadrature.

Two-dimensional bodies are strictly convex closed curves stored as truncated
Fourier series in a parameter ``s`` in [0, 1), oriented counterclockwise.
Three-dimensional bodies are balls.  Normals always point out of the body,
into the fluid, and ``n_perp`` is ``n`` rotated counterclockwise by pi/2.
"""

import functools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from . import kernels
from .errors import GeometryError, NumericError

TWO_PI = 2.0 * np.pi


def perp(v):
    """Counterclockwise rotation by pi/2 of 2-vectors (last axis)."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def cross2(a, b):
    """Scalar cross product a x b of 2-vectors (last axis)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def rotation2(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


@functools.lru_cache(maxsize=64)
def _gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = _gauss_legendre(int(n))
    return x.copy(), w.copy()


def smoothstep(u):
    """C2 quintic 10u^3 - 15u^4 + 6u^5, clamped to [0, 1]."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u))


def smoothstep_deriv(u):
    inside = (u > 0.0) & (u < 1.0)
    u = np.clip(u, 0.0, 1.0)
    return np.where(inside, 30.0 * u * u * (1.0 - u) ** 2, 0.0)


# --------------------------------------------------------------------------
# two-dimensional strictly convex curves


class FourierCurve:
    """Closed C-infinity curve ``gamma(s) = center + sum_k A_k cos + B_k sin``.

    Parameters
    ----------
    center : array_like, shape (2,)
    coeffs : array_like, shape (4, K)
        Rows ``ax, bx, ay, by`` for modes ``k = 1..K``.
    check : bool
        Verify strict convexity (curvature > 0 at a dense sample).

    A clockwise parametrization is flipped to counterclockwise on input.
    """

    dim = 2
    kind = "curve"

    def __init__(self, center, coeffs, check=True):
        self.center = np.array(center, dtype=float).reshape(2)
        co = np.array(coeffs, dtype=float)
        if co.ndim != 2 or co.shape[0] != 4 or co.shape[1] < 1:
            raise GeometryError("Fourier coefficients must have shape (4, K)")
        self.coeffs = np.ascontiguousarray(co)
        if self._signed_area() < 0.0:
            self.coeffs[1] *= -1.0
            self.coeffs[3] *= -1.0
        self._table = None
        if check:
            self.check_convex()

    # construction helpers -------------------------------------------------
    @classmethod
    def ellipse(cls, center=(0.0, 0.0), a=1.0, b=1.0, angle=0.0):
        if a <= 0 or b <= 0:
            raise GeometryError("ellipse semi-axes must be positive")
        R = rotation2(angle)
        ca = R @ np.array([a, 0.0])
        sb = R @ np.array([0.0, b])
        co = np.array([[ca[0]], [sb[0]], [ca[1]], [sb[1]]])
        return cls(center, co)

    @classmethod
    def from_radial(cls, center, r0, cos_coeffs=(), sin_coeffs=()):
        """Star-shaped curve r(theta) = r0 + sum c_k cos k theta + d_k sin k theta."""
        K = max(len(cos_coeffs), len(sin_coeffs))
        c = np.zeros(K + 1)
        d = np.zeros(K + 1)
        c[0] = r0
        c[1:len(cos_coeffs) + 1] = cos_coeffs
        d[1:len(sin_coeffs) + 1] = sin_coeffs
        # rows: x cos, x sin, y cos, y sin for modes 0..K+1
        acc = np.zeros((4, K + 2))

        def add(m, xc, xs, yc, ys):
            if m < 0:
                m, xs, ys = -m, -xs, -ys
            acc[:, m] += (xc, xs, yc, ys)

        for k in range(K + 1):
            # products of r's mode k with cos(theta) and sin(theta)
            add(k + 1, 0.5 * c[k], 0.5 * d[k], -0.5 * d[k], 0.5 * c[k])
            add(k - 1, 0.5 * c[k], 0.5 * d[k], 0.5 * d[k], -0.5 * c[k])
        shift = np.array([acc[0, 0], acc[2, 0]])
        return cls(np.asarray(center, dtype=float) + shift, acc[:, 1:])

    def to_dict(self):
        return {
            "kind": "fourier",
            "center": self.center.tolist(),
            "coeffs": self.coeffs.tolist(),
        }

    # evaluation -----------------------------------------------------------
    def evaluate(self, s):
        """Rows x, y, x', y', x'', y'' at the parameters ``s``."""
        return kernels.curve_eval(self.center, self.coeffs, s)

    def point(self, s):
        v = self.evaluate(s)
        return np.stack([v[0], v[1]], axis=-1)

    def speed(self, s):
        v = self.evaluate(s)
        return np.hypot(v[2], v[3])

    def normal(self, s):
        """Outward unit normals and their counterclockwise rotations."""
        v = self.evaluate(s)
        sp = np.hypot(v[2], v[3])
        n = np.stack([v[3], -v[2]], axis=-1) / sp[:, None]
        return n, perp(n)

    def curvature(self, s):
        v = self.evaluate(s)
        sp = np.hypot(v[2], v[3])
        return (v[2] * v[5] - v[3] * v[4]) / sp**3

    def _signed_area(self):
        s, w = gauss_legendre(8 * self.coeffs.shape[1] + 8)
        v = kernels.curve_eval(self.center, self.coeffs, s)
        return 0.5 * np.sum(w * (v[0] * v[3] - v[1] * v[2]))

    def check_convex(self, samples=None):
        """Reject shapes whose curvature is not positive at every sample."""
        n = samples or 4 * default_node_count(self)
        s = (np.arange(n) + 0.5) / n
        kappa = self.curvature(s)
        if not np.all(np.isfinite(kappa)) or kappa.min() <= 0.0:
            i = int(np.argmin(kappa))
            raise GeometryError(
                f"curve is not strictly convex: curvature {kappa[i]:.3e} at s={s[i]:.4f}"
            )
        turning = np.sum(kappa * self.speed(s)) / n
        if abs(turning - TWO_PI) > 1e-6 * TWO_PI:
            raise GeometryError("curve is self-intersecting (total turning != 2 pi)")
        return True

    @property
    def area(self):
        return abs(self._signed_area())

    @property
    def perimeter(self):
        q = boundary_quadrature(self)
        return float(q.weights.sum())

    @property
    def centroid(self):
        """Geometric (uniform density) center."""
        s, w = gauss_legendre(8 * self.coeffs.shape[1] + 8)
        v = self.evaluate(s)
        a = 0.5 * np.sum(w * (v[0] * v[3] - v[1] * v[2]))
        cx = np.sum(w * v[0] ** 2 * v[3]) / (2 * a)
        cy = -np.sum(w * v[1] ** 2 * v[2]) / (2 * a)
        return np.array([cx, cy])

    def bbox(self):
        p = self.point(np.linspace(0, 1, 16 * self.coeffs.shape[1] + 64, endpoint=False))
        return p.min(axis=0), p.max(axis=0)

    @property
    def diameter(self):
        lo, hi = self.bbox()
        return float(np.max(hi - lo))

    @property
    def is_circle(self):
        return False

    # dense sampling table used as initial guess for Newton solves
    def _dense(self):
        if self._table is None:
            n = max(512, 32 * self.coeffs.shape[1])
            s = np.arange(n) / n
            v = self.evaluate(s)
            pts = np.stack([v[0], v[1]], axis=-1)
            phi = np.unwrap(np.arctan2(-v[2], v[3]))
            self._table = (s, pts, cKDTree(pts), phi)
        return self._table

    def project(self, points):
        """Closest boundary parameters, closest points and signed distances.

        Signed distance is positive outside the body.  Valid for every point
        outside the body and for interior points within the reach of the
        boundary.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        s_tab, _, tree, _ = self._dense()
        _, idx = tree.query(pts)
        s = kernels.curve_project(self.center, self.coeffs, pts[:, 0], pts[:, 1], s_tab[idx])
        v = self.evaluate(s)
        foot = np.stack([v[0], v[1]], axis=-1)
        sp = np.hypot(v[2], v[3])
        n = np.stack([v[3], -v[2]], axis=-1) / sp[:, None]
        dist = np.sum((pts - foot) * n, axis=1)
        return s, foot, dist

    def signed_distance(self, points):
        return self.project(points)[2]

    def gauss_map_inverse(self, m):
        """Boundary parameter(s) where the outward normal equals ``m``."""
        m = np.atleast_2d(np.asarray(m, dtype=float))
        theta = np.arctan2(m[:, 1], m[:, 0])
        s_tab, _, _, phi = self._dense()
        base = phi[0]
        t = base + np.mod(theta - base, TWO_PI)
        idx = np.clip(np.searchsorted(phi, t), 0, len(s_tab) - 1)
        s = kernels.curve_normal_inverse(self.center, self.coeffs, theta, s_tab[idx])
        n, _ = self.normal(s)
        mm = m / np.linalg.norm(m, axis=1, keepdims=True)
        err = np.linalg.norm(n - mm, axis=1)
        if np.any(err > 1e-9):
            raise NumericError(f"Gauss map inversion failed (normal mismatch {err.max():.2e})")
        return s

    def moved(self, translation=(0.0, 0.0), angle=0.0, pivot=None):
        """Copy rotated by ``angle`` about ``pivot`` and then translated."""
        R = rotation2(angle)
        pivot = self.center if pivot is None else np.asarray(pivot, dtype=float)
        center = pivot + R @ (self.center - pivot) + np.asarray(translation, dtype=float)
        co = self.coeffs.copy()
        co[[0, 2]] = R @ self.coeffs[[0, 2]]
        co[[1, 3]] = R @ self.coeffs[[1, 3]]
        return self._rebuild(center, co)

    def _rebuild(self, center, coeffs):
        return FourierCurve(center, coeffs, check=False)

    def __repr__(self):
        return f"FourierCurve(center={self.center.tolist()}, modes={self.coeffs.shape[1]})"


class Disk(FourierCurve):
    """Circle of radius ``radius``; a one-mode Fourier curve with exact helpers."""

    kind = "disk"

    def __init__(self, center, radius):
        if not np.isfinite(radius) or radius <= 0:
            raise GeometryError(f"radius must be positive, got {radius}")
        self.radius = float(radius)
        super().__init__(center, [[radius], [0.0], [0.0], [radius]], check=False)

    @property
    def area(self):
        return np.pi * self.radius**2

    @property
    def perimeter(self):
        return TWO_PI * self.radius

    @property
    def centroid(self):
        return self.center.copy()

    @property
    def is_circle(self):
        return True

    def project(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = pts - self.center
        r = np.hypot(d[:, 0], d[:, 1])
        s = np.mod(np.arctan2(d[:, 1], d[:, 0]) / TWO_PI, 1.0)
        n = np.stack([np.cos(TWO_PI * s), np.sin(TWO_PI * s)], axis=-1)
        return s, self.center + self.radius * n, r - self.radius

    def gauss_map_inverse(self, m):
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return np.mod(np.arctan2(m[:, 1], m[:, 0]) / TWO_PI, 1.0)

    def _rebuild(self, center, coeffs):
        return Disk(center, self.radius)

    def to_dict(self):
        return {"kind": "disk", "center": self.center.tolist(), "radius": self.radius}

    def __repr__(self):
        return f"Disk(center={self.center.tolist()}, radius={self.radius})"


class Ball:
    """Three-dimensional ball."""

    dim = 3
    kind = "ball"

    def __init__(self, center, radius):
        if not np.isfinite(radius) or radius <= 0:
            raise GeometryError(f"radius must be positive, got {radius}")
        self.center = np.array(center, dtype=float).reshape(3)
        self.radius = float(radius)

    @property
    def volume(self):
        return 4.0 / 3.0 * np.pi * self.radius**3

    area = volume

    @property
    def surface_area(self):
        return 4.0 * np.pi * self.radius**2

    @property
    def centroid(self):
        return self.center.copy()

    @property
    def diameter(self):
        return 2 * self.radius

    is_circle = True

    def point(self, s):
        s = np.atleast_2d(np.asarray(s, dtype=float))
        return self.center + self.radius * _sphere_dirs(s[:, 0], s[:, 1])

    def normal(self, s):
        s = np.atleast_2d(np.asarray(s, dtype=float))
        return _sphere_dirs(s[:, 0], s[:, 1]), None

    def project(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = pts - self.center
        r = np.linalg.norm(d, axis=1)
        u = d / np.where(r > 0, r, 1.0)[:, None]
        return u, self.center + self.radius * u, r - self.radius

    def signed_distance(self, points):
        return self.project(points)[2]

    def gauss_map_inverse(self, m):
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return self.center + self.radius * m / np.linalg.norm(m, axis=1, keepdims=True)

    def moved(self, translation=(0.0, 0.0, 0.0), rotation=None, pivot=None):
        if rotation is not None:
            pivot = self.center if pivot is None else np.asarray(pivot, dtype=float)
            c = pivot + np.asarray(rotation) @ (self.center - pivot)
        else:
            c = self.center
        return Ball(c + np.asarray(translation, dtype=float), self.radius)

    def bbox(self):
        return self.center - self.radius, self.center + self.radius

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


def _sphere_dirs(polar, azimuth):
    st = np.sin(polar)
    return np.stack([st * np.cos(azimuth), st * np.sin(azimuth), np.cos(polar)], axis=-1)


# --------------------------------------------------------------------------
# normals, Gauss map, torque indicator


def normal_at(shape, s):
    """Outward unit normal and its counterclockwise rotation at parameter s.

    For balls ``s`` is a (polar, azimuth) pair and ``n_perp`` is None.
    """
    if shape.dim == 2:
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        kappa = shape.curvature(s_arr)
        if np.any(kappa <= 0.0):
            raise GeometryError("normal requested on a non-convex part of the curve")
        n, nperp = shape.normal(s_arr)
        if np.ndim(s) == 0:
            return n[0], nperp[0]
        return n, nperp
    n, _ = shape.normal(s)
    return (n[0] if np.ndim(s) == 1 else n), None


def gauss_map_inverse(shape, m):
    """Boundary point whose outward normal is the unit vector ``m``."""
    m = np.asarray(m, dtype=float)
    if shape.dim == 3:
        p = shape.gauss_map_inverse(m)
    else:
        p = shape.point(shape.gauss_map_inverse(m))
    return p[0] if m.ndim == 1 else p


def torque_indicator(shape, x_B, m):
    """T(m) = (N(m) - x_B) . m_perp for unit directions ``m`` (2D)."""
    m = np.asarray(m, dtype=float)
    N = np.atleast_2d(gauss_map_inverse(shape, m))
    mm = np.atleast_2d(m)
    T = np.sum((N - np.asarray(x_B, dtype=float)) * perp(mm), axis=1)
    return T[0] if m.ndim == 1 else T


def directions(n, offset=0.0):
    """``n`` unit vectors at equally spaced angles starting at ``offset``."""
    th = offset + TWO_PI * np.arange(n) / n
    return np.stack([np.cos(th), np.sin(th)], axis=-1)


# --------------------------------------------------------------------------
# boundary quadrature


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Nodes, weights and outward normals on a closed body boundary.

    ``params`` holds the curve parameter of every node (2D) or the
    (polar, azimuth) pair (3D).
    """

    nodes: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    params: np.ndarray

    @property
    def order(self):
        return self.weights.size

    @property
    def measure(self):
        return float(self.weights.sum())


def default_node_count(shape):
    return 16 * max(8, 2 * shape.coeffs.shape[1])


def _curve_quadrature(curve, panels, order, breakpoints=None):
    edges = np.linspace(0.0, 1.0, panels + 1)
    if breakpoints is not None and len(breakpoints):
        edges = np.unique(np.concatenate([edges, np.mod(breakpoints, 1.0)]))
    x, w = gauss_legendre(order)
    lo, hi = edges[:-1], edges[1:]
    s = (lo[:, None] + (hi - lo)[:, None] * x).ravel()
    ws = ((hi - lo)[:, None] * w).ravel()
    v = curve.evaluate(s)
    sp = np.hypot(v[2], v[3])
    nodes = np.stack([v[0], v[1]], axis=-1)
    normals = np.stack([v[3], -v[2]], axis=-1) / sp[:, None]
    return BoundaryQuadrature(nodes, ws * sp, normals, s)


def boundary_quadrature(shape, panels=None, order=16, breakpoints=None, rtol=1e-14):
    """Composite Gauss-Legendre quadrature on the boundary of ``shape``.

    For curves the panel count is doubled until the arclength is stable to
    ``rtol`` unless ``panels`` is given.  ``breakpoints`` are extra parameter
    values added to the panel edges, so that integrands with kinks there are
    integrated spectrally.
    """
    if shape.dim == 3:
        n = order if panels is None else order * panels
        ct, wt = np.polynomial.legendre.leggauss(n)
        polar = np.arccos(ct)
        az = TWO_PI * np.arange(2 * n) / (2 * n)
        P, A = np.meshgrid(polar, az, indexing="ij")
        W = np.outer(wt, np.full(2 * n, TWO_PI / (2 * n)))
        dirs = _sphere_dirs(P.ravel(), A.ravel())
        r = shape.radius
        return BoundaryQuadrature(
            shape.center + r * dirs, r * r * W.ravel(), dirs, np.stack([P.ravel(), A.ravel()], -1)
        )
    if panels is not None:
        return _curve_quadrature(shape, panels, order, breakpoints)
    panels = max(8, 2 * shape.coeffs.shape[1])
    q = _curve_quadrature(shape, panels, order, breakpoints)
    for _ in range(8):
        q2 = _curve_quadrature(shape, 2 * panels, order, breakpoints)
        if abs(q2.measure - q.measure) <= rtol * q2.measure:
            return q
        panels *= 2
        q = q2
    return q


def boundary_integral(quad, f):
    """Integrate ``f`` over the boundary described by ``quad``.

    ``f`` is either an array of node values, shape (n,) or (n, k), or a
    callable ``f(nodes, normals)`` returning such an array.
    """
    vals = f(quad.nodes, quad.normals) if callable(f) else np.asarray(f, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 1:
        return float(np.dot(quad.weights, vals))
    return quad.weights @ vals


# --------------------------------------------------------------------------
# cavities


class RectangleCavity:
    """Axis-aligned rectangular (2D) or box (3D) container."""

    def __init__(self, lo, hi):
        self.lo = np.array(lo, dtype=float)
        self.hi = np.array(hi, dtype=float)
        if self.lo.shape != self.hi.shape or self.lo.size not in (2, 3):
            raise GeometryError("cavity corners must both have 2 or 3 coordinates")
        if np.any(self.hi <= self.lo):
            raise GeometryError("cavity upper corner must exceed lower corner")
        self.dim = self.lo.size

    kind = "rectangle"

    @property
    def area(self):
        return float(np.prod(self.hi - self.lo))

    def bbox(self):
        return self.lo.copy(), self.hi.copy()

    def inner_distance(self, points):
        """Distance to the wall, positive inside the cavity."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.minimum((p - self.lo).min(axis=1), (self.hi - p).min(axis=1))

    def to_dict(self):
        return {"kind": "rectangle", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class CurveCavity:
    """Interior of a strictly convex closed curve used as the container."""

    kind = "curve"
    dim = 2

    def __init__(self, curve):
        self.curve = curve

    @property
    def area(self):
        return self.curve.area

    def bbox(self):
        return self.curve.bbox()

    def inner_distance(self, points):
        return -self.curve.signed_distance(points)

    def to_dict(self):
        d = self.curve.to_dict()
        return {"kind": "curve", "shape": d}


def _min_along_boundary(curve, f, samples=256):
    """Minimum of ``f(points)`` over a closed curve: dense scan plus a bounded refinement."""
    s = np.arange(samples) / samples
    v = f(curve.point(s))
    k = int(np.argmin(v))
    h = 1.0 / samples
    res = minimize_scalar(lambda u: float(f(curve.point(np.array([u])))[0]),
                          bounds=(s[k] - h, s[k] + h), method="bounded",
                          options={"xatol": 1e-12})
    return float(min(v[k], res.fun))


def body_clearance(cavity, body):
    """Smallest distance from the body boundary to the cavity wall (<0 if outside)."""
    if body.dim == 3:
        d = cavity.inner_distance(body.center[None, :])[0]
        return d - body.radius
    if isinstance(cavity, RectangleCavity):
        # support function of the convex body in the four wall directions
        e = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
        ext = body.point(body.gauss_map_inverse(e))
        return float(min(ext[0, 0] - cavity.lo[0], cavity.hi[0] - ext[1, 0],
                         ext[2, 1] - cavity.lo[1], cavity.hi[1] - ext[3, 1]))
    return _min_along_boundary(body, cavity.inner_distance)


def body_gap(a, b):
    """Distance between two bodies (negative when they overlap)."""
    if a.dim == 3:
        return float(np.linalg.norm(a.center - b.center) - a.radius - b.radius)
    return _min_along_boundary(a, b.signed_distance)
