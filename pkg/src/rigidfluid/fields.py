"""Fluid fields: density, compatibility, the Neumann potential and time derivatives.

The potential ``Phi`` solves, on each time slice,

    -Laplace(Phi) = d rho / dt   in the fluid,
    grad(Phi) . n_F = rho u . n_F   on the bodies,   0 on the cavity wall,

normalized by ``int Phi = 0``; ``n_F`` is the normal pointing out of the
fluid.  Solvability requires ``int d rho/dt + sum int rho u . n_F = 0``,
which is the transport-theorem statement of mass conservation.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dynamics import rigid_velocity
from .errors import InputError, NumericError

# --------------------------------------------------------------------------
# density


def density_from_pressure(p, law):
    """Pointwise inverse of the pressure law; rejects nonpositive pressures."""
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0)):
        raise InputError(f"nonpositive pressure sample (min {np.nanmin(p):.3e})")
    return law.density(p)


# --------------------------------------------------------------------------
# compatibility


def _body_boundary_lab(body, t):
    q = body.boundary_quadrature()
    xb, Q = body.pose(t)
    nodes = xb + (q.nodes - body.x_B0) @ Q.T
    normals = q.normals @ Q.T
    return q, nodes, normals, xb


def boundary_mass_flux(pressure, motion, t):
    """Per-body ``int rho u . n_F dS`` with ``n_F`` pointing out of the fluid."""
    p0 = pressure.offset(t)
    out = []
    for i, b in enumerate(pressure.bodies):
        q, nodes, normals, xb = _body_boundary_lab(b, t)
        rho = pressure.law.density(b.boundary_values(t) + p0)
        u = rigid_velocity(motion, i, t, nodes, xb)
        un = np.sum(u * normals, axis=1)
        out.append(-float(q.weights @ (rho * un)))
    return out


def compatibility_residual(pressure, motion, t, delta=1e-3):
    """``int d rho/dt dx + sum_i int rho u . n_F dS`` at time ``t``.

    The volume integral uses the band quadrature (exact splitting into the
    region where the pressure equals the offset and the bands around the
    bodies); ``d rho/dt`` is a fourth-order central difference with step
    ``delta`` at fixed points.
    """
    law = pressure.law
    # outside the cutoff neighbourhoods rho depends on t through p0 only
    r = [float(law.density(pressure.offset(t + k * delta))) for k in (-2, -1, 1, 2)]
    rate_out = (r[0] - 8 * r[1] + 8 * r[2] - r[3]) / (12 * delta)
    vol = rate_out * pressure.outside_area
    for b in pressure.bodies:
        pts = b.band_points_lab(t)
        vol += float(b.band()["weights"] @ pressure.density_rate(t, pts, delta))
    return vol + sum(boundary_mass_flux(pressure, motion, t))


def compat_tolerance(mass, T):
    return 1e-6 * mass / T


# --------------------------------------------------------------------------
# Neumann problem


@dataclass
class NeumannSolution:
    """P1 potential with its piecewise-constant gradient and diagnostics."""

    mesh: object
    phi: np.ndarray
    grad: np.ndarray
    deficit: float
    residual: float
    source_norm: float
    mean: float
    fluxes: dict = field(default_factory=dict)

    def gradient_at(self, tri):
        return self.grad[tri]


def stiffness_matrix(mesh):
    t = mesh.tris
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    K = sp.coo_matrix((mesh.kloc.ravel(), (rows, cols)), shape=(mesh.n_nodes,) * 2)
    return K.tocsr()


def _eval(f, *args):
    if f is None:
        return None
    if callable(f):
        return np.asarray(f(*args), dtype=float)
    return np.asarray(f, dtype=float)


def solve_neumann(mesh, rhs=None, flux=None, tol=1e-10):
    """Solve the pure Neumann problem with zero-mean normalization.

    Parameters
    ----------
    mesh : FluidDomainMesh
    rhs : array or callable
        Source values at ``mesh.quadrature.points`` (or ``rhs(points)``).
    flux : array or callable
        Outward flux ``g`` at ``mesh.boundary_quadrature.points`` (or
        ``flux(points, normals)``).
    tol : float
        Required relative residual of the linear solve.

    The discrete compatibility deficit ``int rhs + int g`` is removed by
    subtracting its mean from ``rhs``; it is returned in ``deficit``.
    """
    mq, bq = mesh.quadrature, mesh.boundary_quadrature
    b = np.zeros(mesh.n_nodes)
    f = _eval(rhs, mq.points)
    if f is not None:
        b += mq.load_vector(f)
    g = _eval(flux, bq.points, bq.normals)
    if g is not None:
        b += bq.load_vector(g)
    c = mq.load_vector(np.ones(len(mq.weights)))
    area = float(c.sum())
    deficit = float(b.sum())
    b_corr = b - deficit * c / area
    K = stiffness_matrix(mesh)
    n = mesh.n_nodes
    A = sp.bmat([[K, sp.csr_matrix(c[:, None])], [sp.csr_matrix(c[None, :]), None]]).tocsc()
    rhs_full = np.concatenate([b_corr, [0.0]])
    src = max(float(np.linalg.norm(b)), 1e-300)
    try:
        x = spla.spsolve(A, rhs_full)
    except Exception as exc:  # noqa: BLE001
        raise NumericError(f"Neumann solve failed: {exc}") from None
    res = float(np.linalg.norm(A @ x - rhs_full)) / src
    if not np.all(np.isfinite(x)) or res > tol:
        raise NumericError(
            f"Neumann solve inaccurate (relative residual {res:.2e}, "
            f"condition estimate {_condest(A):.2e})"
        )
    phi = x[:n]
    grad = np.einsum("tkd,tk->td", mesh.grads, phi[mesh.tris])
    mean = float(c @ phi) / area
    sol = NeumannSolution(mesh, phi, grad, deficit, res, src, mean)
    # variational boundary flux per boundary tag: int grad.grad w - int f w
    Kphi = K @ phi
    vol = mq.load_vector(f) if f is not None else np.zeros(n)
    for tag in np.unique(mesh.btag):
        nodes = np.unique(mesh.bedges[mesh.btag == tag])
        sol.fluxes[int(tag)] = float(np.sum(Kphi[nodes] - vol[nodes]))
    return sol


def _condest(A):
    try:
        lu = spla.splu(A.tocsc())
        inv = spla.LinearOperator(A.shape, matvec=lu.solve, rmatvec=lambda v: lu.solve(v, "T"))
        return float(spla.onenormest(A) * spla.onenormest(inv))
    except Exception:  # noqa: BLE001
        return float("inf")


def pointwise_flux_mismatch(sol, flux):
    """Relative L2 mismatch of grad(Phi) . n against the prescribed flux."""
    bq = sol.mesh.boundary_quadrature
    g = _eval(flux, bq.points, bq.normals)
    tri, _, _ = sol.mesh.locate(bq.points)
    gn = np.sum(sol.grad[tri] * bq.normals, axis=1)
    num = np.sqrt(bq.weights @ (gn - g) ** 2)
    den = np.sqrt(bq.weights @ g**2)
    return float(num / den) if den > 0 else float(num)


# --------------------------------------------------------------------------
# time derivatives


def time_derivative(fields, times, k, meshes=None):
    """Time derivative of a field trajectory at slice ``k``.

    ``fields`` is a list of nodal arrays.  Without ``meshes`` all slices share
    the same points.  With ``meshes`` (one per slice) neighbour slices are
    interpolated at the nodes of slice ``k``; points falling outside a
    neighbour's fluid domain switch to the one-sided difference on the other
    side, or use the linearly extrapolated value when both sides are swept.

    Returns ``(derivative, flags)`` with flags 0 (central), 1 (one-sided at
    an end of the grid), 2 (one-sided near a swept boundary) and 3
    (extrapolated on both sides).
    """
    n = len(fields)
    if n < 2:
        raise InputError("time derivative needs at least two slices")
    times = np.asarray(times, dtype=float)
    fk = np.asarray(fields[k], dtype=float)

    def at(j):
        if meshes is None:
            return np.asarray(fields[j], dtype=float), np.ones(fk.shape, dtype=bool)
        v, inside = meshes[j].interpolate(np.asarray(fields[j]), meshes[k].points)
        return v, inside

    flags = np.zeros(fk.shape, dtype=np.int8)
    if k == 0 or k == n - 1:
        s = 1 if k == 0 else -1
        f1, _ = at(k + s)
        if n >= 3:
            f2, _ = at(k + 2 * s)
            h = times[k + s] - times[k]
            d = (-3 * fk + 4 * f1 - f2) / (2 * h)
        else:
            d = (f1 - fk) / (times[k + s] - times[k])
        flags[:] = 1
        return d, flags
    fm, in_m = at(k - 1)
    fp, in_p = at(k + 1)
    h1 = times[k] - times[k - 1]
    h2 = times[k + 1] - times[k]
    d = (-h2 / (h1 * (h1 + h2))) * fm + ((h2 - h1) / (h1 * h2)) * fk + (h1 / (h2 * (h1 + h2))) * fp
    back = in_m & ~in_p
    fwd = in_p & ~in_m
    d = np.where(back, (fk - fm) / h1, d)
    d = np.where(fwd, (fp - fk) / h2, d)
    flags[back | fwd] = 2
    flags[~in_m & ~in_p] = 3
    return d, flags


# --------------------------------------------------------------------------
# fluid state


@dataclass
class SliceState:
    """Fields on the mesh of one time slice (nodal P1 unless noted)."""

    t: float
    mesh: object
    p: np.ndarray
    rho: np.ndarray
    rho_t: np.ndarray
    neumann: NeumannSolution
    phi_t: np.ndarray = None
    phi_t_flags: np.ndarray = None

    @property
    def phi(self):
        return self.neumann.phi

    @property
    def grad(self):
        return self.neumann.grad


@dataclass
class FluidState:
    times: np.ndarray
    slices: list
    pressure: object
    law: object
    dim: int = 2

    def bounds(self):
        lo = min(float(s.rho.min()) for s in self.slices)
        hi = max(float(s.rho.max()) for s in self.slices)
        return lo, hi


def neumann_data(pressure, motion, t, mesh, delta=1e-3):
    """Source and flux callables of the potential problem at time ``t``."""

    def rhs(points):
        return pressure.density_rate(t, points, delta)

    def flux(points, normals):
        g = np.zeros(len(points))
        bq = mesh.boundary_quadrature
        for i, b in enumerate(pressure.bodies):
            sel = bq.tag == i + 1
            if not np.any(sel):
                continue
            xb, _ = b.pose(t)
            u = rigid_velocity(motion, i, t, points[sel], xb)
            rho = pressure.density(t, points[sel])
            g[sel] = rho * np.sum(u * normals[sel], axis=1)
        return g

    return rhs, flux


def solve_slice(pressure, motion, t, mesh, delta=1e-3):
    """Density, density rate and potential on one slice."""
    p = pressure.value(t, mesh.points)
    rho = density_from_pressure(p, pressure.law)
    rho_t = pressure.density_rate(t, mesh.points, delta)
    rhs, flux = neumann_data(pressure, motion, t, mesh, delta)
    sol = solve_neumann(mesh, rhs, flux)
    return SliceState(float(t), mesh, p, rho, rho_t, sol)


def fill_time_derivatives(state):
    meshes = [s.mesh for s in state.slices]
    phis = [s.phi for s in state.slices]
    for k, s in enumerate(state.slices):
        s.phi_t, s.phi_t_flags = time_derivative(phis, state.times, k, meshes)


def compatible_initial_momentum(slice0, pressure, motion, rel_tol=1e-6, abs_tol=0.0):
    """Initial momentum ``m0 = grad(Phi0)`` with a boundary-flux check.

    Returns the per-triangle momentum and a dict comparing, per body, the
    variational flux of ``m0`` with ``int rho u . n_F dS``.  A body passes
    when the difference is within ``rel_tol`` of the prescribed flux or
    within ``abs_tol``.
    """
    sol = slice0.neumann
    prescribed = boundary_mass_flux(pressure, motion, slice0.t)
    check = {}
    ok = True
    for i, g in enumerate(prescribed):
        got = sol.fluxes.get(i + 1, 0.0)
        err = abs(got - g)
        passed = err <= max(rel_tol * abs(g), abs_tol, 1e-13)
        check[i] = {"flux_m0": got, "flux_prescribed": g, "abs_error": err, "pass": bool(passed)}
        ok &= passed
    return sol.grad, {"bodies": check, "ok": bool(ok)}


# --------------------------------------------------------------------------
# grid export

GRID_MAGIC = b"RFGRID01"


def sample_on_grid(mesh, nodal, nx, ny, bbox=None, fluid_only=True):
    """P1 field sampled on a regular grid; NaN outside the fluid."""
    lo, hi = mesh.cavity.bbox() if bbox is None else (np.asarray(bbox[0]), np.asarray(bbox[1]))
    xs = np.linspace(lo[0], hi[0], nx)
    ys = np.linspace(lo[1], hi[1], ny)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    vals, inside = mesh.interpolate(np.asarray(nodal, dtype=float), pts)
    if fluid_only:
        for b in mesh.bodies:
            inside &= b.signed_distance(pts) > 0
        vals = np.where(inside, vals, np.nan)
    return vals.reshape(ny, nx), (lo, hi)


def write_grid_binary(path, values, bbox, t):
    """Write a 2D grid: magic, dims, bbox, t, then little-endian float64 rows."""
    values = np.asarray(values, dtype="<f8")
    ny, nx = values.shape
    lo, hi = bbox
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<II", ny, nx))
        fh.write(struct.pack("<4d", lo[0], hi[0], lo[1], hi[1]))
        fh.write(struct.pack("<d", t))
        fh.write(np.ascontiguousarray(values).tobytes(order="C"))


def read_grid_binary(path):
    with open(path, "rb") as fh:
        if fh.read(8) != GRID_MAGIC:
            raise InputError(f"{path}: not a grid file")
        ny, nx = struct.unpack("<II", fh.read(8))
        x0, x1, y0, y1 = struct.unpack("<4d", fh.read(32))
        (t,) = struct.unpack("<d", fh.read(8))
        data = np.frombuffer(fh.read(8 * nx * ny), dtype="<f8").reshape(ny, nx)
    return data.copy(), ((x0, y0), (x1, y1)), t


def write_grid_csv(path, values, bbox):
    """Long-format CSV with columns x, y, value."""
    ny, nx = values.shape
    lo, hi = bbox
    xs = np.linspace(lo[0], hi[0], nx)
    ys = np.linspace(lo[1], hi[1], ny)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,y,value\n")
        for j in range(ny):
            for i in range(nx):
                fh.write(f"{xs[i]!r},{ys[j]!r},{values[j, i]!r}\n")


__all__ = [
    "density_from_pressure",
    "boundary_mass_flux",
    "compatibility_residual",
    "compat_tolerance",
    "NeumannSolution",
    "solve_neumann",
    "stiffness_matrix",
    "pointwise_flux_mismatch",
    "time_derivative",
    "SliceState",
    "FluidState",
    "neumann_data",
    "solve_slice",
    "fill_time_derivatives",
    "compatible_initial_momentum",
    "sample_on_grid",
    "write_grid_binary",
    "read_grid_binary",
    "write_grid_csv",
]
