"""Boundary-conforming triangulations of the fluid domain and their quadratures.

The mesh is a P1 triangulation whose boundary nodes lie exactly on the true
curves.  Integrals over the true curved domain are recovered by adding (or
removing) the thin slivers between each boundary chord and its arc, so that
``MeshQuadrature`` integrates over the exact fluid domain rather than over the
polygon.
"""

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from . import kernels
from .errors import GeometryError
from .geometry import (
    CurveCavity,
    RectangleCavity,
    body_clearance,
    body_gap,
    cross2,
    gauss_legendre,
)

# degree-4 six-point rule on the reference triangle (barycentric, weights sum to 1)
_A, _B = 0.445948490915965, 0.091576213509771
_WA, _WB = 0.223381589678011, 0.109951743655322
TRI_RULE = (
    np.array(
        [
            [_A, _A, 1 - 2 * _A],
            [_A, 1 - 2 * _A, _A],
            [1 - 2 * _A, _A, _A],
            [_B, _B, 1 - 2 * _B],
            [_B, 1 - 2 * _B, _B],
            [1 - 2 * _B, _B, _B],
        ]
    ),
    np.array([_WA, _WA, _WA, _WB, _WB, _WB]),
)


class BoundaryLoop:
    """Closed chain of boundary nodes with the curve they sample.

    ``params`` are curve parameters of the nodes (None for straight walls).
    ``tag`` is 0 for the cavity wall and ``i + 1`` for body ``i``.
    """

    def __init__(self, points, tag, curve=None, params=None, fluid_side=1):
        self.points = np.asarray(points, dtype=float)
        self.tag = tag
        self.curve = curve
        self.params = None if params is None else np.asarray(params, dtype=float)
        # +1: fluid lies inside the curve (cavity); -1: outside (body)
        self.fluid_side = fluid_side


def _equal_arclength_params(curve, n):
    m = max(4096, 16 * n)
    s = (np.arange(m) + 0.5) / m
    ds = curve.speed(s) / m
    cum = np.concatenate([[0.0], np.cumsum(ds)])
    grid = np.linspace(0.0, 1.0, m + 1)
    targets = np.arange(n) * cum[-1] / n
    return np.interp(targets, cum, grid)


def _curve_loop(curve, h, tag, fluid_side, min_nodes=12):
    n = max(min_nodes, int(np.ceil(curve.perimeter / h)))
    s = _equal_arclength_params(curve, n)
    return BoundaryLoop(curve.point(s), tag, curve, s, fluid_side)


def _rectangle_loop(cav, h):
    lo, hi = cav.lo, cav.hi
    corners = [lo, (hi[0], lo[1]), hi, (lo[0], hi[1])]
    pts = []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / h)))
        t = np.arange(n) / n
        pts.append(a + t[:, None] * (b - a))
    return BoundaryLoop(np.concatenate(pts), 0, None, None, 1)


def _lattice(lo, hi, h):
    dy = h * np.sqrt(3.0) / 2.0
    ys = np.arange(lo[1], hi[1] + dy, dy)
    xs = np.arange(lo[0] - h, hi[0] + h, h)
    X, Y = np.meshgrid(xs, ys)
    X = X + 0.5 * h * (np.arange(ys.size)[:, None] % 2)
    return np.stack([X.ravel(), Y.ravel()], axis=-1)


def _inside_convex_polygon(poly, pts, chunk=4096):
    out = np.empty(len(pts), dtype=bool)
    e = np.roll(poly, -1, axis=0) - poly
    for i in range(0, len(pts), chunk):
        p = pts[i:i + chunk]
        c = cross2(e[None, :, :], p[:, None, :] - poly[None, :, :])
        out[i:i + chunk] = np.all(c > 0.0, axis=1)
    return out


def check_placement(cavity, bodies, clearance=0.0):
    """Raise GeometryError unless bodies are disjoint and inside the cavity.

    ``clearance`` is the minimum distance required between bodies and from
    every body to the wall.
    """
    for i, b in enumerate(bodies):
        d = body_clearance(cavity, b)
        if d <= clearance:
            raise GeometryError(
                f"body {i} is within {d:.3g} of the cavity wall (clearance {clearance:.3g} required)"
            )
    for i in range(len(bodies)):
        for j in range(i + 1, len(bodies)):
            g = body_gap(bodies[i], bodies[j])
            if g <= clearance:
                raise GeometryError(
                    f"bodies {i} and {j} are {g:.3g} apart (clearance {clearance:.3g} required)"
                )


class FluidDomainMesh:
    """P1 triangulation of the fluid domain at one time instant.

    Attributes
    ----------
    points : (nv, 2) array
    tris : (nt, 3) int array
    bedges : (nb, 2) int array
        Boundary edges as node pairs, oriented along their loop.
    btag : (nb,) int array
        0 for the cavity wall, ``i + 1`` for body ``i``.
    btri : (nb,) int array
        Triangle adjacent to each boundary edge.
    """

    def __init__(self, cavity, bodies, h, t=0.0, interior_gap=0.55, refine_band=0.0, refine_split=4):
        if getattr(cavity, "dim", 2) != 2:
            raise GeometryError("fluid meshes are two-dimensional only")
        check_placement(cavity, bodies, clearance=2.0 * h)
        self.cavity = cavity
        self.bodies = list(bodies)
        self.h = float(h)
        self.t = float(t)

        if isinstance(cavity, RectangleCavity):
            loops = [_rectangle_loop(cavity, h)]
        elif isinstance(cavity, CurveCavity):
            loops = [_curve_loop(cavity.curve, h, 0, 1)]
        else:
            raise GeometryError(f"unsupported cavity {type(cavity).__name__}")
        for i, b in enumerate(self.bodies):
            loops.append(_curve_loop(b, h, i + 1, -1))
        self.loops = loops

        lo, hi = cavity.bbox()
        lat = _lattice(lo, hi, h)
        keep = cavity.inner_distance(lat) > interior_gap * h
        for b in self.bodies:
            keep &= b.signed_distance(lat) > interior_gap * h
        interior = lat[keep]

        bpts = np.concatenate([lp.points for lp in loops])
        self.points = np.concatenate([bpts, interior])
        self.n_boundary_nodes = len(bpts)
        offsets = np.cumsum([0] + [len(lp.points) for lp in loops])
        self._loop_offsets = offsets

        dt = Delaunay(self.points)
        simp = dt.simplices
        cen = self.points[simp].mean(axis=1)
        ok = np.ones(len(simp), dtype=bool)
        for k, lp in enumerate(loops):
            poly = lp.points
            if lp.fluid_side == 1 and lp.curve is None:
                ok &= cavity.inner_distance(cen) > 0.0
            elif lp.fluid_side == 1:
                ok &= _inside_convex_polygon(poly, cen)
            else:
                ok &= ~_inside_convex_polygon(poly, cen)
        tris = simp[ok]
        # orient counterclockwise
        p = self.points[tris]
        det = cross2(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        flip = det < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]
        self.tris = np.ascontiguousarray(tris)
        self._delaunay = dt
        self._simplex_map = np.full(len(simp), -1, dtype=np.int64)
        self._simplex_map[np.nonzero(ok)[0]] = np.arange(len(tris))

        self._build_boundary(loops, offsets)
        self.area_tri, self.grads, self.kloc = kernels.p1_assemble(self.points, self.tris)
        if self.area_tri.min() <= 1e-14 * h * h:
            raise GeometryError("degenerate triangle in fluid mesh")
        self._tree = None
        self._node_tri = None
        refine = None
        if refine_band > 0 and self.bodies:
            cen = self.points[self.tris].mean(axis=1)
            d = np.min([b.signed_distance(cen) for b in self.bodies], axis=0)
            refine = d < refine_band + h
        self.quadrature = MeshQuadrature(self, refine=refine, split=refine_split)
        self.boundary_quadrature = BoundaryArcQuadrature(self)

    # ------------------------------------------------------------------
    def _build_boundary(self, loops, offsets):
        edges, tags, sa, sb, loop_id = [], [], [], [], []
        for k, lp in enumerate(loops):
            n = len(lp.points)
            idx = offsets[k] + np.arange(n)
            a, b = idx, np.roll(idx, -1)
            if lp.fluid_side == -1:
                # traverse bodies clockwise so the fluid is on the left
                a, b = b, a
            edges.append(np.stack([a, b], axis=-1))
            tags.append(np.full(n, lp.tag))
            loop_id.append(np.full(n, k))
            if lp.params is not None:
                pa, pb = lp.params, np.roll(lp.params, -1)
                pb = np.where(pb <= pa, pb + 1.0, pb)
                if lp.fluid_side == -1:
                    pa, pb = pb, pa
                sa.append(pa)
                sb.append(pb)
            else:
                sa.append(np.full(n, np.nan))
                sb.append(np.full(n, np.nan))
        self.bedges = np.concatenate(edges)
        self.btag = np.concatenate(tags)
        self.bloop = np.concatenate(loop_id)
        self.bs = np.stack([np.concatenate(sa), np.concatenate(sb)], axis=-1)

        # every boundary chord must be a mesh edge with exactly one triangle
        t = self.tris
        all_e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        tri_of = np.concatenate([np.arange(len(t))] * 3)
        key = np.sort(all_e, axis=1)
        uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        bkey = np.sort(self.bedges, axis=1)
        lookup = {tuple(e): i for i, e in enumerate(uniq)}
        owner = np.empty(len(uniq), dtype=np.int64)
        owner[inv[::-1]] = tri_of[::-1]
        btri = np.empty(len(bkey), dtype=np.int64)
        for i, e in enumerate(map(tuple, bkey)):
            j = lookup.get(e)
            if j is None or counts[j] != 1:
                raise GeometryError("triangulation is not boundary-conforming; refine h")
            btri[i] = owner[j]
        if np.count_nonzero(counts == 1) != len(bkey):
            raise GeometryError("triangulation has spurious boundary edges; refine h")
        self.btri = btri

    # ------------------------------------------------------------------
    @property
    def n_nodes(self):
        return len(self.points)

    @property
    def polygon_area(self):
        return float(self.area_tri.sum())

    @property
    def area(self):
        """Area of the exact (curved) fluid domain."""
        return float(self.quadrature.weights.sum())

    def node_tags(self):
        """Per-node boundary tag, -1 for interior nodes."""
        tags = np.full(self.n_nodes, -1)
        tags[self.bedges[:, 0]] = self.btag
        return tags

    def barycentric(self, tri, pts):
        """Barycentric coordinates of ``pts`` in triangles ``tri`` (may be outside)."""
        p = self.points[self.tris[tri]]
        v0 = p[:, 0]
        e1 = p[:, 1] - v0
        e2 = p[:, 2] - v0
        d = pts - v0
        det = cross2(e1, e2)
        l1 = cross2(d, e2) / det
        l2 = cross2(e1, d) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)

    def locate(self, pts):
        """Containing triangle and barycentric coordinates for each point.

        Points outside the mesh are assigned a triangle next to their nearest
        node; their barycentric coordinates then extrapolate linearly.
        Returns ``(tri, bary, inside)``.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        simp = self._delaunay.find_simplex(pts)
        tri = np.where(simp >= 0, self._simplex_map[np.maximum(simp, 0)], -1)
        inside = tri >= 0
        if not inside.all():
            if self._tree is None:
                self._tree = cKDTree(self.points)
                nt = np.full(self.n_nodes, -1, dtype=np.int64)
                nt[self.tris.ravel()] = np.repeat(np.arange(len(self.tris)), 3)
                self._node_tri = nt
            out = ~inside
            _, near = self._tree.query(pts[out])
            tri[out] = self._node_tri[near]
        bary = self.barycentric(tri, pts)
        return tri, bary, inside

    def interpolate(self, nodal, pts):
        """P1 interpolation (linear extrapolation outside the mesh)."""
        tri, bary, inside = self.locate(pts)
        return np.sum(nodal[self.tris[tri]] * bary, axis=1), inside

    def sample_lattice(self, order):
        """Barycentric lattice of the given order in every triangle.

        Returns points, owning triangle and barycentric coordinates; vertices
        and edge points are included (shared points are repeated).
        """
        ij = [(i, j) for i in range(order + 1) for j in range(order + 1 - i)]
        lam = np.array([(i / order, j / order, 1 - (i + j) / order) for i, j in ij])
        nt = len(self.tris)
        p = self.points[self.tris]
        pts = np.einsum("lk,tkd->tld", lam, p).reshape(-1, 2)
        tri = np.repeat(np.arange(nt), len(lam))
        bary = np.tile(lam, (nt, 1))
        return pts, tri, bary


def subdivided_rule(n):
    """Degree-4 rule applied on the n*n congruent sub-triangles of the reference triangle."""
    lam0, w0 = TRI_RULE
    verts = []
    for i in range(n):
        for j in range(n - i):
            a = np.array([i, j]) / n
            verts.append((a, a + [1 / n, 0], a + [0, 1 / n]))
            if j < n - i - 1:
                verts.append((a + [1 / n, 0], a + [1 / n, 1 / n], a + [0, 1 / n]))
    lam, w = [], []
    for v in verts:
        xy = lam0[:, :1] * v[0] + lam0[:, 1:2] * v[1] + lam0[:, 2:] * v[2]
        lam.append(np.column_stack([xy[:, 0], xy[:, 1], 1 - xy[:, 0] - xy[:, 1]]))
        w.append(w0 / (n * n))
    return np.concatenate(lam), np.concatenate(w)


class MeshQuadrature:
    """Point quadrature over the exact fluid domain.

    Triangle interiors use a degree-4 rule; curved-boundary slivers are added
    (cavity) or subtracted (bodies) with a tensor Gauss rule mapped between
    chord and arc.  ``tri``/``bary`` tie every point to a triangle so that
    P1 basis functions can be evaluated (extrapolated on slivers).
    """

    def __init__(self, mesh, sliver_order=(6, 3), refine=None, split=4):
        nt = len(mesh.tris)
        if refine is None:
            refine = np.zeros(nt, dtype=bool)
        pts, wts, tri, bary = [], [], [], []
        for sel, (lam, w) in ((~refine, TRI_RULE), (refine, subdivided_rule(split))):
            idx = np.nonzero(sel)[0]
            if idx.size == 0:
                continue
            p = mesh.points[mesh.tris[idx]]
            pts.append(np.einsum("lk,tkd->tld", lam, p).reshape(-1, 2))
            wts.append((mesh.area_tri[idx, None] * w[None, :]).ravel())
            tri.append(np.repeat(idx, len(w)))
            bary.append(np.tile(lam, (len(idx), 1)))

        xu, wu = gauss_legendre(sliver_order[0])
        xl, wl = gauss_legendre(sliver_order[1])
        U, L = np.meshgrid(xu, xl, indexing="ij")
        U, L = U.ravel(), L.ravel()
        WUL = np.outer(wu, wl).ravel()
        for k, lp in enumerate(mesh.loops):
            if lp.curve is None:
                continue
            sel = np.nonzero(mesh.bloop == k)[0]
            ea = mesh.points[mesh.bedges[sel, 0]]
            eb = mesh.points[mesh.bedges[sel, 1]]
            sa, sb = mesh.bs[sel, 0], mesh.bs[sel, 1]
            s = sa[:, None] + (sb - sa)[:, None] * U[None, :]
            v = lp.curve.evaluate(s.ravel())
            g = np.stack([v[0], v[1]], axis=-1).reshape(len(sel), -1, 2)
            gp = np.stack([v[2], v[3]], axis=-1).reshape(len(sel), -1, 2)
            gp = gp * (sb - sa)[:, None, None]
            chord = ea[:, None, :] + U[None, :, None] * (eb - ea)[:, None, :]
            de = (eb - ea)[:, None, :]
            x = chord + L[None, :, None] * (g - chord)
            dxu = de + L[None, :, None] * (gp - de)
            dxl = g - chord
            jac = np.abs(cross2(dxu, dxl))
            sign = 1.0 if lp.fluid_side == 1 else -1.0
            ww = sign * jac * WUL[None, :]
            pts.append(x.reshape(-1, 2))
            wts.append(ww.ravel())
            t_s = np.repeat(mesh.btri[sel], len(U))
            tri.append(t_s)
            bary.append(mesh.barycentric(t_s, x.reshape(-1, 2)))
        self.points = np.concatenate(pts)
        self.weights = np.concatenate(wts)
        self.tri = np.concatenate(tri)
        self.bary = np.concatenate(bary)
        self.refined = int(np.count_nonzero(refine))
        self._mesh = mesh

    def integrate(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            return float(self.weights @ values)
        return self.weights @ values

    def p1_values(self, nodal):
        """Values of a P1 nodal field at the quadrature points."""
        return np.sum(nodal[self._mesh.tris[self.tri]] * self.bary, axis=1)

    def load_vector(self, values):
        """Entries int f phi_i over the exact domain."""
        m = self._mesh
        b = np.zeros(m.n_nodes)
        np.add.at(b, m.tris[self.tri].ravel(), ((self.weights * values)[:, None] * self.bary).ravel())
        return b


class BoundaryArcQuadrature:
    """Gauss points on the true boundary arcs, with fluid-outward normals.

    Each point carries the two end nodes of its edge and the hat-function
    values there, so that boundary loads ``int g phi_i dS`` can be assembled.
    """

    def __init__(self, mesh, order=8):
        xu, wu = gauss_legendre(order)
        pts, wts, nrm, nodes, phi, tag = [], [], [], [], [], []
        for k, lp in enumerate(mesh.loops):
            sel = np.nonzero(mesh.bloop == k)[0]
            ea = mesh.points[mesh.bedges[sel, 0]]
            eb = mesh.points[mesh.bedges[sel, 1]]
            if lp.curve is None:
                d = eb - ea
                ln = np.linalg.norm(d, axis=1)
                x = ea[:, None, :] + xu[None, :, None] * d[:, None, :]
                # fluid on the left of the traversal: outward normal is to the right
                nn = np.stack([d[:, 1], -d[:, 0]], axis=-1) / ln[:, None]
                n_out = np.repeat(nn[:, None, :], order, axis=1)
                w = ln[:, None] * wu[None, :]
            else:
                sa, sb = mesh.bs[sel, 0], mesh.bs[sel, 1]
                s = sa[:, None] + (sb - sa)[:, None] * xu[None, :]
                v = lp.curve.evaluate(s.ravel())
                x = np.stack([v[0], v[1]], axis=-1).reshape(len(sel), order, 2)
                sp = np.hypot(v[2], v[3]).reshape(len(sel), order)
                n_curve = (np.stack([v[3], -v[2]], axis=-1) / np.hypot(v[2], v[3])[:, None])
                n_out = lp.fluid_side * n_curve.reshape(len(sel), order, 2)
                w = np.abs(sb - sa)[:, None] * wu[None, :] * sp
            pts.append(x.reshape(-1, 2))
            wts.append(w.ravel())
            nrm.append(n_out.reshape(-1, 2))
            nodes.append(np.repeat(mesh.bedges[sel], order, axis=0))
            phi.append(np.tile(np.stack([1 - xu, xu], axis=-1), (len(sel), 1)))
            tag.append(np.repeat(mesh.btag[sel], order))
        self.points = np.concatenate(pts)
        self.weights = np.concatenate(wts)
        self.normals = np.concatenate(nrm)
        self.nodes = np.concatenate(nodes)
        self.phi = np.concatenate(phi)
        self.tag = np.concatenate(tag)
        self._mesh = mesh

    def integrate(self, values, tag=None):
        values = np.asarray(values, dtype=float)
        w = self.weights if tag is None else np.where(self.tag == tag, self.weights, 0.0)
        return w @ values

    def load_vector(self, values):
        b = np.zeros(self._mesh.n_nodes)
        np.add.at(b, self.nodes.ravel(), ((self.weights * values)[:, None] * self.phi).ravel())
        return b


def build_fluid_mesh(cavity, bodies, h, t=0.0, refine_band=0.0, refine_split=4):
    """Triangulate the fluid domain ``cavity`` minus ``bodies`` at resolution ``h``.

    Triangles within ``refine_band`` of a body get a subdivided quadrature
    rule (``refine_split**2`` sub-triangles) for sources concentrated there.
    """
    return FluidDomainMesh(cavity, bodies, h, t, refine_band=refine_band, refine_split=refine_split)
