"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Fourier curves are passed as ``center`` (2,) and ``coeffs`` (4, K) holding
the rows ``ax, bx, ay, by`` for modes ``k = 1..K``::

    x(s) = cx + sum_k ax[k] cos(2 pi k s) + bx[k] sin(2 pi k s)
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def curve_eval(center, coeffs, s):
    """Evaluate a Fourier curve and its first two derivatives.

    Returns an array of shape (6, n): x, y, x', y', x'', y''.
    """
    s = np.ascontiguousarray(s, dtype=float).ravel()
    ax, bx, ay, by = coeffs
    k = np.arange(1, coeffs.shape[1] + 1, dtype=float)
    w = TWO_PI * k
    ang = np.outer(s, w)
    c = np.cos(ang)
    sn = np.sin(ang)
    out = np.empty((6, s.size))
    out[0] = center[0] + c @ ax + sn @ bx
    out[1] = center[1] + c @ ay + sn @ by
    out[2] = (-sn * w) @ ax + (c * w) @ bx
    out[3] = (-sn * w) @ ay + (c * w) @ by
    w2 = w * w
    out[4] = -((c * w2) @ ax + (sn * w2) @ bx)
    out[5] = -((c * w2) @ ay + (sn * w2) @ by)
    return out


def curve_project(center, coeffs, px, py, s0, maxiter=40, tol=1e-15):
    """Closest-point parameters on the curve for the points (px, py).

    Newton iteration on g(s) = (gamma(s) - p) . gamma'(s) started from s0.
    Where g' is not safely positive (points past the focal distance) the
    step falls back to a scaled gradient step.
    """
    px = np.asarray(px, dtype=float).ravel()
    py = np.asarray(py, dtype=float).ravel()
    s = np.array(s0, dtype=float).ravel().copy()
    active = np.ones(s.size, dtype=bool)
    for _ in range(maxiter):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        v = curve_eval(center, coeffs, s[idx])
        dx = v[0] - px[idx]
        dy = v[1] - py[idx]
        sp2 = v[2] * v[2] + v[3] * v[3]
        g = dx * v[2] + dy * v[3]
        gp = sp2 + dx * v[4] + dy * v[5]
        gp = np.where(gp > 0.1 * sp2, gp, sp2)
        step = np.clip(g / gp, -0.05, 0.05)
        s[idx] = s[idx] - step
        active[idx] = np.abs(step) > tol
    return np.mod(s, 1.0)


def curve_normal_inverse(center, coeffs, theta, s0, maxiter=40, tol=1e-15):
    """Parameters where the outward normal angle equals ``theta``.

    The curve must be counterclockwise and strictly convex so that the normal
    angle is strictly increasing in s.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    s = np.array(s0, dtype=float).ravel().copy()
    active = np.ones(s.size, dtype=bool)
    for _ in range(maxiter):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        v = curve_eval(center, coeffs, s[idx])
        phi = np.arctan2(-v[2], v[3])
        f = np.mod(phi - theta[idx] + np.pi, TWO_PI) - np.pi
        sp2 = v[2] * v[2] + v[3] * v[3]
        fp = (v[2] * v[5] - v[3] * v[4]) / sp2
        step = np.clip(f / fp, -0.02, 0.02)
        s[idx] = s[idx] - step
        active[idx] = np.abs(step) > tol
    return np.mod(s, 1.0)


def p1_assemble(points, tris):
    """Areas, basis gradients and local stiffness matrices of P1 triangles.

    Returns ``area`` (nt,), ``grads`` (nt, 3, 2) and ``kloc`` (nt, 3, 3).
    """
    p = points[tris]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * np.abs(det)
    # gradient of barycentric coordinate i is the rotated opposite edge / 2A
    opp = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([-opp[..., 1], opp[..., 0]], axis=-1) / det[:, None, None]
    kloc = np.einsum("tid,tjd->tij", grads, grads) * area[:, None, None]
    return area, grads, kloc
