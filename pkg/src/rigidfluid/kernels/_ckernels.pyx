# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``; identical signatures."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, atan2, fabs, fmod, M_PI

cnp.import_array()

cdef double TWO_PI = 2.0 * M_PI


cdef inline void _eval_one(const double[::1] center, const double[:, ::1] co,
                           double s, double* out) noexcept nogil:
    cdef Py_ssize_t j, K = co.shape[1]
    cdef double w, w2, c, sn
    cdef double x = center[0], y = center[1]
    cdef double dx = 0.0, dy = 0.0, ddx = 0.0, ddy = 0.0
    for j in range(K):
        w = TWO_PI * (j + 1)
        w2 = w * w
        c = cos(w * s)
        sn = sin(w * s)
        x += co[0, j] * c + co[1, j] * sn
        y += co[2, j] * c + co[3, j] * sn
        dx += w * (-co[0, j] * sn + co[1, j] * c)
        dy += w * (-co[2, j] * sn + co[3, j] * c)
        ddx -= w2 * (co[0, j] * c + co[1, j] * sn)
        ddy -= w2 * (co[2, j] * c + co[3, j] * sn)
    out[0] = x
    out[1] = y
    out[2] = dx
    out[3] = dy
    out[4] = ddx
    out[5] = ddy


cdef inline double _clip(double v, double lim) noexcept nogil:
    if v > lim:
        return lim
    if v < -lim:
        return -lim
    return v


cdef inline double _mod1(double s) noexcept nogil:
    s = fmod(s, 1.0)
    if s < 0.0:
        s += 1.0
    return s


def curve_eval(center, coeffs, s):
    cdef double[::1] c = np.ascontiguousarray(center, dtype=float)
    cdef double[:, ::1] co = np.ascontiguousarray(coeffs, dtype=float)
    cdef double[::1] sv = np.ascontiguousarray(s, dtype=float).ravel()
    cdef Py_ssize_t i, n = sv.shape[0]
    res = np.empty((6, n))
    cdef double[:, ::1] r = res
    cdef double buf[6]
    with nogil:
        for i in range(n):
            _eval_one(c, co, sv[i], buf)
            r[0, i] = buf[0]
            r[1, i] = buf[1]
            r[2, i] = buf[2]
            r[3, i] = buf[3]
            r[4, i] = buf[4]
            r[5, i] = buf[5]
    return res


def curve_project(center, coeffs, px, py, s0, int maxiter=40, double tol=1e-15):
    cdef double[::1] c = np.ascontiguousarray(center, dtype=float)
    cdef double[:, ::1] co = np.ascontiguousarray(coeffs, dtype=float)
    cdef double[::1] x = np.ascontiguousarray(px, dtype=float).ravel()
    cdef double[::1] y = np.ascontiguousarray(py, dtype=float).ravel()
    out = np.array(s0, dtype=float).ravel().copy()
    cdef double[::1] s = out
    cdef Py_ssize_t i, n = s.shape[0]
    cdef int it
    cdef double buf[6]
    cdef double ddx, ddy, sp2, g, gp, step
    with nogil:
        for i in range(n):
            for it in range(maxiter):
                _eval_one(c, co, s[i], buf)
                ddx = buf[0] - x[i]
                ddy = buf[1] - y[i]
                sp2 = buf[2] * buf[2] + buf[3] * buf[3]
                g = ddx * buf[2] + ddy * buf[3]
                gp = sp2 + ddx * buf[4] + ddy * buf[5]
                if gp <= 0.1 * sp2:
                    gp = sp2
                step = _clip(g / gp, 0.05)
                s[i] -= step
                if fabs(step) <= tol:
                    break
            s[i] = _mod1(s[i])
    return out


def curve_normal_inverse(center, coeffs, theta, s0, int maxiter=40, double tol=1e-15):
    cdef double[::1] c = np.ascontiguousarray(center, dtype=float)
    cdef double[:, ::1] co = np.ascontiguousarray(coeffs, dtype=float)
    cdef double[::1] th = np.ascontiguousarray(theta, dtype=float).ravel()
    out = np.array(s0, dtype=float).ravel().copy()
    cdef double[::1] s = out
    cdef Py_ssize_t i, n = s.shape[0]
    cdef int it
    cdef double buf[6]
    cdef double phi, f, fp, step
    with nogil:
        for i in range(n):
            for it in range(maxiter):
                _eval_one(c, co, s[i], buf)
                phi = atan2(-buf[2], buf[3])
                f = fmod(phi - th[i] + M_PI, TWO_PI)
                if f < 0.0:
                    f += TWO_PI
                f -= M_PI
                fp = (buf[2] * buf[5] - buf[3] * buf[4]) / (buf[2] * buf[2] + buf[3] * buf[3])
                step = _clip(f / fp, 0.02)
                s[i] -= step
                if fabs(step) <= tol:
                    break
            s[i] = _mod1(s[i])
    return out


def p1_assemble(points, tris):
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=float)
    cdef long[:, ::1] t = np.ascontiguousarray(tris, dtype=np.int64)
    cdef Py_ssize_t e, i, j, nt = t.shape[0]
    area_a = np.empty(nt)
    grads_a = np.empty((nt, 3, 2))
    kloc_a = np.empty((nt, 3, 3))
    cdef double[::1] area = area_a
    cdef double[:, :, ::1] grads = grads_a
    cdef double[:, :, ::1] kloc = kloc_a
    cdef double x0, y0, x1, y1, x2, y2, det, a
    with nogil:
        for e in range(nt):
            x0 = p[t[e, 0], 0]
            y0 = p[t[e, 0], 1]
            x1 = p[t[e, 1], 0]
            y1 = p[t[e, 1], 1]
            x2 = p[t[e, 2], 0]
            y2 = p[t[e, 2], 1]
            det = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
            a = 0.5 * fabs(det)
            area[e] = a
            grads[e, 0, 0] = -(y2 - y1) / det
            grads[e, 0, 1] = (x2 - x1) / det
            grads[e, 1, 0] = -(y0 - y2) / det
            grads[e, 1, 1] = (x0 - x2) / det
            grads[e, 2, 0] = -(y1 - y0) / det
            grads[e, 2, 1] = (x1 - x0) / det
            for i in range(3):
                for j in range(3):
                    kloc[e, i, j] = a * (grads[e, i, 0] * grads[e, j, 0]
                                         + grads[e, i, 1] * grads[e, j, 1])
    return area_a, grads_a, kloc_a
