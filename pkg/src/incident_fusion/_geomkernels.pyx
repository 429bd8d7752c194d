# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels (same contract as ``_geom_py``)."""
import numpy as np

cimport numpy as cnp
from libc.math cimport M_PI, cos, sin, sqrt, fabs

cnp.import_array()

cdef enum:
    NV = 64
    MAXV = 256

cdef double _SCALE = sqrt(2.0 * M_PI / (NV * sin(2.0 * M_PI / NV)))
cdef double _CC[NV]
cdef double _CS[NV]
cdef double _HC[6]
cdef double _HS[6]
cdef double _NC[6]
cdef double _NS[6]

cdef int _k
for _k in range(NV):
    _CC[_k] = cos(2.0 * M_PI * _k / NV)
    _CS[_k] = sin(2.0 * M_PI * _k / NV)
for _k in range(6):
    _HC[_k] = cos((30.0 + 60.0 * _k) * M_PI / 180.0)
    _HS[_k] = sin((30.0 + 60.0 * _k) * M_PI / 180.0)
    _NC[_k] = cos(60.0 * _k * M_PI / 180.0)
    _NS[_k] = sin(60.0 * _k * M_PI / 180.0)


cdef double _area(double* xs, double* ys, int n) nogil:
    cdef double acc = 0.0
    cdef int i, j
    if n < 3:
        return 0.0
    j = n - 1
    for i in range(n):
        acc += xs[j] * ys[i] - xs[i] * ys[j]
        j = i
    return 0.5 * fabs(acc)


cdef int _clip(double* sx_in, double* sy_in, int n,
               double* cx, double* cy, int m,
               double* bufx, double* bufy) nogil:
    """Clip in place; result lands in sx_in/sy_in, returns vertex count."""
    cdef int i, j, nout
    cdef double ax, ay, ex, ey, px, py, qx, qy, dx, dy, t
    cdef bint p_in, q_in
    for i in range(m):
        if n == 0:
            return 0
        ax = cx[i]
        ay = cy[i]
        ex = cx[(i + 1) % m] - ax
        ey = cy[(i + 1) % m] - ay
        nout = 0
        qx = sx_in[n - 1]
        qy = sy_in[n - 1]
        q_in = ex * (qy - ay) - ey * (qx - ax) >= 0.0
        for j in range(n):
            px = sx_in[j]
            py = sy_in[j]
            p_in = ex * (py - ay) - ey * (px - ax) >= 0.0
            if p_in != q_in:
                dx = px - qx
                dy = py - qy
                t = (ey * (qx - ax) - ex * (qy - ay)) / (ex * dy - ey * dx)
                bufx[nout] = qx + t * dx
                bufy[nout] = qy + t * dy
                nout += 1
            if p_in:
                bufx[nout] = px
                bufy[nout] = py
                nout += 1
            qx = px
            qy = py
            q_in = p_in
        for j in range(nout):
            sx_in[j] = bufx[j]
            sy_in[j] = bufy[j]
        n = nout
    return n


def clip_area(subject, clip):
    """Area of ``subject`` clipped against the convex CCW polygon ``clip``."""
    cdef double[:, ::1] s = np.ascontiguousarray(subject, dtype=np.float64).reshape(-1, 2)
    cdef double[:, ::1] c = np.ascontiguousarray(clip, dtype=np.float64).reshape(-1, 2)
    cdef int n = s.shape[0]
    cdef int m = c.shape[0]
    cdef int cap = n + 2 * m + 8
    cdef double[::1] sx = np.empty(cap)
    cdef double[::1] sy = np.empty(cap)
    cdef double[::1] bx = np.empty(cap)
    cdef double[::1] by = np.empty(cap)
    cdef double[::1] kx = np.empty(max(m, 1))
    cdef double[::1] ky = np.empty(max(m, 1))
    cdef int i
    if n == 0 or m == 0:
        return 0.0
    for i in range(n):
        sx[i] = s[i, 0]
        sy[i] = s[i, 1]
    for i in range(m):
        kx[i] = c[i, 0]
        ky[i] = c[i, 1]
    n = _clip(&sx[0], &sy[0], n, &kx[0], &ky[0], m, &bx[0], &by[0])
    return _area(&sx[0], &sy[0], n)


def polygon_area(poly):
    cdef double[:, ::1] p = np.ascontiguousarray(poly, dtype=np.float64).reshape(-1, 2)
    cdef int n = p.shape[0]
    cdef double[::1] xs = np.empty(max(n, 1))
    cdef double[::1] ys = np.empty(max(n, 1))
    cdef int i
    for i in range(n):
        xs[i] = p[i, 0]
        ys[i] = p[i, 1]
    return _area(&xs[0], &ys[0], n)


def circle_hex_fractions(double cx, double cy, double radius, centers, double edge):
    """Fraction of a disc's area falling in each pointy-top hexagon."""
    cdef double[:, ::1] ctr = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 2)
    cdef Py_ssize_t k, nk = ctr.shape[0]
    out_arr = np.zeros(nk)
    cdef double[::1] out = out_arr
    cdef double px[MAXV]
    cdef double py[MAXV]
    cdef double bx[MAXV]
    cdef double by[MAXV]
    cdef double hx[6]
    cdef double hy[6]
    cdef double rp = radius * _SCALE
    cdef double inradius = 0.5 * sqrt(3.0) * edge
    cdef double circle_area, dx, dy, reach, proj, frac, hxc, hyc
    cdef int i, n
    for i in range(NV):
        px[i] = cx + rp * _CC[i]
        py[i] = cy + rp * _CS[i]
    circle_area = _area(px, py, NV)
    with nogil:
        for k in range(nk):
            hxc = ctr[k, 0]
            hyc = ctr[k, 1]
            dx = cx - hxc
            dy = cy - hyc
            if dx * dx + dy * dy > (rp + edge) * (rp + edge):
                continue
            reach = dx * _NC[0] + dy * _NS[0]
            for i in range(1, 6):
                proj = dx * _NC[i] + dy * _NS[i]
                if proj > reach:
                    reach = proj
            if inradius - reach >= rp:
                out[k] = 1.0
                continue
            for i in range(6):
                hx[i] = hxc + edge * _HC[i]
                hy[i] = hyc + edge * _HS[i]
            for i in range(NV):
                px[i] = cx + rp * _CC[i]
                py[i] = cy + rp * _CS[i]
            n = _clip(px, py, NV, hx, hy, 6, bx, by)
            frac = _area(px, py, n) / circle_area
            out[k] = frac if frac < 1.0 else 1.0
    return out_arr
