# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the spherical sampling path and the synthetic renderer.

``gather_wrap`` / ``scatter_wrap`` evaluate a fixed four-tap interpolation
plan (and its adjoint) over the rows of a 2-D array. ``cast_rays`` intersects
rays from a common origin with axis-aligned boxes.
"""

from libc.math cimport INFINITY

cimport numpy as cnp
import numpy as np

cnp.import_array()


ctypedef fused real:
    float
    double


def gather_wrap(const real[:, ::1] x, const cnp.int64_t[:, ::1] idx,
                const real[:, ::1] w, real[:, ::1] out):
    """out[n, p] = sum_q w[q, p] * x[n, idx[q, p]]"""
    cdef Py_ssize_t n, p, b, nb, blk
    cdef Py_ssize_t N = x.shape[0]
    cdef Py_ssize_t P = idx.shape[1]
    cdef cnp.int64_t i0, i1, i2, i3
    cdef real w0, w1, w2, w3
    if idx.shape[0] != 4 or w.shape[0] != 4 or w.shape[1] != P:
        raise ValueError("plan must have shape (4, P)")
    if out.shape[0] != N or out.shape[1] != P:
        raise ValueError("output has the wrong shape")
    with nogil:
        # blocks of 8 rows share each plan-entry load
        for blk in range((N + 7) // 8):
            n = blk * 8
            nb = min(N, n + 8)
            for p in range(P):
                i0 = idx[0, p]
                i1 = idx[1, p]
                i2 = idx[2, p]
                i3 = idx[3, p]
                w0 = w[0, p]
                w1 = w[1, p]
                w2 = w[2, p]
                w3 = w[3, p]
                for b in range(n, nb):
                    out[b, p] = w0 * x[b, i0] + w1 * x[b, i1] + w2 * x[b, i2] + w3 * x[b, i3]


def scatter_wrap(const real[:, ::1] g, const cnp.int64_t[:, ::1] idx,
                 const real[:, ::1] w, real[:, ::1] out):
    """Adjoint of gather_wrap; accumulates into ``out`` (caller zeroes it)."""
    cdef Py_ssize_t n, p, b, nb, blk
    cdef Py_ssize_t N = g.shape[0]
    cdef Py_ssize_t P = idx.shape[1]
    cdef cnp.int64_t i0, i1, i2, i3
    cdef real w0, w1, w2, w3, v
    if idx.shape[0] != 4 or w.shape[0] != 4 or w.shape[1] != P:
        raise ValueError("plan must have shape (4, P)")
    if out.shape[0] != N or g.shape[1] != P:
        raise ValueError("gradient has the wrong shape")
    with nogil:
        for blk in range((N + 7) // 8):
            n = blk * 8
            nb = min(N, n + 8)
            for p in range(P):
                i0 = idx[0, p]
                i1 = idx[1, p]
                i2 = idx[2, p]
                i3 = idx[3, p]
                w0 = w[0, p]
                w1 = w[1, p]
                w2 = w[2, p]
                w3 = w[3, p]
                for b in range(n, nb):
                    v = g[b, p]
                    out[b, i0] += w0 * v
                    out[b, i1] += w1 * v
                    out[b, i2] += w2 * v
                    out[b, i3] += w3 * v


def cast_rays(const double[:, ::1] dirs, double ox, double oy, double oz,
              const double[:, ::1] boxes):
    """Nearest box hit per ray.

    ``boxes`` rows are (xmin, ymin, zmin, xmax, ymax, zmax). Returns hit
    distance (inf on miss), box index (-1 on miss) and the face code
    ``2 * axis + (0 for the min face, 1 for the max face)``.
    """
    cdef Py_ssize_t R = dirs.shape[0]
    cdef Py_ssize_t B = boxes.shape[0]
    if dirs.shape[1] != 3 or (B > 0 and boxes.shape[1] != 6):
        raise ValueError("dirs must be (R, 3) and boxes (B, 6)")
    t_out = np.full(R, np.inf)
    box_out = np.full(R, -1, dtype=np.int64)
    face_out = np.full(R, -1, dtype=np.int64)
    cdef double[::1] t_v = t_out
    cdef cnp.int64_t[::1] b_v = box_out
    cdef cnp.int64_t[::1] f_v = face_out
    cdef double o[3]
    cdef double d[3]
    cdef double tnear, tfar, t1, t2, tmp, best
    cdef Py_ssize_t r, b, a, fnear, fcode
    cdef bint hit
    o[0] = ox
    o[1] = oy
    o[2] = oz
    with nogil:
        for r in range(R):
            d[0] = dirs[r, 0]
            d[1] = dirs[r, 1]
            d[2] = dirs[r, 2]
            best = INFINITY
            for b in range(B):
                tnear = -INFINITY
                tfar = INFINITY
                fnear = -1
                hit = True
                for a in range(3):
                    if d[a] == 0.0:
                        if o[a] < boxes[b, a] or o[a] > boxes[b, a + 3]:
                            hit = False
                            break
                        continue
                    t1 = (boxes[b, a] - o[a]) / d[a]
                    t2 = (boxes[b, a + 3] - o[a]) / d[a]
                    fcode = 2 * a
                    if t1 > t2:
                        tmp = t1
                        t1 = t2
                        t2 = tmp
                        fcode = 2 * a + 1
                    if t1 > tnear:
                        tnear = t1
                        fnear = fcode
                    if t2 < tfar:
                        tfar = t2
                    if tnear > tfar:
                        hit = False
                        break
                if hit and tnear > 0.0 and tnear < best:
                    best = tnear
                    t_v[r] = tnear
                    b_v[r] = b
                    f_v[r] = fnear
    return t_out, box_out, face_out
