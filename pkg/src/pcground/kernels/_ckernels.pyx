# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pykernels``; same signatures, same results."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cos, sin, fabs

cnp.import_array()


def segment_max(double[:, ::1] values, long long[::1] segment, Py_ssize_t n_segments):
    cdef Py_ssize_t p = values.shape[0], c = values.shape[1], i, j, s
    out_np = np.zeros((n_segments, c))
    arg_np = np.full((n_segments, c), -1, dtype=np.int64)
    cdef double[:, ::1] out = out_np
    cdef long long[:, ::1] arg = arg_np
    for i in range(p):
        s = segment[i]
        if s < 0 or s >= n_segments:
            raise IndexError("segment id out of range")
        for j in range(c):
            if arg[s, j] < 0 or values[i, j] > out[s, j]:
                out[s, j] = values[i, j]
                arg[s, j] = i
    return out_np, arg_np


def roll_schedule(Py_ssize_t h, Py_ssize_t w, Py_ssize_t step):
    rolls = []
    cdef Py_ssize_t m = 1
    while m * step < h:
        rolls.append((0, m * step))
        m += 1
    m = 1
    while m * step < w:
        rolls.append((1, m * step))
        m += 1
    return rolls


def axial_max_relative(x_in, threshold_in, Py_ssize_t step):
    cdef double[:, :, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef double[::1] tau = np.ascontiguousarray(threshold_in, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    rolls = roll_schedule(h, w, step)
    cdef Py_ssize_t nr = len(rolls)
    final_np = np.zeros((n, c, h, w))
    arg_np = np.full((n, c, h, w), -1, dtype=np.int32)
    masks_np = np.zeros((n, nr, h, w), dtype=np.uint8)
    cdef double[:, :, :, ::1] final = final_np
    cdef int[:, :, :, ::1] arg = arg_np
    cdef unsigned char[:, :, :, ::1] masks = masks_np
    cdef Py_ssize_t b, r, k, i, j, si, sj, axis, shift
    cdef double acc, d, dist
    for r in range(nr):
        axis, shift = rolls[r]
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    if axis == 0:
                        si = (i - shift + h) % h
                        sj = j
                    else:
                        si = i
                        sj = (j - shift + w) % w
                    acc = 0.0
                    for k in range(c):
                        d = x[b, k, si, sj] - x[b, k, i, j]
                        acc += d * d
                    dist = sqrt(acc)
                    if dist < tau[b]:
                        masks[b, r, i, j] = 1
                        for k in range(c):
                            d = x[b, k, si, sj] - x[b, k, i, j]
                            if d > final[b, k, i, j]:
                                final[b, k, i, j] = d
                                arg[b, k, i, j] = <int>r
    return final_np, arg_np, masks_np


cdef int _footprint(double x, double y, double l, double w, double yaw, double* px, double* py):
    cdef double c = cos(yaw), s = sin(yaw), hl = 0.5 * l, hw = 0.5 * w
    cdef double dx[4]
    cdef double dy[4]
    dx[0] = hl; dy[0] = hw
    dx[1] = -hl; dy[1] = hw
    dx[2] = -hl; dy[2] = -hw
    dx[3] = hl; dy[3] = -hw
    cdef int i
    for i in range(4):
        px[i] = x + c * dx[i] - s * dy[i]
        py[i] = y + s * dx[i] + c * dy[i]
    return 0


cdef double _rect_iou(double[:] a, double[:] b):
    cdef double area_a = a[2] * a[3], area_b = b[2] * b[3]
    if area_a <= 0 or area_b <= 0:
        return 0.0
    cdef double px[16]
    cdef double py[16]
    cdef double qx[16]
    cdef double qy[16]
    cdef double fx[4]
    cdef double fy[4]
    _footprint(a[0], a[1], a[2], a[3], a[4], px, py)
    _footprint(b[0], b[1], b[2], b[3], b[4], fx, fy)
    cdef int n = 4, m, e, i, nxt
    cdef double ax, ay, ex, ey, sp, sq, t
    for e in range(4):
        if n == 0:
            break
        ax = fx[e]; ay = fy[e]
        ex = fx[(e + 1) % 4] - ax
        ey = fy[(e + 1) % 4] - ay
        m = 0
        for i in range(n):
            nxt = (i + 1) % n
            sp = ex * (py[i] - ay) - ey * (px[i] - ax)
            sq = ex * (py[nxt] - ay) - ey * (px[nxt] - ax)
            if sp >= 0:
                qx[m] = px[i]; qy[m] = py[i]; m += 1
            if (sp >= 0) != (sq >= 0):
                t = sp / (sp - sq)
                qx[m] = px[i] + t * (px[nxt] - px[i])
                qy[m] = py[i] + t * (py[nxt] - py[i])
                m += 1
        for i in range(m):
            px[i] = qx[i]; py[i] = qy[i]
        n = m
    cdef double s2 = 0.0
    if n >= 3:
        for i in range(n):
            nxt = (i + 1) % n
            s2 += px[i] * py[nxt] - px[nxt] * py[i]
    cdef double inter = 0.5 * fabs(s2)
    cdef double iou = inter / (area_a + area_b - inter)
    if iou < 0.0:
        return 0.0
    if iou > 1.0:
        return 1.0
    return iou


def rect_iou(a, b):
    cdef double[:] av = np.asarray(a, dtype=np.float64)
    cdef double[:] bv = np.asarray(b, dtype=np.float64)
    return _rect_iou(av, bv)


def rect_iou_matrix(A_in, B_in):
    cdef double[:, :] A = np.asarray(A_in, dtype=np.float64).reshape(-1, 5)
    cdef double[:, :] B = np.asarray(B_in, dtype=np.float64).reshape(-1, 5)
    out_np = np.zeros((A.shape[0], B.shape[0]))
    cdef double[:, ::1] out = out_np
    cdef Py_ssize_t i, j
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            out[i, j] = _rect_iou(A[i], B[j])
    return out_np
