# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the stencil kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _clip(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


def sobel(lum):
    cdef const double[:, :, ::1] x = np.ascontiguousarray(lum, dtype=np.float64)
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2]
    gx_arr = np.empty((B, H, W))
    gy_arr = np.empty((B, H, W))
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gy = gy_arr
    cdef Py_ssize_t b, i, j, im, ip, jm, jp
    cdef double tl, tc, tr, ml, mr, bl, bc, br
    with nogil:
        for b in range(B):
            for i in range(H):
                im = _clip(i - 1, H)
                ip = _clip(i + 1, H)
                for j in range(W):
                    jm = _clip(j - 1, W)
                    jp = _clip(j + 1, W)
                    tl = x[b, im, jm]; tc = x[b, im, j]; tr = x[b, im, jp]
                    ml = x[b, i, jm]; mr = x[b, i, jp]
                    bl = x[b, ip, jm]; bc = x[b, ip, j]; br = x[b, ip, jp]
                    gx[b, i, j] = (tr - tl) + 2.0 * (mr - ml) + (br - bl)
                    gy[b, i, j] = (bl - tl) + 2.0 * (bc - tc) + (br - tr)
    return gx_arr, gy_arr


def sobel_adjoint(ux_in, uy_in):
    cdef const double[:, :, ::1] ux = np.ascontiguousarray(ux_in, dtype=np.float64)
    cdef const double[:, :, ::1] uy = np.ascontiguousarray(uy_in, dtype=np.float64)
    cdef Py_ssize_t B = ux.shape[0], H = ux.shape[1], W = ux.shape[2]
    out_arr = np.zeros((B, H, W))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, i, j, im, ip, jm, jp
    cdef double a, c
    with nogil:
        for b in range(B):
            for i in range(H):
                im = _clip(i - 1, H)
                ip = _clip(i + 1, H)
                for j in range(W):
                    jm = _clip(j - 1, W)
                    jp = _clip(j + 1, W)
                    a = ux[b, i, j]
                    c = uy[b, i, j]
                    out[b, im, jm] += -a - c
                    out[b, im, j] += -2.0 * c
                    out[b, im, jp] += a - c
                    out[b, i, jm] += -2.0 * a
                    out[b, i, jp] += 2.0 * a
                    out[b, ip, jm] += -a + c
                    out[b, ip, j] += 2.0 * c
                    out[b, ip, jp] += a + c
    return out_arr


def conv3x3(x_in, w_in):
    cdef const double[:, :, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef const double[:, :, :, ::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t O = w.shape[0]
    out_arr = np.zeros((B, O, H, W))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, o, c, i, j, a, d, ii, jj
    cdef double k, acc
    with nogil:
        for b in range(B):
            for o in range(O):
                for c in range(C):
                    for a in range(3):
                        for d in range(3):
                            k = w[o, c, a, d]
                            for i in range(H):
                                ii = i + a - 1
                                if ii < 0 or ii >= H:
                                    continue
                                for j in range(W):
                                    jj = j + d - 1
                                    if jj < 0 or jj >= W:
                                        continue
                                    out[b, o, i, j] += k * x[b, c, ii, jj]
    return out_arr


def conv3x3_adjoint(u_in, w_in):
    cdef const double[:, :, :, ::1] u = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef const double[:, :, :, ::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef Py_ssize_t B = u.shape[0], O = u.shape[1], H = u.shape[2], W = u.shape[3]
    cdef Py_ssize_t C = w.shape[1]
    out_arr = np.zeros((B, C, H, W))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, o, c, i, j, a, d, ii, jj
    cdef double k
    with nogil:
        for b in range(B):
            for o in range(O):
                for c in range(C):
                    for a in range(3):
                        for d in range(3):
                            k = w[o, c, a, d]
                            for i in range(H):
                                ii = i + a - 1
                                if ii < 0 or ii >= H:
                                    continue
                                for j in range(W):
                                    jj = j + d - 1
                                    if jj < 0 or jj >= W:
                                        continue
                                    out[b, c, ii, jj] += k * u[b, o, i, j]
    return out_arr
