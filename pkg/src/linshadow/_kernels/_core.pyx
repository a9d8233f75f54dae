# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 sweep kernels.  Semantics defined by `_fallback.py`."""

import numpy as np


cdef inline void _mm(const double[:, :, ::1] a, Py_ssize_t ia,
                     const double[:, ::1] b, double[:, ::1] out,
                     Py_ssize_t d, bint neg) noexcept nogil:
    # out = +/- a[ia] @ b
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += a[ia, i, k] * b[k, j]
            out[i, j] = -acc if neg else acc


cdef inline void _mm_right(const double[:, ::1] b, const double[:, :, ::1] a,
                           Py_ssize_t ia, double[:, ::1] out,
                           Py_ssize_t d, bint neg) noexcept nogil:
    # out = +/- b @ a[ia]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += b[i, k] * a[ia, k, j]
            out[i, j] = -acc if neg else acc


cdef inline void _blend(const double[:, ::1] x, const double[:, ::1] k,
                        double c, double[:, ::1] out, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(d):
        for j in range(d):
            out[i, j] = x[i, j] + c * k[i, j]


def rk4_matrix(As, double h, X0, bint adjoint=False, projs=None, bint record=False):
    As = np.ascontiguousarray(As, dtype=np.float64)
    cdef const double[:, :, ::1] a = As
    cdef Py_ssize_t n = (a.shape[0] - 1) // 2
    cdef Py_ssize_t d = a.shape[1]
    out_np = np.empty((n + 1 if record else 1, d, d))
    cdef double[:, :, ::1] out = out_np
    cdef bint use_proj = projs is not None
    cdef const double[:, :, ::1] pr = (
        np.ascontiguousarray(projs, dtype=np.float64) if use_proj
        else np.empty((1, d, d))
    )
    work = np.empty((6, d, d))
    cdef double[:, ::1] X = np.array(X0, dtype=np.float64, order="C")
    cdef double[:, ::1] k1 = work[0]
    cdef double[:, ::1] k2 = work[1]
    cdef double[:, ::1] k3 = work[2]
    cdef double[:, ::1] k4 = work[3]
    cdef double[:, ::1] tmp = work[4]
    cdef double[:, ::1] tmp2 = work[5]
    cdef double half = 0.5 * h, sixth = h / 6.0
    cdef Py_ssize_t i, r, c
    with nogil:
        if record:
            for r in range(d):
                for c in range(d):
                    out[0, r, c] = X[r, c]
        for i in range(n):
            if adjoint:
                _mm_right(X, a, 2 * i, k1, d, True)
                _blend(X, k1, half, tmp, d)
                _mm_right(tmp, a, 2 * i + 1, k2, d, True)
                _blend(X, k2, half, tmp, d)
                _mm_right(tmp, a, 2 * i + 1, k3, d, True)
                _blend(X, k3, h, tmp, d)
                _mm_right(tmp, a, 2 * i + 2, k4, d, True)
            else:
                _mm(a, 2 * i, X, k1, d, False)
                _blend(X, k1, half, tmp, d)
                _mm(a, 2 * i + 1, tmp, k2, d, False)
                _blend(X, k2, half, tmp, d)
                _mm(a, 2 * i + 1, tmp, k3, d, False)
                _blend(X, k3, h, tmp, d)
                _mm(a, 2 * i + 2, tmp, k4, d, False)
            for r in range(d):
                for c in range(d):
                    X[r, c] = X[r, c] + sixth * (
                        k1[r, c] + 2.0 * (k2[r, c] + k3[r, c]) + k4[r, c]
                    )
            if use_proj:
                if adjoint:
                    _mm_right(X, pr, i, tmp2, d, False)
                else:
                    _mm(pr, i, X, tmp2, d, False)
                for r in range(d):
                    for c in range(d):
                        X[r, c] = tmp2[r, c]
            if record:
                for r in range(d):
                    for c in range(d):
                        out[i + 1, r, c] = X[r, c]
        if not record:
            for r in range(d):
                for c in range(d):
                    out[0, r, c] = X[r, c]
    return out_np


cdef inline void _comm(const double[:, :, ::1] a, Py_ssize_t ia,
                       const double[:, ::1] b, double[:, ::1] out,
                       Py_ssize_t d) noexcept nogil:
    # out = a[ia] @ b - b @ a[ia]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += a[ia, i, k] * b[k, j] - b[i, k] * a[ia, k, j]
            out[i, j] = acc


def rk4_commutator(As, double h, P0, bint record=False):
    As = np.ascontiguousarray(As, dtype=np.float64)
    cdef const double[:, :, ::1] a = As
    cdef Py_ssize_t n = (a.shape[0] - 1) // 2
    cdef Py_ssize_t d = a.shape[1]
    out_np = np.empty((n + 1 if record else 1, d, d))
    cdef double[:, :, ::1] out = out_np
    work = np.empty((5, d, d))
    cdef double[:, ::1] P = np.array(P0, dtype=np.float64, order="C")
    cdef double[:, ::1] k1 = work[0]
    cdef double[:, ::1] k2 = work[1]
    cdef double[:, ::1] k3 = work[2]
    cdef double[:, ::1] k4 = work[3]
    cdef double[:, ::1] tmp = work[4]
    cdef double half = 0.5 * h, sixth = h / 6.0
    cdef Py_ssize_t i, r, c
    with nogil:
        if record:
            for r in range(d):
                for c in range(d):
                    out[0, r, c] = P[r, c]
        for i in range(n):
            _comm(a, 2 * i, P, k1, d)
            _blend(P, k1, half, tmp, d)
            _comm(a, 2 * i + 1, tmp, k2, d)
            _blend(P, k2, half, tmp, d)
            _comm(a, 2 * i + 1, tmp, k3, d)
            _blend(P, k3, h, tmp, d)
            _comm(a, 2 * i + 2, tmp, k4, d)
            for r in range(d):
                for c in range(d):
                    P[r, c] = P[r, c] + sixth * (
                        k1[r, c] + 2.0 * (k2[r, c] + k3[r, c]) + k4[r, c]
                    )
            if record:
                for r in range(d):
                    for c in range(d):
                        out[i + 1, r, c] = P[r, c]
        if not record:
            for r in range(d):
                for c in range(d):
                    out[0, r, c] = P[r, c]
    return out_np


cdef inline void _mv(const double[:, :, ::1] a, Py_ssize_t ia,
                     const double[::1] x, const double[:, ::1] g, Py_ssize_t ig,
                     double[::1] out, Py_ssize_t d) noexcept nogil:
    # out = a[ia] @ x + g[ig]
    cdef Py_ssize_t i, k
    cdef double acc
    for i in range(d):
        acc = g[ig, i]
        for k in range(d):
            acc += a[ia, i, k] * x[k]
        out[i] = acc


cdef inline void _blend_v(const double[::1] x, const double[::1] k, double c,
                          double[::1] out, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(d):
        out[i] = x[i] + c * k[i]


def rk4_affine(As, gs, double h, x0, projs=None, bint record=False):
    As = np.ascontiguousarray(As, dtype=np.float64)
    gs = np.ascontiguousarray(gs, dtype=np.float64)
    cdef const double[:, :, ::1] a = As
    cdef const double[:, ::1] g = gs
    cdef Py_ssize_t n = (a.shape[0] - 1) // 2
    cdef Py_ssize_t d = a.shape[1]
    out_np = np.empty((n + 1 if record else 1, d))
    cdef double[:, ::1] out = out_np
    cdef bint use_proj = projs is not None
    cdef const double[:, :, ::1] pr = (
        np.ascontiguousarray(projs, dtype=np.float64) if use_proj
        else np.empty((1, d, d))
    )
    work = np.empty((6, d))
    cdef double[::1] x = np.array(x0, dtype=np.float64, order="C")
    cdef double[::1] k1 = work[0]
    cdef double[::1] k2 = work[1]
    cdef double[::1] k3 = work[2]
    cdef double[::1] k4 = work[3]
    cdef double[::1] tmp = work[4]
    cdef double[::1] tmp2 = work[5]
    cdef double half = 0.5 * h, sixth = h / 6.0
    cdef Py_ssize_t i, r, k
    cdef double acc
    with nogil:
        if record:
            for r in range(d):
                out[0, r] = x[r]
        for i in range(n):
            _mv(a, 2 * i, x, g, 2 * i, k1, d)
            _blend_v(x, k1, half, tmp, d)
            _mv(a, 2 * i + 1, tmp, g, 2 * i + 1, k2, d)
            _blend_v(x, k2, half, tmp, d)
            _mv(a, 2 * i + 1, tmp, g, 2 * i + 1, k3, d)
            _blend_v(x, k3, h, tmp, d)
            _mv(a, 2 * i + 2, tmp, g, 2 * i + 2, k4, d)
            for r in range(d):
                x[r] = x[r] + sixth * (k1[r] + 2.0 * (k2[r] + k3[r]) + k4[r])
            if use_proj:
                for r in range(d):
                    acc = 0.0
                    for k in range(d):
                        acc += pr[i, r, k] * x[k]
                    tmp2[r] = acc
                for r in range(d):
                    x[r] = tmp2[r]
            if record:
                for r in range(d):
                    out[i + 1, r] = x[r]
        if not record:
            for r in range(d):
                out[0, r] = x[r]
    return out_np
