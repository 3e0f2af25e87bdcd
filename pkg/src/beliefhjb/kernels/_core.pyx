# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same signatures and arithmetic order as ``_fallback``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, floor, fabs, copysign, INFINITY

cnp.import_array()

BACKEND = "cython"

cdef enum:
    MAXD = 16


cdef double _residual(const double[::1] V, const double[::1] g, const double[:, ::1] coef,
                      const double[::1] inv_h2, const double[::1] c,
                      const Py_ssize_t* strides, int d, double[::1] out) noexcept nogil:
    cdef Py_ssize_t j, N = V.shape[0], s
    cdef int i
    cdef double best, val, d2, a, sup = 0.0
    for j in range(N):
        best = g[j] - V[j]
        for i in range(d):
            a = coef[i, j]
            if a != 0.0:
                s = strides[i]
                d2 = (V[j + s] - 2.0 * V[j]) + V[j - s]
                val = a * d2 * inv_h2[i] - c[i]
            else:
                val = -c[i]
            if val > best:
                best = val
        out[j] = best
        if fabs(best) > sup:
            sup = fabs(best)
    return sup


cdef void _strides(shape, Py_ssize_t* strides, int* d) except *:
    cdef int i
    d[0] = len(shape)
    if d[0] > MAXD:
        raise ValueError("dimension too large for compiled kernel")
    strides[d[0] - 1] = 1
    for i in range(d[0] - 2, -1, -1):
        strides[i] = strides[i + 1] * <Py_ssize_t>shape[i + 1]


def residual(const double[::1] V, const double[::1] g, const double[:, ::1] coef,
             const double[::1] inv_h2, const double[::1] c, shape, double[::1] out):
    cdef Py_ssize_t strides[MAXD]
    cdef int d
    cdef double sup
    _strides(shape, strides, &d)
    with nogil:
        sup = _residual(V, g, coef, inv_h2, c, strides, d, out)
    return sup


def sweep(const double[::1] V, const double[::1] g, const double[:, ::1] coef,
          const double[::1] inv_h2, const double[::1] c, shape, double tau,
          double[::1] V_out, double[::1] res_out):
    cdef Py_ssize_t strides[MAXD]
    cdef int d
    cdef Py_ssize_t j
    cdef double sup, v
    _strides(shape, strides, &d)
    with nogil:
        sup = _residual(V, g, coef, inv_h2, c, strides, d, res_out)
        for j in range(V.shape[0]):
            v = V[j] + tau * res_out[j]
            V_out[j] = v if v > g[j] else g[j]
    return sup


def iterate(double[::1] V, const double[::1] g, const double[:, ::1] coef,
            const double[::1] inv_h2, const double[::1] c, shape, double tau,
            double tol, long long max_iters):
    cdef Py_ssize_t strides[MAXD]
    cdef int d
    cdef Py_ssize_t j, N = V.shape[0]
    cdef long long it = 0
    cdef double sup, v
    cdef double[::1] res = np.empty(N)
    _strides(shape, strides, &d)
    with nogil:
        while True:
            sup = _residual(V, g, coef, inv_h2, c, strides, d, res)
            if sup <= tol or it >= max_iters:
                break
            # Jacobi: res holds the full old-field residual before any write
            for j in range(N):
                v = V[j] + tau * res[j]
                V[j] = v if v > g[j] else g[j]
            it += 1
    return it, sup


def argmax_pairs(const double[::1] ue, const double[::1] ve, const double[:, ::1] X,
                 const double[:, ::1] Y, double alpha, Py_ssize_t i0, Py_ssize_t i1):
    cdef Py_ssize_t ix, iy, l, bx = -1, by = -1, ny = ve.shape[0]
    cdef int d = X.shape[1]
    cdef double best = -INFINITY, dist2, t, val, half = 0.5 * alpha
    with nogil:
        for ix in range(i0, i1):
            for iy in range(ny):
                t = X[ix, 0] - Y[iy, 0]
                dist2 = t * t
                for l in range(1, d):
                    t = X[ix, l] - Y[iy, l]
                    dist2 = dist2 + t * t
                val = (ue[ix] - ve[iy]) - half * dist2
                if val > best:
                    best = val
                    bx = ix
                    by = iy
    return best, bx, by


def advance_paths(double[:, ::1] z, long long[:, ::1] steps, long long[::1] total,
                  signed char[::1] status, long long[::1] sat, const double[:, ::1] pis,
                  const double[:, ::1] normals, const signed char[::1] actions, pshape,
                  const double[::1] lo, const double[::1] spread, const double[::1] snr,
                  const double[::1] vol, long long max_steps, double dt, double sqrt_dt,
                  double zcap):
    cdef Py_ssize_t m = z.shape[0], K = normals.shape[1], p, col, flat
    cdef int d = z.shape[1], i, ai
    cdef long long n_i[MAXD]
    cdef Py_ssize_t pstr[MAXD]
    cdef double x[MAXD]
    cdef double xi, dw, drift, znew
    cdef signed char act
    if d > MAXD:
        raise ValueError("dimension too large for compiled kernel")
    for i in range(d):
        n_i[i] = pshape[i]
    pstr[d - 1] = 1
    for i in range(d - 2, -1, -1):
        pstr[i] = pstr[i + 1] * n_i[i + 1]
    with nogil:
        for p in range(m):
            if status[p] != 0:
                continue
            col = 0
            while col < K:
                flat = 0
                for i in range(d):
                    x[i] = 1.0 / (1.0 + exp(-z[p, i]))
                    flat = flat + <Py_ssize_t>floor(x[i] * (n_i[i] - 1) + 0.5) * pstr[i]
                act = actions[flat]
                if act == 0:
                    status[p] = 1
                    break
                if total[p] >= max_steps:
                    status[p] = 2
                    break
                ai = act - 1
                xi = x[ai]
                dw = normals[p, col] * sqrt_dt
                drift = snr[ai] * ((pis[p, ai] - lo[ai]) - spread[ai] * xi) - 0.5 * (1.0 - 2.0 * xi) * vol[ai] * vol[ai]
                znew = z[p, ai] + drift * dt + vol[ai] * dw
                if fabs(znew) > zcap:
                    znew = copysign(zcap, znew)
                    sat[p] += 1
                z[p, ai] = znew
                steps[p, ai] += 1
                total[p] += 1
                col += 1
