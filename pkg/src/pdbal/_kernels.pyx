# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled triple-sum kernels; same contract as ``pdbal._kernels_py``."""

import numpy as np
from libc.math cimport exp, log, M_PI


def categorical_closed(const double[:, :, ::1] A, const double[:, ::1] W,
                       const long long[::1] ti, const long long[::1] tj, const long long[::1] tk,
                       const double[::1] dv, long long n_total):
    cdef Py_ssize_t nb = A.shape[0], nt = ti.shape[0], nk = A.shape[2]
    cdef Py_ssize_t b, t, y
    cdef long long i, j, k
    cdef double acc, m
    out = np.zeros(nb)
    cdef double[::1] o = out
    with nogil:
        for b in range(nb):
            acc = 0.0
            for t in range(nt):
                i = ti[t]
                j = tj[t]
                k = tk[t]
                m = 0.0
                for y in range(nk):
                    m = m + A[b, i, y] * A[b, j, y] * A[b, k, y]
                acc = acc + dv[t] * m * W[b, k]
            o[b] = acc / n_total
    return out


def gaussian_closed(const double[:, ::1] mean, double var, const double[:, ::1] W,
                    const long long[::1] ti, const long long[::1] tj, const long long[::1] tk,
                    const double[::1] dv, long long n_total):
    cdef Py_ssize_t nb = mean.shape[0], nt = ti.shape[0]
    cdef Py_ssize_t b, t
    cdef double alpha = 3.0 * var * var
    cdef double log_const = -0.5 * (log(alpha) + 2.0 * log(2.0 * M_PI))
    cdef double coef = var / (2.0 * alpha)
    cdef double a, bb, c, acc
    out = np.zeros(nb)
    cdef double[::1] o = out
    with nogil:
        for b in range(nb):
            acc = 0.0
            for t in range(nt):
                a = mean[b, ti[t]]
                bb = mean[b, tj[t]]
                c = mean[b, tk[t]]
                acc = acc + dv[t] * W[b, tk[t]] * exp(
                    log_const - coef * ((a - bb) * (a - bb) + (bb - c) * (bb - c) + (a - c) * (a - c)))
            o[b] = acc / n_total
    return out


def expfam_sampled(const double[:, :, ::1] C, const double[:, :, ::1] S, const double[:, ::1] W,
                   const long long[::1] ti, const long long[::1] tj, const long long[::1] tk,
                   const double[::1] dv, long long n_total):
    cdef Py_ssize_t nb = C.shape[0], nt = ti.shape[0]
    cdef Py_ssize_t b, t
    cdef long long i, j, k
    cdef double acc, lp
    out = np.zeros(nb)
    cdef double[::1] o = out
    with nogil:
        for b in range(nb):
            acc = 0.0
            for t in range(nt):
                i = ti[t]
                j = tj[t]
                k = tk[t]
                lp = (C[b, i, 0] + C[b, j, 0]
                      + (C[b, i, 1] + C[b, j, 1]) * S[b, k, 0]
                      + (C[b, i, 2] + C[b, j, 2]) * S[b, k, 1]
                      + 2.0 * S[b, k, 2])
                acc = acc + dv[t] * exp(lp) * W[b, k]
            o[b] = acc / n_total
    return out


def categorical_sampled(const double[:, :, ::1] A, const long long[:, ::1] Y, const double[:, ::1] W,
                        const long long[::1] ti, const long long[::1] tj, const long long[::1] tk,
                        const double[::1] dv, long long n_total):
    cdef Py_ssize_t nb = A.shape[0], nt = ti.shape[0]
    cdef Py_ssize_t b, t
    cdef long long k, yk
    cdef double acc
    out = np.zeros(nb)
    cdef double[::1] o = out
    with nogil:
        for b in range(nb):
            acc = 0.0
            for t in range(nt):
                k = tk[t]
                yk = Y[b, k]
                acc = acc + dv[t] * A[b, ti[t], yk] * A[b, tj[t], yk] * W[b, k]
            o[b] = acc / n_total
    return out
