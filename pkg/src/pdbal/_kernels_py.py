"""Pure-numpy triple-sum kernels; reference implementation and import fallback.

All arrays are candidate-major: ``A[b, i, ...]`` belongs to candidate ``b``
and ensemble member ``i``.  For each candidate the functions return

    (1 / n_total) * sum_t dv[t] * K_t * W[b, k_t]

where ``K_t`` is the triple term for ``(i_t, j_t, k_t)`` and ``W`` the
entropy weight of the outcome-generating member ``k_t``.
"""

import math

import numpy as np

_CHUNK_ELEMS = 1 << 21


def _chunks(n_cand, n_trip, width):
    step = max(1, _CHUNK_ELEMS // max(1, n_trip * width))
    for start in range(0, n_cand, step):
        yield slice(start, min(n_cand, start + step))


def categorical_closed(A, W, ti, tj, tk, dv, n_total):
    A = np.asarray(A, dtype=np.float64)
    out = np.zeros(A.shape[0])
    if ti.size == 0:
        return out
    for sl in _chunks(A.shape[0], ti.size, A.shape[2]):
        a = A[sl]
        m = np.einsum("btk,btk,btk->bt", a[:, ti], a[:, tj], a[:, tk])
        out[sl] = (m * W[sl][:, tk]) @ dv
    return out / n_total


def gaussian_closed(mean, var, W, ti, tj, tk, dv, n_total):
    mean = np.asarray(mean, dtype=np.float64)
    out = np.zeros(mean.shape[0])
    if ti.size == 0:
        return out
    alpha = 3.0 * var * var
    log_const = -0.5 * (math.log(alpha) + 2.0 * math.log(2.0 * math.pi))
    for sl in _chunks(mean.shape[0], ti.size, 1):
        mu = mean[sl]
        a, b, c = mu[:, ti], mu[:, tj], mu[:, tk]
        spread = var * ((a - b) ** 2 + (b - c) ** 2 + (a - c) ** 2)
        m = np.exp(log_const - spread / (2.0 * alpha))
        out[sl] = (m * W[sl][:, tk]) @ dv
    return out / n_total


def expfam_sampled(C, S, W, ti, tj, tk, dv, n_total):
    C = np.asarray(C, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    out = np.zeros(C.shape[0])
    if ti.size == 0:
        return out
    for sl in _chunks(C.shape[0], ti.size, 3):
        c, s = C[sl], S[sl]
        sk = s[:, tk]
        ci, cj = c[:, ti], c[:, tj]
        logp = (
            ci[..., 0] + cj[..., 0]
            + (ci[..., 1] + cj[..., 1]) * sk[..., 0]
            + (ci[..., 2] + cj[..., 2]) * sk[..., 1]
            + 2.0 * sk[..., 2]
        )
        out[sl] = (np.exp(logp) * W[sl][:, tk]) @ dv
    return out / n_total


def categorical_sampled(A, Y, W, ti, tj, tk, dv, n_total):
    A = np.asarray(A, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.int64)
    out = np.zeros(A.shape[0])
    if ti.size == 0:
        return out
    for sl in _chunks(A.shape[0], ti.size, 1):
        a, y = A[sl], Y[sl]
        rows = np.arange(a.shape[0])[:, None]
        yk = y[:, tk]
        m = a[rows, ti[None, :], yk] * a[rows, tj[None, :], yk]
        out[sl] = (m * W[sl][:, tk]) @ dv
    return out / n_total
