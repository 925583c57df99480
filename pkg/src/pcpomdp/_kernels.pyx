# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, fabs, INFINITY, isfinite

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


def block_gauss_loglik(const double[:, ::1] z, const double[:, :, ::1] means,
                       const double[:, ::1] var):
    cdef Py_ssize_t n = z.shape[0], m = means.shape[0], k = means.shape[1]
    cdef Py_ssize_t j, i, b
    cdef double acc, dx, dy, v
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    # per-particle constant term
    cdef double[::1] const_term = np.empty(m, dtype=np.float64)
    cdef double[:, ::1] inv2v = np.empty((m, k), dtype=np.float64)
    for i in range(m):
        acc = 0.0
        for b in range(k):
            v = var[i, b]
            acc -= LOG_2PI + log(v)
            inv2v[i, b] = 0.5 / v
        const_term[i] = acc
    with nogil:
        for j in range(n):
            for i in range(m):
                acc = const_term[i]
                for b in range(k):
                    dx = z[j, 2 * b] - means[i, b, 0]
                    dy = z[j, 2 * b + 1] - means[i, b, 1]
                    acc -= (dx * dx + dy * dy) * inv2v[i, b]
                out[j, i] = acc
    return out_arr


cdef int _normalize_row(const double[:, ::1] logw, Py_ssize_t j, double[:, ::1] w) noexcept nogil:
    cdef Py_ssize_t i, m = logw.shape[1]
    cdef double mx = -INFINITY, s = 0.0
    for i in range(m):
        if logw[j, i] > mx:
            mx = logw[j, i]
    if not isfinite(mx):
        return -1
    for i in range(m):
        w[j, i] = exp(logw[j, i] - mx)
        s += w[j, i]
    for i in range(m):
        w[j, i] /= s
    return 0


def normalize_rows(const double[:, ::1] logw):
    cdef Py_ssize_t n = logw.shape[0], m = logw.shape[1], j
    cdef int bad = 0
    w_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] w = w_arr
    with nogil:
        for j in range(n):
            if _normalize_row(logw, j, w) != 0:
                bad = 1
                break
    if bad:
        raise FloatingPointError("row with no finite log-weight")
    return w_arr


def logsumexp_rows(const double[:, ::1] a, const double[::1] logb):
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], j, i
    cdef double mx, s, t
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for j in range(n):
            mx = -INFINITY
            for i in range(m):
                t = a[j, i] + logb[i]
                if t > mx:
                    mx = t
            if not isfinite(mx):
                out[j] = -INFINITY
                continue
            s = 0.0
            for i in range(m):
                s += exp(a[j, i] + logb[i] - mx)
            out[j] = mx + log(s)
    return out_arr


def systematic_indices(const double[:, ::1] logw, const double[::1] u):
    cdef Py_ssize_t n = logw.shape[0], m = logw.shape[1], j, i, c
    cdef double pos, cum
    w_arr = normalize_rows(logw)
    cdef double[:, ::1] w = w_arr
    idx_arr = np.empty((n, m), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] idx = idx_arr
    with nogil:
        for j in range(n):
            c = 0
            cum = w[j, 0]
            for i in range(m):
                pos = (i + u[j]) / m
                while cum <= pos and c < m - 1:
                    c += 1
                    cum += w[j, c]
                idx[j, i] = c
    return idx_arr


def scaled_variance(const double[:, ::1] pos, const double[:, ::1] refs,
                    double sigma_w_sq, double sigma_v_sq, double r_min):
    cdef Py_ssize_t n = pos.shape[0], k = refs.shape[0], i, r
    cdef double best, dx, dy, d2
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            best = INFINITY
            for r in range(k):
                dx = pos[i, 0] - refs[r, 0]
                dy = pos[i, 1] - refs[r, 1]
                d2 = dx * dx + dy * dy
                if d2 < best:
                    best = d2
            best = sqrt(best)
            out[i] = sigma_w_sq * best if best >= r_min else sigma_v_sq
    return out_arr


def expand_batch(const double[:, ::1] x, const double[::1] w, const double[::1] avec,
                 const double[:, ::1] noise, double sd, const double[:, ::1] zin,
                 const double[::1] u, const double[:, ::1] eps,
                 const double[:, ::1] beacons, double sigma_w_sq, double sigma_v_sq,
                 double r_min, bint tracking, const double[::1] goal,
                 const double[:, ::1] obs_c, const double[::1] obs_r, const cnp.int64_t[::1] obs_sq):
    cdef Py_ssize_t n = x.shape[0], D = x.shape[1], K = 2 if tracking else 1
    cdef Py_ssize_t k = zin.shape[0] if zin.shape[0] > 0 else u.shape[0]
    cdef Py_ssize_t nb = beacons.shape[0], no = obs_c.shape[0]
    cdef Py_ssize_t i, j, d, b, c, lo, hi, mid
    cdef double dx, dy, d2, best, acc, mx, s, tot, target, dist
    cdef bint bad = 0

    xp_arr = np.empty((n, D), dtype=np.float64)
    z_arr = np.empty((k, 2 * K), dtype=np.float64)
    ll_arr = np.empty((k, n), dtype=np.float64)
    W_arr = np.empty((k, n), dtype=np.float64)
    safe_arr = np.empty(n, dtype=np.float64)
    rew_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] xp = xp_arr
    cdef double[:, ::1] z = z_arr
    cdef double[:, ::1] ll = ll_arr
    cdef double[:, ::1] W = W_arr
    cdef double[::1] safe = safe_arr
    cdef double[::1] rew = rew_arr
    cdef double[:, :, ::1] mean = np.empty((n, K, 2), dtype=np.float64)
    cdef double[:, ::1] var = np.empty((n, K), dtype=np.float64)
    cdef double[:, ::1] inv2v = np.empty((n, K), dtype=np.float64)
    cdef double[::1] cst = np.empty(n, dtype=np.float64)
    cdef double[::1] logw = np.empty(n, dtype=np.float64)
    cdef double[::1] cdf = np.empty(n, dtype=np.float64)

    with nogil:
        for i in range(n):
            for d in range(D):
                xp[i, d] = x[i, d] + avec[d] + sd * noise[i, d]
            mean[i, 0, 0] = xp[i, 0]
            mean[i, 0, 1] = xp[i, 1]
            best = INFINITY
            for b in range(nb):
                dx = xp[i, 0] - beacons[b, 0]
                dy = xp[i, 1] - beacons[b, 1]
                d2 = dx * dx + dy * dy
                if d2 < best:
                    best = d2
            best = sqrt(best)
            var[i, 0] = sigma_w_sq * best if best >= r_min else sigma_v_sq
            if tracking:
                dx = xp[i, 0] - xp[i, 2]
                dy = xp[i, 1] - xp[i, 3]
                mean[i, 1, 0] = dx
                mean[i, 1, 1] = dy
                best = sqrt(dx * dx + dy * dy)
                var[i, 1] = sigma_w_sq * best if best >= r_min else sigma_v_sq
                rew[i] = -(dx * dx + dy * dy)
            else:
                dx = xp[i, 0] - goal[0]
                dy = xp[i, 1] - goal[1]
                rew[i] = -(dx * dx + dy * dy)
            acc = 0.0
            for b in range(K):
                acc -= LOG_2PI + log(var[i, b])
                inv2v[i, b] = 0.5 / var[i, b]
            cst[i] = acc
            logw[i] = log(w[i]) if w[i] > 0 else -INFINITY
            safe[i] = 1.0
            for c in range(no):
                dx = xp[i, 0] - obs_c[c, 0]
                dy = xp[i, 1] - obs_c[c, 1]
                if obs_sq[c]:
                    dist = fabs(dx) if fabs(dx) > fabs(dy) else fabs(dy)
                else:
                    dist = sqrt(dx * dx + dy * dy)
                if dist <= obs_r[c]:
                    safe[i] = 0.0
            cdf[i] = w[i] if i == 0 else cdf[i - 1] + w[i]

        if zin.shape[0] > 0:
            for j in range(k):
                for c in range(2 * K):
                    z[j, c] = zin[j, c]
        else:
            tot = cdf[n - 1]
            for j in range(k):
                target = u[j] * tot
                # first index with cdf > target
                lo = 0
                hi = n
                while lo < hi:
                    mid = (lo + hi) // 2
                    if cdf[mid] <= target:
                        lo = mid + 1
                    else:
                        hi = mid
                if lo > n - 1:
                    lo = n - 1
                for b in range(K):
                    s = sqrt(var[lo, b])
                    z[j, 2 * b] = mean[lo, b, 0] + s * eps[j, 2 * b]
                    z[j, 2 * b + 1] = mean[lo, b, 1] + s * eps[j, 2 * b + 1]

        for j in range(k):
            mx = -INFINITY
            for i in range(n):
                acc = cst[i]
                for b in range(K):
                    dx = z[j, 2 * b] - mean[i, b, 0]
                    dy = z[j, 2 * b + 1] - mean[i, b, 1]
                    acc -= (dx * dx + dy * dy) * inv2v[i, b]
                ll[j, i] = acc
                acc = acc + logw[i]
                W[j, i] = acc
                if acc > mx:
                    mx = acc
            if not isfinite(mx):
                bad = 1
                break
            s = 0.0
            for i in range(n):
                W[j, i] = exp(W[j, i] - mx)
                s += W[j, i]
            for i in range(n):
                W[j, i] /= s
    if bad:
        raise FloatingPointError("row with no finite log-weight")
    return xp_arr, z_arr, ll_arr, W_arr, safe_arr, rew_arr
