# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.  Semantics match ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log2, INFINITY

cnp.import_array()


def sinr_pair(channels, w, noise):
    cdef const double complex[:, ::1] H = np.ascontiguousarray(channels, dtype=np.complex128)
    cdef const double complex[:, ::1] W = np.ascontiguousarray(w, dtype=np.complex128)
    cdef const double[::1] sig2 = np.ascontiguousarray(noise, dtype=np.float64)
    cdef Py_ssize_t K = H.shape[0], D = H.shape[1], M = W.shape[0]
    sm_arr = np.empty(K)
    su_arr = np.empty(K)
    cdef double[::1] sm = sm_arr, su = su_arr
    cdef Py_ssize_t k, m, i
    cdef double complex acc
    cdef double gm, total, sig, gij
    for k in range(K):
        total = 0.0
        sig = 0.0
        gm = 0.0
        for m in range(M):
            acc = 0.0
            for i in range(D):
                acc = acc + H[k, i].conjugate() * W[m, i]
            gij = acc.real * acc.real + acc.imag * acc.imag
            if m == 0:
                gm = gij
            else:
                total += gij
                if m == k + 1:
                    sig = gij
        sm[k] = gm / (total + sig2[k])
        su[k] = sig / (total - sig + sig2[k])
    return sm_arr, su_arr


def link_prune_sweep(Z, noise, block_power, capacity, double eta):
    cdef const double complex[:, :, ::1] Zv = np.ascontiguousarray(Z, dtype=np.complex128)
    cdef const double[::1] sig2 = np.ascontiguousarray(noise, dtype=np.float64)
    cdef const double[::1] cap = np.ascontiguousarray(capacity, dtype=np.float64)
    cdef Py_ssize_t K = Zv.shape[0], M = Zv.shape[1], N = Zv.shape[2]
    flat = np.ascontiguousarray(block_power, dtype=np.float64).ravel()
    order_arr = np.argsort(-flat, kind="stable").astype(np.intp)
    cdef Py_ssize_t[::1] order = order_arr
    cdef const double[::1] p = flat
    cdef Py_ssize_t J = order.shape[0]

    inner_arr = np.zeros((K, M), dtype=np.complex128)
    cdef double complex[:, ::1] inner = inner_arr
    mask_arr = np.zeros((M, N), dtype=np.int8)
    cdef cnp.int8_t[:, ::1] mask = mask_arr
    rates_arr = np.empty(M)
    cdef double[::1] rates = rates_arr
    best_rates_arr = np.zeros(M)
    cdef double[::1] best_rates = best_rates_arr
    best_mask_arr = np.zeros((M, N), dtype=np.int8)

    cdef Py_ssize_t j, k, m, n, mj, nj
    cdef double g, total, sig, gm, r0min, load, scale, obj, best = -INFINITY
    cdef Py_ssize_t best_j = -1
    for j in range(J):
        mj = order[j] // N
        nj = order[j] % N
        mask[mj, nj] = 1
        for k in range(K):
            inner[k, mj] = inner[k, mj] + Zv[k, mj, nj]
        if j + 1 < J and not (p[order[j + 1]] < p[order[j]]):
            continue
        r0min = INFINITY
        for k in range(K):
            total = 0.0
            sig = 0.0
            for m in range(M):
                g = inner[k, m].real * inner[k, m].real + inner[k, m].imag * inner[k, m].imag
                if m == 0:
                    gm = g
                else:
                    total += g
                    if m == k + 1:
                        sig = g
            rates[k + 1] = log2(1.0 + sig / (total - sig + sig2[k]))
            g = log2(1.0 + gm / (total + sig2[k]))
            if g < r0min:
                r0min = g
        rates[0] = r0min
        scale = 1.0
        for n in range(N):
            load = 0.0
            for m in range(M):
                if mask[m, n]:
                    load += rates[m]
            if load > 0 and cap[n] / load < scale:
                scale = cap[n] / load
        obj = eta * rates[0] * scale
        for m in range(1, M):
            obj += (1.0 - eta) * rates[m] * scale
        if obj > best:
            best = obj
            best_j = j
            for m in range(M):
                best_rates[m] = rates[m] * scale
            best_mask_arr[...] = mask_arr
    return float(best), best_mask_arr, best_rates_arr
