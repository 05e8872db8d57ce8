# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Signatures mirror ``_pykernels`` exactly."""

import numpy as np

from libc.math cimport sin, fabs


cdef inline void _mean_phase(double x, double* re, double* im) noexcept nogil:
    # (e^{ix} - 1)/(ix) = sin(x)/x + i (1 - cos x)/x, with 1 - cos x = 2 sin^2(x/2)
    cdef double h
    if fabs(x) < 1e-12:
        re[0] = 1.0
        im[0] = 0.5 * x
    else:
        h = sin(0.5 * x)
        re[0] = sin(x) / x
        im[0] = 2.0 * h * h / x


def phase_average_quadform(const double[::1] lam, g, const double[::1] times):
    """sum_{j,k} conj(g_j) g_k (1/t) int_0^t exp(i s (lam_j - lam_k)) ds, per t."""
    cdef Py_ssize_t n = lam.shape[0], nt = times.shape[0]
    cdef Py_ssize_t a, j, k
    cdef double t, x, re, im, acc, diag, gj_r, gj_i, mre, mim
    g = np.ascontiguousarray(g)
    cdef bint is_real = not np.iscomplexobj(g)
    cdef const double[::1] gr, gi
    if is_real:
        gr = np.ascontiguousarray(g, dtype=np.float64)
        gi = np.zeros(n)
    else:
        gr = np.ascontiguousarray(g.real, dtype=np.float64)
        gi = np.ascontiguousarray(g.imag, dtype=np.float64)
    out = np.empty(nt)
    cdef double[::1] res = out
    with nogil:
        diag = 0.0
        for j in range(n):
            diag = diag + gr[j] * gr[j] + gi[j] * gi[j]
        for a in range(nt):
            t = times[a]
            acc = 0.0
            if is_real:
                for j in range(n):
                    gj_r = gr[j]
                    for k in range(j + 1, n):
                        x = t * (lam[j] - lam[k])
                        if fabs(x) < 1e-12:
                            acc = acc + gj_r * gr[k]
                        else:
                            acc = acc + gj_r * gr[k] * sin(x) / x
            else:
                for j in range(n):
                    gj_r = gr[j]
                    gj_i = gi[j]
                    for k in range(j + 1, n):
                        x = t * (lam[j] - lam[k])
                        _mean_phase(x, &re, &im)
                        mre = gj_r * gr[k] + gj_i * gi[k]
                        mim = gj_r * gi[k] - gj_i * gr[k]
                        acc = acc + mre * re - mim * im
            res[a] = diag + 2.0 * acc
    return out


def phase_average_matrix(const double[::1] lam, m, const double[::1] times):
    """sum_{j,k} M_jk (1/t) int_0^t exp(i s (lam_j - lam_k)) ds for Hermitian M, per t."""
    cdef Py_ssize_t n = lam.shape[0], nt = times.shape[0]
    cdef Py_ssize_t a, j, k
    cdef double t, x, re, im, acc, diag
    m = np.asarray(m)
    cdef const double[:, ::1] mr = np.ascontiguousarray(m.real, dtype=np.float64)
    cdef const double[:, ::1] mi
    cdef bint is_real = not np.iscomplexobj(m)
    if is_real:
        mi = np.zeros((1, 1))
    else:
        mi = np.ascontiguousarray(m.imag, dtype=np.float64)
    out = np.empty(nt)
    cdef double[::1] res = out
    with nogil:
        diag = 0.0
        for j in range(n):
            diag = diag + mr[j, j]
        for a in range(nt):
            t = times[a]
            acc = 0.0
            for j in range(n):
                for k in range(j + 1, n):
                    x = t * (lam[j] - lam[k])
                    _mean_phase(x, &re, &im)
                    if is_real:
                        acc = acc + mr[j, k] * re
                    else:
                        acc = acc + mr[j, k] * re - mi[j, k] * im
            res[a] = diag + 2.0 * acc
    return out


def lipschitz_sweep(const double[::1] x, const double[::1] w, double l_min, double l_max):
    """Max of mu([x_i, x_j]) / max(x_j - x_i, l_min) over pairs with x_j - x_i <= l_max.

    ``x`` must be sorted ascending. Returns (ratio, i, j).
    """
    cdef Py_ssize_t n = x.shape[0], i, j
    cdef Py_ssize_t bi = 0, bj = 0
    cdef double best = -1.0, length, ratio
    cum_arr = np.concatenate(([0.0], np.cumsum(w)))
    cdef double[::1] cum = cum_arr
    with nogil:
        for i in range(n):
            j = i
            while j < n and x[j] - x[i] <= l_max:
                length = x[j] - x[i]
                if length < l_min:
                    length = l_min
                ratio = (cum[j + 1] - cum[i]) / length
                if ratio > best:
                    best = ratio
                    bi = i
                    bj = j
                j = j + 1
    return best, bi, bj
