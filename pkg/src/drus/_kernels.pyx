# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled assembly and apply kernels. See ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def assemble_echo_columns(delays, weights, pulse, Py_ssize_t center, Py_ssize_t n_samples):
    cdef const double[:, ::1] tau = np.ascontiguousarray(delays, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[::1] p = np.ascontiguousarray(pulse, dtype=np.float64)
    cdef Py_ssize_t n_pix = tau.shape[0], n_rx = tau.shape[1], plen = p.shape[0]
    cdef Py_ssize_t cap = n_pix * n_rx * (plen + 1)
    rows_a = np.empty(cap, dtype=np.int64)
    vals_a = np.empty(cap, dtype=np.float64)
    indptr_a = np.zeros(n_pix + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] rows = rows_a
    cdef double[::1] vals = vals_a
    cdef cnp.int64_t[::1] indptr = indptr_a
    cdef Py_ssize_t n, j, o, r, nnz = 0
    cdef double k0, f, wv, cur, prev, v
    for n in range(n_pix):
        for j in range(n_rx):
            wv = w[n, j]
            if wv == 0.0:
                continue
            k0 = floor(tau[n, j])
            f = tau[n, j] - k0
            for o in range(plen + 1):
                r = <Py_ssize_t>k0 - center + o
                if r < 0 or r >= n_samples:
                    continue
                cur = p[o] if o < plen else 0.0
                prev = p[o - 1] if o >= 1 else 0.0
                v = wv * ((1.0 - f) * cur + f * prev)
                if v == 0.0:
                    continue
                rows[nnz] = r + j * n_samples
                vals[nnz] = v
                nnz += 1
        indptr[n + 1] = nnz
    return indptr_a, rows_a[:nnz].copy(), vals_a[:nnz].copy()


def assemble_das_rows(delays, weights, Py_ssize_t n_samples, bint normalize):
    cdef const double[:, ::1] tau = np.ascontiguousarray(delays, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n_pix = tau.shape[0], n_rx = tau.shape[1]
    cols_a = np.empty(n_pix * n_rx * 2, dtype=np.int64)
    vals_a = np.empty(n_pix * n_rx * 2, dtype=np.float64)
    indptr_a = np.zeros(n_pix + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] cols = cols_a
    cdef double[::1] vals = vals_a
    cdef cnp.int64_t[::1] indptr = indptr_a
    cdef Py_ssize_t n, j, s, r, nnz = 0
    cdef double k0, f, wv, cnt, lin, v
    for n in range(n_pix):
        cnt = 0.0
        for j in range(n_rx):
            if w[n, j] != 0.0:
                cnt += 1.0
        if not normalize or cnt == 0.0:
            cnt = 1.0
        for j in range(n_rx):
            wv = w[n, j]
            if wv == 0.0:
                continue
            k0 = floor(tau[n, j])
            f = tau[n, j] - k0
            for s in range(2):
                r = <Py_ssize_t>k0 + s
                if r < 0 or r >= n_samples:
                    continue
                lin = (1.0 - f) if s == 0 else f
                v = (wv * lin) / cnt
                if v == 0.0:
                    continue
                cols[nnz] = r + j * n_samples
                vals[nnz] = v
                nnz += 1
        indptr[n + 1] = nnz
    return indptr_a, cols_a[:nnz].copy(), vals_a[:nnz].copy()


def csc_matvec(indptr, indices, data, x, Py_ssize_t n_rows):
    cdef const cnp.int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const cnp.int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[::1] d = np.ascontiguousarray(data, dtype=np.float64)
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    y_a = np.zeros(n_rows, dtype=np.float64)
    cdef double[::1] y = y_a
    cdef Py_ssize_t c, k
    cdef double xc
    for c in range(ip.shape[0] - 1):
        xc = xv[c]
        for k in range(ip[c], ip[c + 1]):
            y[ix[k]] += d[k] * xc
    return y_a


def dense_matvec(a, x):
    cdef const double[:, :] m = np.asarray(a, dtype=np.float64)
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    y_a = np.zeros(m.shape[0], dtype=np.float64)
    cdef double[::1] y = y_a
    cdef Py_ssize_t r, c
    cdef double xc
    for c in range(m.shape[1]):
        xc = xv[c]
        for r in range(m.shape[0]):
            y[r] += m[r, c] * xc
    return y_a
