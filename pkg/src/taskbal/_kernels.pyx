# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def segment_sums(values, seg, Py_ssize_t n_seg):
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const Py_ssize_t[::1] s = np.ascontiguousarray(seg, dtype=np.intp)
    sums_arr = np.zeros(n_seg, dtype=np.float64)
    counts_arr = np.zeros(n_seg, dtype=np.int64)
    cdef double[::1] sums = sums_arr
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t i, k
    for i in range(v.shape[0]):
        k = s[i]
        if k < 0 or k >= n_seg:
            raise IndexError("segment index out of range")
        sums[k] += v[i]
        counts[k] += 1
    return sums_arr, counts_arr


def softmax_xent(logits, n_classes, targets, weights):
    cdef const double[:, ::1] z = np.ascontiguousarray(logits, dtype=np.float64)
    cdef const Py_ssize_t[::1] nc = np.ascontiguousarray(n_classes, dtype=np.intp)
    cdef const Py_ssize_t[::1] y = np.ascontiguousarray(targets, dtype=np.intp)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = z.shape[0], c = z.shape[1]
    nll_arr = np.empty(n, dtype=np.float64)
    grad_arr = np.zeros((n, c), dtype=np.float64)
    cdef double[::1] nll = nll_arr
    cdef double[:, ::1] g = grad_arr
    cdef Py_ssize_t t, k, kk
    cdef double zmax, s, e
    for t in range(n):
        kk = nc[t]
        zmax = z[t, 0]
        for k in range(1, kk):
            if z[t, k] > zmax:
                zmax = z[t, k]
        s = 0.0
        for k in range(kk):
            e = exp(z[t, k] - zmax)
            g[t, k] = e
            s += e
        nll[t] = log(s) - (z[t, y[t]] - zmax)
        for k in range(kk):
            g[t, k] = w[t] * (g[t, k] / s)
        g[t, y[t]] -= w[t]
    return nll_arr, grad_arr


def head_forward(feats, unit, heads):
    cdef const double[:, ::1] f = np.ascontiguousarray(feats, dtype=np.float64)
    cdef const Py_ssize_t[::1] u = np.ascontiguousarray(unit, dtype=np.intp)
    cdef const double[:, :, ::1] H = np.ascontiguousarray(heads, dtype=np.float64)
    cdef Py_ssize_t n = f.shape[0], c = H.shape[1], h = H.shape[2]
    out_arr = np.zeros((n, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t t, k, j, ut
    cdef double acc
    for t in range(n):
        ut = u[t]
        for k in range(c):
            acc = 0.0
            for j in range(h):
                acc += H[ut, k, j] * f[t, j]
            out[t, k] = acc
    return out_arr


def head_backward(feats, unit, heads, dlogits):
    cdef const double[:, ::1] f = np.ascontiguousarray(feats, dtype=np.float64)
    cdef const Py_ssize_t[::1] u = np.ascontiguousarray(unit, dtype=np.intp)
    cdef const double[:, :, ::1] H = np.ascontiguousarray(heads, dtype=np.float64)
    cdef const double[:, ::1] d = np.ascontiguousarray(dlogits, dtype=np.float64)
    cdef Py_ssize_t n = f.shape[0], c = H.shape[1], h = H.shape[2]
    dheads_arr = np.zeros((H.shape[0], c, h), dtype=np.float64)
    dfeats_arr = np.zeros((n, h), dtype=np.float64)
    cdef double[:, :, ::1] dH = dheads_arr
    cdef double[:, ::1] df = dfeats_arr
    cdef Py_ssize_t t, k, j, ut
    cdef double dk
    for t in range(n):
        ut = u[t]
        for k in range(c):
            dk = d[t, k]
            if dk == 0.0:
                continue
            for j in range(h):
                dH[ut, k, j] += dk * f[t, j]
                df[t, j] += dk * H[ut, k, j]
    return dheads_arr, dfeats_arr
