# cython: language_level=3
"""Compiled inner loops for lag-window scanning over time-sorted event arrays."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t

cnp.import_array()


def follow_pairs(const int64_t[::1] src_tid, const double[::1] src_time, const int64_t[::1] src_rank,
                 const int64_t[::1] dst_tid, const double[::1] dst_time, const int64_t[::1] dst_rank,
                 double lag, int64_t n_templates, bint ordered):
    cdef Py_ssize_t n = src_tid.shape[0], m = dst_tid.shape[0]
    cdef Py_ssize_t i, j, lo = 0, k = 0, cap = max(16, 2 * n)
    cdef double t, hi
    cdef int64_t eff
    cdef cnp.ndarray[int64_t, ndim=1] mark = np.full(n_templates, -1, dtype=np.int64)
    cdef cnp.ndarray[int64_t, ndim=1] out = np.empty(cap, dtype=np.int64)
    for i in range(n):
        t = src_time[i]
        hi = t + lag
        while lo < m and dst_time[lo] < t:
            lo += 1
        j = lo
        while j < m and dst_time[j] <= hi:
            if ordered and dst_rank[j] <= src_rank[i]:
                j += 1
                continue
            eff = dst_tid[j]
            if mark[eff] != i:
                mark[eff] = i
                if k == cap:
                    cap *= 2
                    out = np.resize(out, cap)
                out[k] = src_tid[i] * n_templates + eff
                k += 1
            j += 1
    return out[:k].copy()


def hit_mask(const double[::1] src_time, const int64_t[::1] src_rank,
             const double[::1] dst_time, const int64_t[::1] dst_rank,
             double lag, bint ordered):
    cdef Py_ssize_t n = src_time.shape[0], m = dst_time.shape[0]
    cdef Py_ssize_t i, j, lo = 0
    cdef double t, hi
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] out = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        t = src_time[i]
        hi = t + lag
        while lo < m and dst_time[lo] < t:
            lo += 1
        j = lo
        while j < m and dst_time[j] <= hi:
            if not ordered or dst_rank[j] > src_rank[i]:
                out[i] = 1
                break
            j += 1
    return out
