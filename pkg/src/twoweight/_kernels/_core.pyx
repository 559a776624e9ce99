# Compiled tree-scan kernels. Must stay bit-identical to _fallback.py: the
# per-entry accumulation order is part of the contract (children add onto their
# parent in canonical-index order, path sums add the finalized parent once).

import numpy as np

from libc.stdint cimport int64_t


def down_sum(const double[::1] values, const int64_t[::1] parent,
             const int64_t[::1] level_offsets):
    cdef Py_ssize_t n = values.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    out[0] = values[0]
    # canonical order is level-major, so parent[i] < i is already finalized
    for i in range(1, n):
        out[i] = values[i] + out[parent[i]]
    return out_arr


def down_max(const double[::1] values, const int64_t[::1] parent,
             const int64_t[::1] level_offsets):
    cdef Py_ssize_t n = values.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double v, p
    out[0] = values[0]
    for i in range(1, n):
        v = values[i]
        p = out[parent[i]]
        out[i] = v if v > p else p
    return out_arr


def up_sum(const double[::1] values, const int64_t[::1] child_order,
           const int64_t[::1] level_offsets):
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t nlev = level_offsets.shape[0] - 1
    acc_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    cdef Py_ssize_t lev, lo, hi, plo, npar, arity, w, s, base
    cdef Py_ssize_t i
    for i in range(n):
        acc[i] = values[i]
    for lev in range(nlev - 1, 0, -1):
        lo = level_offsets[lev]
        hi = level_offsets[lev + 1]
        plo = level_offsets[lev - 1]
        npar = lo - plo
        arity = (hi - lo) // npar
        for w in range(npar):
            base = lo + w * arity
            for s in range(arity):
                acc[plo + w] += acc[child_order[base + s]]
    return acc_arr
