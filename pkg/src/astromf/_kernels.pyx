# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Must stay bit-identical to ``_fallback.py``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


def uniform_block(uint64_t base, reps, int tag_code, Py_ssize_t n):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] r = np.ascontiguousarray(reps, dtype=np.uint64)
    cdef Py_ssize_t m = r.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((m, n), dtype=np.float64)
    cdef uint64_t tag_mult = (<uint64_t>tag_code) * M2
    cdef uint64_t key, z
    cdef Py_ssize_t i, c
    with nogil:
        for i in range(m):
            key = _mix(_mix(base + r[i] * GOLDEN) ^ tag_mult)
            for c in range(n):
                z = _mix(key + (<uint64_t>(c + 1)) * GOLDEN)
                out[i, c] = (<double>(z >> 11) + 0.5) * INV53
    return out


def ss_costs(cnp.ndarray[cnp.float64_t, ndim=2] demand,
             cnp.ndarray[cnp.int64_t, ndim=2] lead,
             double s, double S, double holding, double backorder,
             double fixed, double unit, double initial):
    cdef Py_ssize_t reps = demand.shape[0]
    cdef Py_ssize_t days = demand.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(reps, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] arrivals = np.empty(days, dtype=np.float64)
    cdef double level, on_order, total, a, position, qty
    cdef int64_t L
    cdef Py_ssize_t r, t
    with nogil:
        for r in range(reps):
            for t in range(days):
                arrivals[t] = 0.0
            level = initial
            on_order = 0.0
            total = 0.0
            for t in range(days):
                a = arrivals[t]
                level += a
                on_order -= a
                level -= demand[r, t]
                position = level + on_order
                if position < s:
                    qty = S - position
                    total += fixed + unit * qty
                    L = lead[r, t]
                    if L == 0:
                        level += qty
                    else:
                        if t + L < days:
                            arrivals[t + L] += qty
                        on_order += qty
                if level > 0.0:
                    total += holding * level
                else:
                    total -= backorder * level
            out[r] = total / days
    return out
