# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops for timestamp-stream processing.

Semantics are defined by the NumPy reference implementation in
``_kernels_py``; the two must produce bit-identical results.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def match_pairs(cnp.int64_t[::1] a, cnp.int64_t[::1] b, cnp.int64_t half_window):
    """Greedy earliest-first one-to-one matching of two sorted streams.

    Walks both streams once; whenever the heads are within ``half_window``
    (inclusive) they are paired and both consumed, otherwise the earlier
    head is discarded.  Returns (indices into a, indices into b).
    """
    cdef Py_ssize_t na = a.shape[0]
    cdef Py_ssize_t nb = b.shape[0]
    cdef Py_ssize_t cap = na if na < nb else nb
    out_a = np.empty(cap, dtype=np.int64)
    out_b = np.empty(cap, dtype=np.int64)
    cdef cnp.int64_t[::1] oa = out_a
    cdef cnp.int64_t[::1] ob = out_b
    cdef Py_ssize_t i = 0, j = 0, k = 0
    cdef cnp.int64_t ta, tb
    while i < na and j < nb:
        ta = a[i]
        tb = b[j]
        if ta < tb - half_window:
            i += 1
        elif tb < ta - half_window:
            j += 1
        else:
            oa[k] = i
            ob[k] = j
            k += 1
            i += 1
            j += 1
    return out_a[:k], out_b[:k]


def delta_histogram(cnp.int64_t[::1] a, cnp.int64_t[::1] b,
                    cnp.int64_t center, cnp.int64_t half_span,
                    cnp.int64_t bin_width):
    """Histogram of all pairwise differences (b - a) within center +- half_span.

    Bin ``m`` covers [center - half_span + m*bin_width, ...).  Used by the
    clock-drift estimator; enumerates pairs with a sliding window so the
    cost is O(na + pairs).
    """
    cdef cnp.int64_t lo = center - half_span
    cdef cnp.int64_t hi = center + half_span
    cdef Py_ssize_t nbins = <Py_ssize_t>((hi - lo) // bin_width) + 1
    hist = np.zeros(nbins, dtype=np.int64)
    cdef cnp.int64_t[::1] h = hist
    cdef Py_ssize_t na = a.shape[0]
    cdef Py_ssize_t nb = b.shape[0]
    cdef Py_ssize_t i, j, start = 0
    cdef cnp.int64_t ta, d
    for i in range(na):
        ta = a[i]
        while start < nb and b[start] < ta + lo:
            start += 1
        j = start
        while j < nb:
            d = b[j] - ta
            if d > hi:
                break
            h[<Py_ssize_t>((d - lo) // bin_width)] += 1
            j += 1
    return hist
