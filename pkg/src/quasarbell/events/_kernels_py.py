"""NumPy reference implementation of the timestamp kernels.

This is the semantic definition: the compiled extension must agree
bit-for-bit.  The matcher vectorizes the common sparse case (events whose
coincidence window contains no partner at all are discarded wholesale, and
isolated mutual pairs are matched in bulk); only ambiguous clusters fall
back to an explicit walk, so realistic streams stay near NumPy speed.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def match_pairs(a: np.ndarray, b: np.ndarray, half_window: int):
    """Greedy earliest-first one-to-one matching of two sorted int64 streams.

    Equivalent to the two-pointer walk: whenever the stream heads differ by
    at most ``half_window`` they are paired and both consumed, otherwise the
    earlier head is discarded.  Returns (indices into a, indices into b).
    """
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    # Events with no partner anywhere in their window can never match and
    # their removal does not perturb the greedy walk.
    lo_a = np.searchsorted(b, a - half_window, side="left")
    hi_a = np.searchsorted(b, a + half_window, side="right")
    keep_a = np.flatnonzero(hi_a > lo_a)
    lo_b = np.searchsorted(a, b - half_window, side="left")
    hi_b = np.searchsorted(a, b + half_window, side="right")
    keep_b = np.flatnonzero(hi_b > lo_b)
    if keep_a.size == 0 or keep_b.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty

    sa = a[keep_a]
    sb = b[keep_b]
    # Mutual singletons: exactly one candidate each way, and the candidate
    # windows do not chain into neighbours.  These always pair.
    lo_a2 = np.searchsorted(sb, sa - half_window, side="left")
    hi_a2 = np.searchsorted(sb, sa + half_window, side="right")
    lo_b2 = np.searchsorted(sa, sb - half_window, side="left")
    hi_b2 = np.searchsorted(sa, sb + half_window, side="right")
    single_a = (hi_a2 - lo_a2) == 1
    cand = np.where(single_a, lo_a2, 0)
    mutual = single_a & ((hi_b2[cand] - lo_b2[cand]) == 1)
    if bool(np.all(mutual)):
        return keep_a[np.flatnonzero(mutual)], keep_b[cand[mutual]]

    # Residual ambiguous clusters: explicit greedy walk.
    out_a = np.empty(min(sa.size, sb.size), dtype=np.int64)
    out_b = np.empty_like(out_a)
    ta_list = sa.tolist()
    tb_list = sb.tolist()
    i = j = k = 0
    na, nb = len(ta_list), len(tb_list)
    while i < na and j < nb:
        ta = ta_list[i]
        tb = tb_list[j]
        if ta < tb - half_window:
            i += 1
        elif tb < ta - half_window:
            j += 1
        else:
            out_a[k] = i
            out_b[k] = j
            k += 1
            i += 1
            j += 1
    return keep_a[out_a[:k]], keep_b[out_b[:k]]


def delta_histogram(a: np.ndarray, b: np.ndarray, center: int, half_span: int,
                    bin_width: int) -> np.ndarray:
    """Histogram of pairwise differences (b - a) within center +- half_span."""
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    lo = center - half_span
    hi = center + half_span
    nbins = int((hi - lo) // bin_width) + 1
    hist = np.zeros(nbins, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        return hist
    starts = np.searchsorted(b, a + lo, side="left")
    stops = np.searchsorted(b, a + hi, side="right")
    counts = stops - starts
    if int(counts.sum()) == 0:
        return hist
    # expand [starts, stops) ranges into flat b-indices, chunked to bound memory
    have = np.flatnonzero(counts)
    boundaries = np.searchsorted(np.cumsum(counts[have]),
                                 np.arange(1, int(counts[have].sum()) // 4_000_000 + 1)
                                 * 4_000_000)
    for sel in np.split(have, boundaries):
        if sel.size == 0:
            continue
        c = counts[sel]
        offs = np.repeat(starts[sel], c) + _ranges(c)
        deltas = b[offs] - np.repeat(a[sel], c)
        hist += np.bincount((deltas - lo) // bin_width, minlength=nbins).astype(np.int64)
    return hist


def _ranges(counts: np.ndarray) -> np.ndarray:
    """[0..c0-1, 0..c1-1, ...] for positive counts."""
    ends = np.cumsum(counts)
    idx = np.arange(int(ends[-1]), dtype=np.int64)
    return idx - np.repeat(ends - counts, counts)
