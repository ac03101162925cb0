# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled edit-distance kernels. Mirrors cserkit._lev_py exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef cnp.uint32_t code_t


cdef Py_ssize_t _lev(const code_t* a, Py_ssize_t n, const code_t* b, Py_ssize_t m,
                     Py_ssize_t* row) noexcept nogil:
    cdef Py_ssize_t i, j, prev, cur, cost, best
    if n == 0:
        return m
    if m == 0:
        return n
    for j in range(m + 1):
        row[j] = j
    for i in range(1, n + 1):
        prev = row[0]
        row[0] = i
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            best = prev + cost
            if row[j] + 1 < best:
                best = row[j] + 1
            if row[j - 1] + 1 < best:
                best = row[j - 1] + 1
            prev = row[j]
            row[j] = best
    return row[m]


def _pack(strings):
    lens = np.fromiter((len(s) for s in strings), dtype=np.intp, count=len(strings))
    offs = np.zeros(len(strings) + 1, dtype=np.intp)
    np.cumsum(lens, out=offs[1:])
    joined = "".join(strings)
    codes = np.frombuffer(joined.encode("utf-32-le"), dtype=np.uint32).copy() if joined \
        else np.zeros(1, dtype=np.uint32)
    return codes, offs


def levenshtein(str a, str b):
    codes, offs = _pack([a, b])
    cdef code_t[::1] c = codes
    cdef Py_ssize_t n = offs[1], m = offs[2] - offs[1]
    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((m + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t d
    try:
        with nogil:
            d = _lev(&c[0], n, &c[0] + n, m, row)
    finally:
        free(row)
    return d


def distance_matrix(list left, list right):
    """All-pairs distances as an int64 array of shape (len(left), len(right))."""
    cdef Py_ssize_t nl = len(left), nr = len(right), i, j, maxlen = 0
    out = np.zeros((nl, nr), dtype=np.int64)
    if nl == 0 or nr == 0:
        return out
    lcodes, loffs_ = _pack(left)
    rcodes, roffs_ = _pack(right)
    cdef code_t[::1] lc = lcodes
    cdef code_t[::1] rc = rcodes
    cdef Py_ssize_t[::1] lo = loffs_
    cdef Py_ssize_t[::1] ro = roffs_
    cdef cnp.int64_t[:, ::1] res = out
    for j in range(nr):
        if ro[j + 1] - ro[j] > maxlen:
            maxlen = ro[j + 1] - ro[j]
    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((maxlen + 1) * sizeof(Py_ssize_t))
    try:
        with nogil:
            for i in range(nl):
                for j in range(nr):
                    res[i, j] = _lev(&lc[0] + lo[i], lo[i + 1] - lo[i],
                                     &rc[0] + ro[j], ro[j + 1] - ro[j], row)
    finally:
        free(row)
    return out


def best_matches(list left, list right):
    """For each left string, the right index with the highest ratio.

    Returns (index, distance, ratio) arrays; index is -1 when ``right`` is
    empty. Ties keep the lowest right index. Pairs whose length bound
    cannot beat the current best are skipped.
    """
    cdef Py_ssize_t nl = len(left), nr = len(right), i, j, la, lb, lmax, lmin, d, maxlen = 0
    cdef double bound, r, best_r
    cdef Py_ssize_t best_j, best_d
    idx = np.full(nl, -1, dtype=np.int64)
    dist = np.zeros(nl, dtype=np.int64)
    ratio = np.zeros(nl, dtype=np.float64)
    if nl == 0 or nr == 0:
        return idx, dist, ratio
    lcodes, loffs_ = _pack(left)
    rcodes, roffs_ = _pack(right)
    cdef code_t[::1] lc = lcodes
    cdef code_t[::1] rc = rcodes
    cdef Py_ssize_t[::1] lo = loffs_
    cdef Py_ssize_t[::1] ro = roffs_
    cdef cnp.int64_t[::1] o_idx = idx
    cdef cnp.int64_t[::1] o_dist = dist
    cdef double[::1] o_ratio = ratio
    for j in range(nr):
        if ro[j + 1] - ro[j] > maxlen:
            maxlen = ro[j + 1] - ro[j]
    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((maxlen + 1) * sizeof(Py_ssize_t))
    try:
        with nogil:
            for i in range(nl):
                la = lo[i + 1] - lo[i]
                best_j = -1
                best_r = -1.0
                best_d = 0
                for j in range(nr):
                    lb = ro[j + 1] - ro[j]
                    lmax = la if la > lb else lb
                    lmin = la if la < lb else lb
                    if lmax == 0:
                        r = 1.0
                        d = 0
                    else:
                        bound = <double> lmin / <double> lmax
                        if bound <= best_r:
                            continue
                        d = _lev(&lc[0] + lo[i], la, &rc[0] + ro[j], lb, row)
                        r = 1.0 - <double> d / <double> lmax
                    if r > best_r:
                        best_r = r
                        best_j = j
                        best_d = d
                o_idx[i] = best_j
                o_dist[i] = best_d
                o_ratio[i] = best_r
    finally:
        free(row)
    return idx, dist, ratio
