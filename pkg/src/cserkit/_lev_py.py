"""Pure-Python edit-distance kernels; the fallback for the compiled _lev module."""

from __future__ import annotations

import numpy as np


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def distance_matrix(left: list[str], right: list[str]) -> np.ndarray:
    out = np.zeros((len(left), len(right)), dtype=np.int64)
    for i, a in enumerate(left):
        for j, b in enumerate(right):
            out[i, j] = levenshtein(a, b)
    return out


def best_matches(left: list[str], right: list[str]):
    nl = len(left)
    idx = np.full(nl, -1, dtype=np.int64)
    dist = np.zeros(nl, dtype=np.int64)
    ratio = np.zeros(nl, dtype=np.float64)
    if not right:
        return idx, dist, ratio
    for i, a in enumerate(left):
        best_j, best_d, best_r = -1, 0, -1.0
        for j, b in enumerate(right):
            lmax = max(len(a), len(b))
            if lmax == 0:
                d, r = 0, 1.0
            else:
                if min(len(a), len(b)) / lmax <= best_r:
                    continue
                d = levenshtein(a, b)
                r = 1.0 - d / lmax
            if r > best_r:
                best_j, best_d, best_r = j, d, r
        idx[i], dist[i], ratio[i] = best_j, best_d, best_r
    return idx, dist, ratio
