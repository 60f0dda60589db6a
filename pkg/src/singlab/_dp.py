"""Numba kernels for the subset-count table of a discrete dataset.

``table[N, s]`` is the log of the number of ways to pick ``N`` of the
observations (as labelled items) so that their values sum to ``s``.  It is
built one value class at a time; adding ``c`` copies of value ``m`` is a
convolution with ``C(c, j)`` along the lines ``s - m N = const``.  Each line
is gathered into a contiguous buffer so the inner loop is a stride-1
log-sum-exp.
"""

from math import exp, lgamma, log

import numba
import numpy as np


@numba.njit(cache=True)
def _lchoose_row(c):
    out = np.empty(c + 1)
    for j in range(c + 1):
        out[j] = lgamma(c + 1.0) - lgamma(j + 1.0) - lgamma(c - j + 1.0)
    return out


@numba.njit(cache=True)
def _add_class(L, nmax, smax, m, c):
    lc = _lchoose_row(c)
    NN = nmax + c
    SS = smax + m * c
    out = np.full((NN + 1, SS + 1), -np.inf)
    line = np.empty(nmax + 1)
    for t in range(-m * nmax, smax + 1):
        nonempty = False
        for N in range(nmax + 1):
            s = t + m * N
            if s < 0 or s > smax:
                line[N] = -np.inf
            else:
                line[N] = L[N, s]
                if line[N] != -np.inf:
                    nonempty = True
        if not nonempty:
            continue
        for N in range(NN + 1):
            s = t + m * N
            if s < 0 or s > SS:
                continue
            jlo = max(0, N - nmax)
            jhi = min(c, N)
            mx = -np.inf
            acc = 0.0
            for j in range(jlo, jhi + 1):
                v = line[N - j]
                if v == -np.inf:
                    continue
                v += lc[j]
                # single-pass log-sum-exp
                if v > mx:
                    acc = acc * exp(mx - v) + 1.0
                    mx = v
                else:
                    acc += exp(v - mx)
            if mx != -np.inf:
                out[N, s] = mx + log(acc)
    return out, NN, SS


def subset_count_table(counts) -> np.ndarray:
    """Log subset-count table for value histogram ``counts`` (index = value)."""
    counts = np.asarray(counts, dtype=np.int64)
    L = np.zeros((1, 1))
    nmax = smax = 0
    # largest classes first keeps the intermediate tables small
    for m in np.argsort(-counts, kind="stable"):
        c = int(counts[m])
        if c == 0:
            continue
        L, nmax, smax = _add_class(L, nmax, smax, int(m), c)
    n = int(counts.sum())
    S = int((np.arange(len(counts)) * counts).sum())
    full = np.full((n + 1, S + 1), -np.inf)
    full[: L.shape[0], : L.shape[1]] = L[: n + 1, : S + 1]
    return full
