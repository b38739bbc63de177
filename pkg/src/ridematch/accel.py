"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Set RIDEMATCH_NO_NUMBA=1 to force the numpy path (the package also falls
back automatically when numba is not importable). Both paths produce
bit-identical results: every output element is the same expression tree,
and tie-breaking in the Dijkstra heap compares (distance, node) in both
implementations.

Kernels:
  rotate3        -- in-place 3-round sign-flip/Hadamard pseudo-rotation,
                    shared sign pattern for all rows (index build side)
  rotate3_multi  -- same, one sign pattern per row (query side)
  top2_abs       -- cross-polytope hash extraction: signed top-2 |coordinate|
  dijkstra_csr   -- single-source shortest path on a CSR graph
"""

from __future__ import annotations

import heapq
import os

import numpy as np

_FORCE_NUMPY = os.environ.get("RIDEMATCH_NO_NUMBA", "").strip() in ("1", "true", "yes")

try:
    if _FORCE_NUMPY:
        raise ImportError("numba disabled by RIDEMATCH_NO_NUMBA")
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:
    njit = None
    NUMBA_AVAILABLE = False

ACTIVE_BACKEND = "numba" if NUMBA_AVAILABLE else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations

def _fht_rows_numpy(x):
    # Unnormalized fast Walsh-Hadamard transform along axis 1, in place.
    n, d = x.shape
    h = 1
    while h < d:
        y = x.reshape(n, d // (2 * h), 2, h)
        a = y[:, :, 0, :].copy()
        b = y[:, :, 1, :]
        y[:, :, 0, :] = a + b
        y[:, :, 1, :] = a - b
        h *= 2


def rotate3_numpy(x, signs):
    """x: (n, d) modified in place; signs: (3, d) of +-1. d a power of two."""
    d = x.shape[1]
    for r in range(3):
        x *= signs[r]
        _fht_rows_numpy(x)
    x *= d ** -1.5


def rotate3_multi_numpy(x, signs):
    """x: (n, d) in place; signs: (n, 3, d), one pattern per row."""
    d = x.shape[1]
    for r in range(3):
        x *= signs[:, r, :]
        _fht_rows_numpy(x)
    x *= d ** -1.5


def top2_abs_numpy(y):
    """Per row of y: hash codes of the largest and second-largest |entry|.

    Returns (code1, code2, margin) where code = 2*index + (entry < 0) and
    margin = |top| - |second|. Ties go to the lowest index.
    """
    n = y.shape[0]
    a = np.abs(y)
    rows = np.arange(n)
    j1 = a.argmax(axis=1)
    v1 = y[rows, j1]
    a[rows, j1] = -np.inf
    j2 = a.argmax(axis=1)
    v2 = y[rows, j2]
    code1 = 2 * j1.astype(np.int64) + (v1 < 0)
    code2 = 2 * j2.astype(np.int64) + (v2 < 0)
    margin = np.abs(v1) - np.abs(v2)
    return code1, code2, margin


def dijkstra_csr_numpy(indptr, indices, weights, source):
    """Single-source shortest paths; returns (dist, pred) arrays.

    Pure-python heap fallback. Pops are ordered by (distance, node) so the
    predecessor tree matches the numba kernel exactly.
    """
    n = len(indptr) - 1
    dist = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = np.zeros(n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            nd = d + weights[e]
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, pred


# ---------------------------------------------------------------------------
# numba implementations

if NUMBA_AVAILABLE:

    @njit(cache=True)
    def _rotate3_nb(x, signs):  # pragma: no cover - exercised via dispatch
        n, d = x.shape
        scale = d ** -1.5
        for r in range(n):
            for rnd in range(3):
                for j in range(d):
                    x[r, j] *= signs[rnd, j]
                h = 1
                while h < d:
                    for i in range(0, d, 2 * h):
                        for j in range(i, i + h):
                            a = x[r, j]
                            b = x[r, j + h]
                            x[r, j] = a + b
                            x[r, j + h] = a - b
                    h *= 2
            for j in range(d):
                x[r, j] *= scale

    @njit(cache=True)
    def _rotate3_multi_nb(x, signs):  # pragma: no cover
        n, d = x.shape
        scale = d ** -1.5
        for r in range(n):
            for rnd in range(3):
                for j in range(d):
                    x[r, j] *= signs[r, rnd, j]
                h = 1
                while h < d:
                    for i in range(0, d, 2 * h):
                        for j in range(i, i + h):
                            a = x[r, j]
                            b = x[r, j + h]
                            x[r, j] = a + b
                            x[r, j + h] = a - b
                    h *= 2
            for j in range(d):
                x[r, j] *= scale

    @njit(cache=True)
    def _top2_abs_nb(y):  # pragma: no cover
        n, d = y.shape
        code1 = np.empty(n, dtype=np.int64)
        code2 = np.empty(n, dtype=np.int64)
        margin = np.empty(n)
        for r in range(n):
            b1 = -1.0
            b2 = -1.0
            j1 = 0
            j2 = 0
            for j in range(d):
                a = abs(y[r, j])
                if a > b1:
                    b2 = b1
                    j2 = j1
                    b1 = a
                    j1 = j
                elif a > b2:
                    b2 = a
                    j2 = j
            code1[r] = 2 * j1 + (1 if y[r, j1] < 0 else 0)
            code2[r] = 2 * j2 + (1 if y[r, j2] < 0 else 0)
            margin[r] = b1 - b2
        return code1, code2, margin

    @njit(cache=True)
    def _dijkstra_csr_nb(indptr, indices, weights, source):  # pragma: no cover
        n = len(indptr) - 1
        dist = np.full(n, np.inf)
        pred = np.full(n, -1, dtype=np.int64)
        done = np.zeros(n, dtype=np.uint8)
        # binary heap ordered by (dist, node)
        hd = np.empty(n * 4 + 1)
        hn = np.empty(n * 4 + 1, dtype=np.int64)
        dist[source] = 0.0
        hd[0] = 0.0
        hn[0] = source
        size = 1
        while size > 0:
            d = hd[0]
            u = hn[0]
            size -= 1
            hd[0] = hd[size]
            hn[0] = hn[size]
            # sift down
            i = 0
            while True:
                l = 2 * i + 1
                r = l + 1
                s = i
                if l < size and (hd[l] < hd[s] or (hd[l] == hd[s] and hn[l] < hn[s])):
                    s = l
                if r < size and (hd[r] < hd[s] or (hd[r] == hd[s] and hn[r] < hn[s])):
                    s = r
                if s == i:
                    break
                hd[i], hd[s] = hd[s], hd[i]
                hn[i], hn[s] = hn[s], hn[i]
                i = s
            if done[u]:
                continue
            done[u] = True
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                nd = d + weights[e]
                if nd < dist[v]:
                    dist[v] = nd
                    pred[v] = u
                    if size >= len(hd):
                        hd2 = np.empty(len(hd) * 2)
                        hn2 = np.empty(len(hd) * 2, dtype=np.int64)
                        hd2[:size] = hd[:size]
                        hn2[:size] = hn[:size]
                        hd = hd2
                        hn = hn2
                    # sift up
                    i = size
                    hd[i] = nd
                    hn[i] = v
                    size += 1
                    while i > 0:
                        p = (i - 1) // 2
                        if hd[i] < hd[p] or (hd[i] == hd[p] and hn[i] < hn[p]):
                            hd[i], hd[p] = hd[p], hd[i]
                            hn[i], hn[p] = hn[p], hn[i]
                            i = p
                        else:
                            break
        return dist, pred

    def rotate3(x, signs):
        _rotate3_nb(x, signs)

    def rotate3_multi(x, signs):
        _rotate3_multi_nb(x, signs)

    top2_abs = _top2_abs_nb

    def dijkstra_csr(indptr, indices, weights, source):
        return _dijkstra_csr_nb(indptr, indices, weights, np.int64(source))

else:
    rotate3 = rotate3_numpy
    rotate3_multi = rotate3_multi_numpy
    top2_abs = top2_abs_numpy
    dijkstra_csr = dijkstra_csr_numpy
