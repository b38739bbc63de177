"""Ride -> vector pipeline.

A route becomes a set of directed (space cell, time bucket) edges weighted by
traversal cost; the data-side vector carries edge costs, the query-side vector
carries ones, so their inner product is exactly the summed cost of the shared
edges. Feature hashing drops the (huge, sparse) edge space to a fixed power-of-
two dimension, and the asymmetric transforms reduce inner-product search to
cosine similarity search.
"""

from __future__ import annotations

import math
from functools import lru_cache
from hashlib import blake2b
from typing import NamedTuple

import numpy as np

from .geo import CellId, GeoPoint, TimeBucket, geohash_encode, time_bucket
from .roadnet import Route


class DegenerateInputError(ValueError):
    """Input has no usable signal (all-zero vectors, zero norm, ...)."""


class SpaceTimeEdge(NamedTuple):
    from_cell: CellId
    from_bucket: TimeBucket
    to_cell: CellId
    to_bucket: TimeBucket


# Sparse vectors are {dimension key -> magnitude} maps; dense vectors are
# fixed-length float64 arrays.
SpaceTimeEdgeSet = dict[SpaceTimeEdge, float]
SparseVector = dict


@lru_cache(maxsize=1 << 17)
def _cell_of(point: GeoPoint, precision: int) -> str:
    return geohash_encode(point, precision)


def st_edge_set(
    route: Route,
    request_time: float,
    space_precision: int = 7,
    time_interval_s: float = 1200.0,
) -> SpaceTimeEdgeSet:
    """Space-time discretized edge set of a route served without delay.

    Each route point maps to (geohash cell, bucket of its no-delay arrival
    time); consecutive duplicate nodes collapse, each surviving transition
    becomes a directed edge costing the segment durations traversed between
    the two nodes, and revisited edges accumulate cost.
    """
    if not route.points:
        raise ValueError("route must contain at least one point")
    arrivals = [request_time]
    for d in route.segment_durations:
        arrivals.append(arrivals[-1] + d)
    nodes = [
        (_cell_of(p, space_precision), time_bucket(t, time_interval_s))
        for p, t in zip(route.points, arrivals)
    ]
    edges: SpaceTimeEdgeSet = {}
    current = nodes[0]
    accum = 0.0
    for i in range(1, len(nodes)):
        accum += route.segment_durations[i - 1]
        if nodes[i] == current:
            continue
        if accum > 0.0:
            edge = SpaceTimeEdge(current[0], current[1], nodes[i][0], nodes[i][1])
            edges[edge] = edges.get(edge, 0.0) + accum
        current = nodes[i]
        accum = 0.0
    return edges


def preprocessing_vector(s: SpaceTimeEdgeSet) -> SparseVector:
    """Data-side vector: one entry per edge, magnitude = edge cost."""
    return dict(s)


def query_vector(s: SpaceTimeEdgeSet) -> SparseVector:
    """Query-side vector: one entry per edge, magnitude 1."""
    return {e: 1.0 for e in s}


def sparse_inner(a: SparseVector, b: SparseVector) -> float:
    if len(b) < len(a):
        a, b = b, a
    return math.fsum(v * b[k] for k, v in a.items() if k in b)


def _key_bytes(key) -> bytes:
    if isinstance(key, bytes):
        return key
    if isinstance(key, str):
        return key.encode()
    return repr(key).encode()


def feature_hash(v: SparseVector, d: int, seed: int = 0) -> np.ndarray:
    """Signed feature hashing into d dimensions (d a power of two).

    Each key is mapped by a seeded hash to an (index, sign) pair and
    magnitudes accumulate, so inner products are unbiased over seeds.
    """
    if d < 2 or d & (d - 1):
        raise ValueError(f"d must be a power of two >= 2, got {d}")
    out = np.zeros(d)
    skey = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    for key, mag in v.items():
        h = int.from_bytes(blake2b(_key_bytes(key), digest_size=8, key=skey).digest(), "big")
        idx = (h >> 1) % d
        sign = 1.0 - 2.0 * (h & 1)
        out[idx] += sign * mag
    return out


def normalize_dataset(vectors, max_norm: float = 0.75):
    """Scale the whole dataset by one factor so the largest l2 norm == max_norm.

    A single positive factor preserves the inner-product ranking against any
    fixed query. Returns (scaled (n, d) array, scale factor).
    """
    mat = np.asarray(vectors, dtype=np.float64)
    if mat.ndim != 2:
        mat = np.stack([np.asarray(v, dtype=np.float64) for v in vectors])
    norms = np.linalg.norm(mat, axis=1)
    top = norms.max() if len(norms) else 0.0
    if top == 0.0:
        raise DegenerateInputError("cannot normalize an all-zero dataset")
    scale = max_norm / top
    return mat * scale, scale


def unit_normalize(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x)
    if n == 0.0:
        raise DegenerateInputError("cannot unit-normalize a zero vector")
    return x / n


def transform_P(x: np.ndarray, norm_terms: int = 2) -> np.ndarray:
    """Data-side MIPS transform: append 1/2 - ||x||^(2^i) for i = 1..norm_terms."""
    x = np.asarray(x, dtype=np.float64)
    norm = float(np.linalg.norm(x))
    if norm >= 1.0:
        raise ValueError(f"data vector norm must be < 1 (norm reduction first), got {norm}")
    tail = [0.5 - norm ** (2 ** i) for i in range(1, norm_terms + 1)]
    return np.concatenate([x, tail])


def transform_Q(x: np.ndarray, norm_terms: int = 2) -> np.ndarray:
    """Query-side MIPS transform: append zeros (expects a unit-norm input)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.any(x):
        raise DegenerateInputError("zero vector cannot be unit-normalized")
    return np.concatenate([x, np.zeros(norm_terms)])


def transform_P_batch(mat: np.ndarray, norm_terms: int = 2) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms >= 1.0):
        raise ValueError("all data vector norms must be < 1 (norm reduction first)")
    tails = [0.5 - norms ** (2 ** i) for i in range(1, norm_terms + 1)]
    return np.hstack([mat, np.stack(tails, axis=1)])
