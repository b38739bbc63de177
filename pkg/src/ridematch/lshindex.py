"""Cross-polytope LSH over transformed ride vectors.

A hash function pseudo-rotates a vector (three sign-flip/Hadamard rounds) and
returns the nearest signed basis vector: 2*argmax|y| + (1 if that coordinate
is negative). Per table, `hash_bits` function outputs are mixed into one
64-bit bucket key with seeded odd multipliers, which makes multi-probe a
matter of O(1) key deltas. Retrieved candidates are re-scored by exact inner
product, so only the candidate set is approximate, never the scores.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from hashlib import blake2b

import numpy as np

from . import accel
from .represent import (
    DegenerateInputError,
    feature_hash,
    normalize_dataset,
    preprocessing_vector,
    query_vector,
    st_edge_set,
    transform_P_batch,
    transform_Q,
    unit_normalize,
)

_U64 = np.uint64


def _child_seed(seed: int, label: str) -> int:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    return int.from_bytes(blake2b(label.encode(), digest_size=8, key=key).digest(), "big")


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def _pad(mat: np.ndarray, d_padded: int) -> np.ndarray:
    n, d = mat.shape
    if d == d_padded:
        return np.ascontiguousarray(mat, dtype=np.float64)
    out = np.zeros((n, d_padded))
    out[:, :d] = mat
    return out


def _codes_from_rotated(buf: np.ndarray, cp_dim: int):
    """Hash codes from a rotated buffer, restricted to the first cp_dim coords.

    cp_dim tunes per-function granularity (2*cp_dim outcomes): full dimension
    is the classic cross-polytope hash, cp_dim=1 degenerates to a hyperplane
    sign bit. The runner-up code and margin drive multi-probe.
    """
    if cp_dim == 1:
        y = buf[:, 0]
        codes = (y < 0).astype(np.int64)
        return codes, 1 - codes, np.abs(y)
    return accel.top2_abs(np.ascontiguousarray(buf[:, :cp_dim]))


class CpHashFunction:
    """One cross-polytope hash: seeded pseudo-rotation, then nearest signed axis.

    The rotation is three rounds of (sign-flip diagonal, normalized Hadamard
    transform) and is exactly orthogonal. seed=None keeps the rotation at the
    identity, the test seam for the argmax/sign rule. cp_dim < d restricts
    the argmax to the first cp_dim rotated coordinates (the low-dimensional
    cross-polytope variant used to trade sharpness for collision rate).
    """

    def __init__(self, dim: int, seed: int | None = 0, cp_dim: int | None = None):
        self.dim = dim
        self.d_padded = _next_pow2(dim)
        self.cp_dim = self.d_padded if cp_dim is None else cp_dim
        if not 1 <= self.cp_dim <= self.d_padded:
            raise ValueError(f"cp_dim must be in [1, {self.d_padded}], got {cp_dim}")
        if seed is None:
            self.signs = None
        else:
            rng = np.random.default_rng((seed, 0xC9))
            self.signs = rng.integers(0, 2, size=(3, self.d_padded)).astype(np.float64) * 2.0 - 1.0

    @classmethod
    def identity(cls, dim: int) -> "CpHashFunction":
        return cls(dim, seed=None)

    def rotate(self, x: np.ndarray) -> np.ndarray:
        arr = np.asarray(x, dtype=np.float64)
        buf = _pad(np.atleast_2d(arr), self.d_padded).copy()
        if self.signs is not None:
            accel.rotate3(buf, self.signs)
        return buf if arr.ndim > 1 else buf[0]

    def hash_batch(self, mat: np.ndarray):
        """Per row: (code, runner-up code, margin between top two |coords|)."""
        buf = _pad(np.asarray(mat, dtype=np.float64), self.d_padded).copy()
        if self.signs is not None:
            accel.rotate3(buf, self.signs)
        return _codes_from_rotated(buf, self.cp_dim)


def cp_hash(h: CpHashFunction, x: np.ndarray) -> int:
    """Hash one vector to an integer in [0, 2 * cp_dim)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.any(x):
        raise ValueError("cannot hash a zero vector")
    codes, _, _ = h.hash_batch(x[None, :])
    return int(codes[0])


def suggest_params(n: int, k: int, failure_prob: float, rho_estimate: float) -> tuple[int, int]:
    """(tables, hash_bits) from the amplification analysis, clamped to sane ranges."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    if not 0.0 < failure_prob < 1.0:
        raise ValueError(f"failure_prob must be in (0, 1), got {failure_prob}")
    if not 0.0 < rho_estimate < 1.0:
        raise ValueError(f"rho_estimate must be in (0, 1), got {rho_estimate}")
    hash_bits = min(20, max(4, math.ceil(math.log2(n))))
    tables = min(512, max(8, math.ceil(n**rho_estimate * math.log(k / failure_prob))))
    return tables, hash_bits


@dataclass
class LshConfig:
    tables: int = 50
    hash_bits: int = 10
    probes: int = 4
    dim: int = 64
    cp_dim: int = 1
    norm_terms: int = 2
    max_norm: float = 0.75
    seed: int = 0
    k: int = 10
    center: bool = False


@dataclass
class MatchSearchSummary:
    n_rides: int
    n_indexed: int
    degenerate_ids: list[int]
    candidates_per_query: np.ndarray
    raw_retrieved_per_query: np.ndarray

    @property
    def mean_candidates(self) -> float:
        a = self.candidates_per_query
        return float(a.mean()) if len(a) else 0.0

    @property
    def mean_raw_retrieved(self) -> float:
        a = self.raw_retrieved_per_query
        return float(a.mean()) if len(a) else 0.0


class LshIndex:
    """L amplified hash tables over stored data vectors, with exact re-scoring.

    Immutable after construction. Tables are stored as (sorted unique keys,
    bucket offsets, entry positions) triples, so lookups are searchsorted
    probes rather than per-bucket dicts.
    """

    _QUERY_CHUNK = 1024

    def __init__(
        self,
        ids,
        matrix,
        tables: int,
        hash_bits: int,
        seed: int = 0,
        route_ids=None,
        cp_dim: int | None = None,
    ):
        if len(ids) == 0:
            raise DegenerateInputError("cannot build an index over no vectors")
        if tables < 1 or hash_bits < 1:
            raise ValueError("tables and hash_bits must be >= 1")
        self.ids = np.asarray(ids, dtype=np.int64)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if np.any(np.linalg.norm(self.matrix, axis=1) == 0.0):
            raise ValueError("cannot index zero vectors")
        self.routes = (
            np.zeros(len(self.ids), dtype=np.int32)
            if route_ids is None
            else np.asarray(route_ids, dtype=np.int32)
        )
        self.tables = tables
        self.hash_bits = hash_bits
        self.seed = seed
        self.dim_in = self.matrix.shape[1]
        self.d_padded = _next_pow2(self.dim_in)
        self.cp_dim = self.d_padded if cp_dim is None else cp_dim
        if not 1 <= self.cp_dim <= self.d_padded:
            raise ValueError(f"cp_dim must be in [1, {self.d_padded}], got {cp_dim}")

        n_fns = tables * hash_bits
        rng = np.random.default_rng((seed, 0x51))
        self.signs = rng.integers(0, 2, size=(n_fns, 3, self.d_padded)).astype(np.float64) * 2.0 - 1.0
        rng2 = np.random.default_rng((seed, 0x52))
        self.mults = rng2.integers(1, 2**63, size=(tables, hash_bits), dtype=np.uint64) | _U64(1)

        codes, _, _ = self._hash_all(self.matrix, want_probes=False)
        self._stores = []
        for tbl in range(tables):
            keys = self._mix(codes[:, tbl, :], tbl)
            order = np.argsort(keys, kind="stable").astype(np.int64)
            skeys = keys[order]
            newgrp = np.concatenate([[True], skeys[1:] != skeys[:-1]])
            uniq = skeys[newgrp]
            offsets = np.concatenate([np.nonzero(newgrp)[0], [len(skeys)]]).astype(np.int64)
            self._stores.append((uniq, offsets, order))

    def _hash_all(self, mat, want_probes: bool):
        """Hash every row under every (table, function); (n, L, t) arrays."""
        n = mat.shape[0]
        n_fns = self.tables * self.hash_bits
        buf0 = _pad(mat, self.d_padded)
        codes = np.empty((n, n_fns), dtype=np.int32)
        alts = np.empty((n, n_fns), dtype=np.int32) if want_probes else None
        margins = np.empty((n, n_fns), dtype=np.float32) if want_probes else None
        for f in range(n_fns):
            buf = buf0.copy()
            accel.rotate3(buf, self.signs[f])
            c1, c2, mg = _codes_from_rotated(buf, self.cp_dim)
            codes[:, f] = c1
            if want_probes:
                alts[:, f] = c2
                margins[:, f] = mg
        shape = (n, self.tables, self.hash_bits)
        return (
            codes.reshape(shape),
            alts.reshape(shape) if want_probes else None,
            margins.reshape(shape) if want_probes else None,
        )

    def _mix(self, codes_tbl, tbl: int):
        return (codes_tbl.astype(np.uint64) * self.mults[tbl][None, :]).sum(axis=1, dtype=np.uint64)

    @staticmethod
    def _probe_keys(base, deltas, margins, probes: int):
        """(n, probes) probe keys plus validity mask, best-first by margin sum.

        Probe 0 is the base bucket; later probes substitute runner-up codes
        for the smallest-margin functions. The order is exact: closed form
        covers probes <= 4, a per-row subset heap handles larger counts.
        """
        n, t = margins.shape
        if probes <= 1:
            return base[:, None].copy(), np.ones((n, 1), dtype=bool)
        if probes <= 4:
            ms = np.argsort(margins, axis=1, kind="stable")
            rows = np.arange(n)
            cand_sums = np.full((n, 4), np.inf)
            cand_keys = np.zeros((n, 4), dtype=np.uint64)
            d1 = deltas[rows, ms[:, 0]]
            cand_sums[:, 0] = margins[rows, ms[:, 0]]
            cand_keys[:, 0] = base + d1
            if t >= 2:
                d2 = deltas[rows, ms[:, 1]]
                cand_sums[:, 1] = margins[rows, ms[:, 1]]
                cand_keys[:, 1] = base + d2
                cand_sums[:, 2] = cand_sums[:, 0] + cand_sums[:, 1]
                cand_keys[:, 2] = base + d1 + d2
            if t >= 3:
                cand_sums[:, 3] = margins[rows, ms[:, 2]]
                cand_keys[:, 3] = base + deltas[rows, ms[:, 2]]
            sel = np.argsort(cand_sums, axis=1, kind="stable")[:, : probes - 1]
            keys = np.concatenate([base[:, None], np.take_along_axis(cand_keys, sel, axis=1)], axis=1)
            valid = np.concatenate(
                [np.ones((n, 1), dtype=bool), np.isfinite(np.take_along_axis(cand_sums, sel, axis=1))],
                axis=1,
            )
            return keys, valid
        keys = np.zeros((n, probes), dtype=np.uint64)
        valid = np.zeros((n, probes), dtype=bool)
        for r in range(n):
            order = np.argsort(margins[r], kind="stable")
            m = margins[r, order].astype(np.float64)
            keys[r, 0] = base[r]
            valid[r, 0] = True
            got = 1
            # best-first over flip subsets: extend-with-next or replace-last
            heap = [(m[0], (0,))]
            while heap and got < probes:
                cost, subset = heapq.heappop(heap)
                key = base[r]
                for rank in subset:
                    key = key + deltas[r, order[rank]]
                keys[r, got] = key
                valid[r, got] = True
                got += 1
                last = subset[-1]
                if last + 1 < t:
                    heapq.heappush(heap, (cost + m[last + 1], subset + (last + 1,)))
                    heapq.heappush(heap, (cost - m[last] + m[last + 1], subset[:-1] + (last + 1,)))
        return keys, valid

    def query_batch(self, qmat, k: int, probes_per_table: int = 1, exclude_ids=None):
        """Top-k (ride id, exact inner product) per query row, descending.

        Returns (results, distinct_candidates_per_query, raw_retrieved_per_query).
        """
        if k < 1 or probes_per_table < 1:
            raise ValueError("k and probes_per_table must be >= 1")
        qmat = np.atleast_2d(np.asarray(qmat, dtype=np.float64))
        nq = qmat.shape[0]
        results: list[list[tuple[int, float]]] = []
        counts = np.empty(nq, dtype=np.int64)
        raws = np.empty(nq, dtype=np.int64)
        for lo in range(0, nq, self._QUERY_CHUNK):
            hi = min(lo + self._QUERY_CHUNK, nq)
            excl = None if exclude_ids is None else np.asarray(exclude_ids, dtype=np.int64)[lo:hi]
            res, cnt, raw = self._query_chunk(qmat[lo:hi], k, probes_per_table, excl)
            results.extend(res)
            counts[lo:hi] = cnt
            raws[lo:hi] = raw
        return results, counts, raws

    def _query_chunk(self, qmat, k, probes, exclude_ids):
        nq = qmat.shape[0]
        codes, alts, margins = self._hash_all(qmat, want_probes=True)
        raw_counts = np.zeros(nq, dtype=np.int64)
        all_q, all_pos = [], []
        for tbl in range(self.tables):
            uniq, offsets, entry_pos = self._stores[tbl]
            v = codes[:, tbl, :].astype(np.uint64) * self.mults[tbl][None, :]
            a = alts[:, tbl, :].astype(np.uint64) * self.mults[tbl][None, :]
            base = v.sum(axis=1, dtype=np.uint64)
            deltas = a - v
            pkeys, pvalid = self._probe_keys(base, deltas, margins[:, tbl, :], probes)
            n_probe = pkeys.shape[1]
            flat = pkeys.ravel()
            idx = np.searchsorted(uniq, flat)
            idxc = np.minimum(idx, len(uniq) - 1)
            hit = (uniq[idxc] == flat) & pvalid.ravel()
            starts = np.where(hit, offsets[idxc], 0)
            lens = np.where(hit, offsets[idxc + 1] - offsets[idxc], 0)
            total = int(lens.sum())
            if total == 0:
                continue
            q_of_flat = np.repeat(np.arange(nq), n_probe)
            np.add.at(raw_counts, q_of_flat, lens)
            cum = np.cumsum(lens)
            flat_idx = np.arange(total) + np.repeat(starts - np.concatenate([[0], cum[:-1]]), lens)
            all_pos.append(entry_pos[flat_idx])
            all_q.append(np.repeat(q_of_flat, lens))
        results: list[list[tuple[int, float]]] = [[] for _ in range(nq)]
        if not all_pos:
            return results, np.zeros(nq, dtype=np.int64), raw_counts
        pos = np.concatenate(all_pos)
        qidx = np.concatenate(all_q)
        if exclude_ids is not None:
            keep = self.ids[pos] != exclude_ids[qidx]
            pos = pos[keep]
            qidx = qidx[keep]
        combo = np.unique(qidx * len(self.ids) + pos)
        qidx = combo // len(self.ids)
        pos = combo % len(self.ids)
        distinct = np.bincount(qidx, minlength=nq).astype(np.int64)
        scores = np.empty(len(pos))
        for lo in range(0, len(pos), 200_000):
            hi = min(lo + 200_000, len(pos))
            scores[lo:hi] = np.einsum("ij,ij->i", self.matrix[pos[lo:hi]], qmat[qidx[lo:hi]])
        bounds = np.searchsorted(qidx, np.arange(nq + 1))
        for qi in range(nq):
            s, e = bounds[qi], bounds[qi + 1]
            if s == e:
                continue
            cids = self.ids[pos[s:e]]
            cscores = scores[s:e]
            croutes = self.routes[pos[s:e]]
            order = np.lexsort((croutes, -cscores, cids))
            best: dict[int, float] = {}
            for j in order:
                rid = int(cids[j])
                if rid not in best:  # best route per ride id
                    best[rid] = float(cscores[j])
            ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
            results[qi] = ranked
        return results, distinct, raw_counts


def build_index(
    vectors, tables: int, hash_bits: int, seed: int = 0, route_ids=None, cp_dim: int | None = None
) -> LshIndex:
    """Build an index from (ride id, dense vector) pairs; deterministic under seed."""
    vectors = list(vectors)
    if not vectors:
        raise DegenerateInputError("cannot build an index over no vectors")
    ids = [v[0] for v in vectors]
    matrix = np.stack([np.asarray(v[1], dtype=np.float64) for v in vectors])
    return LshIndex(ids, matrix, tables, hash_bits, seed, route_ids=route_ids, cp_dim=cp_dim)


def query(
    index: LshIndex,
    q: np.ndarray,
    k: int,
    probes_per_table: int = 1,
    exclude_id: int | None = None,
) -> list[tuple[int, float]]:
    """Top-k (ride id, score) for one query vector, descending score."""
    q = np.asarray(q, dtype=np.float64)
    if not np.any(q):
        raise ValueError("cannot query with a zero vector")
    excl = None if exclude_id is None else np.array([exclude_id], dtype=np.int64)
    results, _, _ = index.query_batch(q[None, :], k, probes_per_table, exclude_ids=excl)
    return results[0]


def find_potential_matches(
    rides,
    cfg: LshConfig | None = None,
    space_precision: int = 7,
    time_interval_s: float = 1200.0,
) -> tuple[dict[int, list[tuple[int, float]]], MatchSearchSummary]:
    """End-to-end search: top-k potential co-riders for every ride.

    Pipeline: space-time edge sets -> data/query sparse vectors -> feature
    hashing -> global data-norm scaling -> asymmetric transforms -> index
    build -> per-ride multi-probe query. Rides whose route collapses to an
    empty edge set (or hashes to a zero query) get an empty match list and
    are flagged in the summary.
    """
    rides = list(rides)
    cfg = cfg or LshConfig()
    fh_seed = _child_seed(cfg.seed, "feature-hash")
    index_seed = _child_seed(cfg.seed, "index")

    entry_ids: list[int] = []
    entry_routes: list[int] = []
    sparse_rows = []
    query_sparse: dict[int, dict] = {}
    degenerate: list[int] = []
    for ride in rides:
        sets = [
            st_edge_set(rt, ride.request_time, space_precision, time_interval_s)
            for rt in ride.routes
        ]
        if not sets[0]:
            degenerate.append(ride.id)
            continue
        query_sparse[ride.id] = query_vector(sets[0])
        for j, s in enumerate(sets):
            if s:
                entry_ids.append(ride.id)
                entry_routes.append(j)
                sparse_rows.append(preprocessing_vector(s))

    matches: dict[int, list[tuple[int, float]]] = {r.id: [] for r in rides}
    if not sparse_rows:
        empty = np.zeros(0, dtype=np.int64)
        return matches, MatchSearchSummary(len(rides), 0, sorted(degenerate), empty, empty)

    data = np.stack([feature_hash(v, cfg.dim, fh_seed) for v in sparse_rows])
    center = data.mean(axis=0) if cfg.center else None
    if center is not None:
        data = data - center
    data, _scale = normalize_dataset(data, cfg.max_norm)
    pmat = transform_P_batch(data, cfg.norm_terms)
    index = LshIndex(
        entry_ids,
        pmat,
        cfg.tables,
        cfg.hash_bits,
        index_seed,
        route_ids=entry_routes,
        cp_dim=cfg.cp_dim,
    )

    query_order = [r.id for r in rides if r.id in query_sparse]
    qrows = []
    for rid in query_order:
        qv = feature_hash(query_sparse[rid], cfg.dim, fh_seed)
        if center is not None:
            qv = qv - center
        try:
            qrows.append(unit_normalize(qv))
        except DegenerateInputError:
            degenerate.append(rid)
            qrows.append(None)
    live = [i for i, qv in enumerate(qrows) if qv is not None]
    counts = np.zeros(len(live), dtype=np.int64)
    raws = np.zeros(len(live), dtype=np.int64)
    if live:
        qmat = np.stack([transform_Q(qrows[i], cfg.norm_terms) for i in live])
        excl = np.array([query_order[i] for i in live], dtype=np.int64)
        results, counts, raws = index.query_batch(qmat, cfg.k, cfg.probes, exclude_ids=excl)
        for i, res in zip(live, results):
            matches[query_order[i]] = res
    summary = MatchSearchSummary(
        n_rides=len(rides),
        n_indexed=len(entry_ids),
        degenerate_ids=sorted(degenerate),
        candidates_per_query=counts,
        raw_retrieved_per_query=raws,
    )
    return matches, summary
