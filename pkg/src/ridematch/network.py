"""Shareability network construction and maximum-weight matching.

Nodes are rides; an undirected edge appears when either ride proposed the
other, weighted by the exact duration-based matching utility. Total matching
utility comes from an exact blossom solution of the resulting non-bipartite
matching instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .roadnet import RoadNetwork, RoutingLedger
from .trips import Ride
from .utility import DEFAULT_MAX_DELAY_S, pairwise_utilities


@dataclass
class ShareabilityNetwork:
    nodes: list[int]
    edges: list[tuple[int, int, float]]  # (u, v, weight seconds), u < v, weight > 0
    provenance: dict[tuple[int, int], str] = field(default_factory=dict)
    evaluated_pairs: int = 0


@dataclass
class MatchingResult:
    pairs: list[tuple[int, int]]
    total_utility: float
    unmatched: list[int]


def build_network(
    rides: list[Ride],
    proposals: dict[int, list],
    net: RoadNetwork,
    max_delay_s: float = DEFAULT_MAX_DELAY_S,
    ledger: RoutingLedger | None = None,
    provenance: str = "",
) -> ShareabilityNetwork:
    """Symmetrize proposals, weight each distinct pair exactly, drop zeros.

    Proposal lists may hold ride ids or (id, score) tuples. Each distinct
    pair is evaluated once and charged as 6 batched routing calls.
    """
    idx_of = {r.id: i for i, r in enumerate(rides)}
    pair_set = set()
    for rid, cands in proposals.items():
        if rid not in idx_of:
            raise ValueError(f"proposal references unknown ride id {rid}")
        for cand in cands:
            cid = cand[0] if isinstance(cand, tuple) else cand
            if cid not in idx_of:
                raise ValueError(f"proposal references unknown ride id {cid}")
            if cid == rid:
                continue
            pair_set.add((min(rid, cid), max(rid, cid)))
    pairs = sorted(pair_set)
    nodes = [r.id for r in rides]
    if not pairs:
        return ShareabilityNetwork(nodes=nodes, edges=[], evaluated_pairs=0)
    pair_idx = np.array([[idx_of[u], idx_of[v]] for u, v in pairs], dtype=np.int64)
    weights = pairwise_utilities(net, rides, pair_idx, max_delay_s, ledger)
    edges = []
    prov = {}
    for (u, v), w in zip(pairs, weights):
        if w > 0.0:
            edges.append((u, v, float(w)))
            prov[(u, v)] = provenance
    return ShareabilityNetwork(nodes=nodes, edges=edges, provenance=prov, evaluated_pairs=len(pairs))


def dump_network_csv(g: ShareabilityNetwork, path) -> None:
    """Debug dump: one `u,v,weight_s,provenance` line per edge."""
    with open(path, "w") as f:
        f.write("u,v,weight_s,provenance\n")
        for u, v, w in g.edges:
            f.write(f"{u},{v},{w:.6g},{g.provenance.get((u, v), '')}\n")


def max_weight_matching(g: ShareabilityNetwork) -> MatchingResult:
    """Exact maximum-weight matching (blossom); pairs are vertex-disjoint."""
    graph = nx.Graph()
    graph.add_nodes_from(g.nodes)
    wmap = {}
    for u, v, w in sorted(g.edges):
        graph.add_edge(u, v, weight=w)
        wmap[(u, v)] = w
    mate = nx.max_weight_matching(graph, maxcardinality=False)
    pairs = sorted((min(u, v), max(u, v)) for u, v in mate)
    seen: set[int] = set()
    for u, v in pairs:
        if u in seen or v in seen or u == v:
            raise AssertionError("matching is not vertex-disjoint")
        seen.add(u)
        seen.add(v)
    total = float(sum(wmap[p] for p in pairs))
    unmatched = sorted(set(g.nodes) - seen)
    return MatchingResult(pairs=pairs, total_utility=total, unmatched=unmatched)


def greedy_matching(g: ShareabilityNetwork) -> MatchingResult:
    """1/2-approximate fallback for timing runs beyond the exact-matching cap."""
    seen: set[int] = set()
    pairs = []
    total = 0.0
    for u, v, w in sorted(g.edges, key=lambda e: (-e[2], e[0], e[1])):
        if u not in seen and v not in seen:
            pairs.append((u, v))
            seen.add(u)
            seen.add(v)
            total += w
    return MatchingResult(pairs=sorted(pairs), total_utility=total, unmatched=sorted(set(g.nodes) - seen))


def optimal_utility(
    rides: list[Ride],
    net: RoadNetwork,
    max_delay_s: float = DEFAULT_MAX_DELAY_S,
    ledger: RoutingLedger | None = None,
    cap: int = 3000,
    greedy: bool = False,
) -> MatchingResult:
    """Matching over the complete pairwise network: the unbounded-time optimum."""
    n = len(rides)
    if n > cap and not greedy:
        raise ValueError(
            f"optimal baseline is O(n^2) and capped at {cap} rides (got {n}); "
            "lower the load or pass greedy=True for a timing-only run"
        )
    iu, ju = np.triu_indices(n, k=1)
    pairs = np.stack([iu, ju], axis=1)
    weights = np.empty(len(pairs))
    for lo in range(0, len(pairs), 1_000_000):
        hi = min(lo + 1_000_000, len(pairs))
        weights[lo:hi] = pairwise_utilities(net, rides, pairs[lo:hi], max_delay_s, ledger)
    ids = [r.id for r in rides]
    g = ShareabilityNetwork(
        nodes=ids,
        edges=[
            (min(ids[i], ids[j]), max(ids[i], ids[j]), float(w))
            for (i, j), w in zip(pairs, weights)
            if w > 0.0
        ],
        evaluated_pairs=len(pairs),
    )
    return greedy_matching(g) if greedy else max_weight_matching(g)
