"""Road network model and router.

A synthetic Manhattan-style grid stands in for a real routing service: it keeps
the O(n^2) ground-truth evaluation affordable and removes the network
dependency. The route()/batch_route() signatures are the seam where a real
routing client could be substituted.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from . import accel
from .geo import GeoPoint, haversine_km_arrays

METERS_PER_DEGREE_LAT = 111_320.0

# Alternate-route search: used edges are penalized by this factor before
# re-solving, and a candidate is kept only if its true duration stays within
# the acceptance ratio of the optimum and its edge set differs.
ALT_EDGE_PENALTY = 1.5
ALT_ACCEPT_RATIO = 1.2

BATCH_SIZE = 100
BATCH_LATENCY_MS = 10.0


class NoRouteError(RuntimeError):
    """No path exists between the snapped endpoints."""


@dataclass
class Route:
    """An ordered point sequence with per-segment traversal durations (seconds)."""

    points: list[GeoPoint]
    segment_durations: list[float]
    total_duration: float
    nodes: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(self.segment_durations) != len(self.points) - 1:
            raise ValueError("need exactly one duration per consecutive point pair")
        if abs(self.total_duration - math.fsum(self.segment_durations)) > 1e-9:
            raise ValueError("total_duration must equal the sum of segment durations")


class RoutingLedger:
    """Counts logical routing-service calls: 10 ms per batch of <= 100 requests.

    Thread-safe; concurrent charges never lose counts.
    """

    def __init__(self):
        self.call_count = 0
        self.batch_count = 0
        self.simulated_latency_ms = 0.0
        self._lock = threading.Lock()

    def charge(self, n_requests: int):
        if n_requests <= 0:
            return
        batches = -(-n_requests // BATCH_SIZE)
        with self._lock:
            self.call_count += n_requests
            self.batch_count += batches
            self.simulated_latency_ms += BATCH_LATENCY_MS * batches


class RoadNetwork:
    """Directed road graph in CSR form with per-edge durations and lengths.

    Immutable after construction; shortest-path results are memoized per
    source node so repeated queries are cheap.
    """

    def __init__(self, node_lat, node_lon, edges_u, edges_v, durations, lengths):
        self.node_lat = np.asarray(node_lat, dtype=np.float64)
        self.node_lon = np.asarray(node_lon, dtype=np.float64)
        self.n_nodes = len(self.node_lat)
        u = np.asarray(edges_u, dtype=np.int64)
        v = np.asarray(edges_v, dtype=np.int64)
        dur = np.asarray(durations, dtype=np.float64)
        ln = np.asarray(lengths, dtype=np.float64)
        if np.any(dur <= 0):
            raise ValueError("all edge durations must be positive")
        order = np.lexsort((v, u))
        self.edge_u = u[order]
        self.edge_v = v[order]
        self.edge_duration = dur[order]
        self.edge_length = ln[order]
        self.indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.add.at(self.indptr, self.edge_u + 1, 1)
        self.indptr = np.cumsum(self.indptr)
        self._sssp_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._dmat: np.ndarray | None = None
        # Demand anchor nodes (set by builders that know the city structure).
        self.hubs: np.ndarray | None = None

    def node_point(self, i: int) -> GeoPoint:
        return GeoPoint(float(self.node_lat[i]), float(self.node_lon[i]))

    def nearest_node(self, p: GeoPoint) -> int:
        d = haversine_km_arrays(self.node_lat, self.node_lon, p.lat, p.lon)
        return int(np.argmin(d))

    def nearest_nodes(self, lats, lons) -> np.ndarray:
        lats = np.asarray(lats, dtype=np.float64)
        out = np.empty(len(lats), dtype=np.int64)
        for i in range(len(lats)):
            d = haversine_km_arrays(self.node_lat, self.node_lon, lats[i], lons[i])
            out[i] = np.argmin(d)
        return out

    def shortest_from(self, source: int) -> tuple[np.ndarray, np.ndarray]:
        cached = self._sssp_cache.get(source)
        if cached is None:
            cached = accel.dijkstra_csr(self.indptr, self.edge_v, self.edge_duration, source)
            self._sssp_cache[source] = cached
        return cached

    def distance_matrix(self) -> np.ndarray:
        """All-pairs shortest-path durations (seconds); np.inf if unreachable."""
        if self._dmat is None:
            dmat = np.empty((self.n_nodes, self.n_nodes))
            for s in range(self.n_nodes):
                dmat[s] = self.shortest_from(s)[0]
            self._dmat = dmat
        return self._dmat

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": i, "lat": float(self.node_lat[i]), "lon": float(self.node_lon[i])}
                for i in range(self.n_nodes)
            ],
            "edges": [
                {
                    "u": int(self.edge_u[e]),
                    "v": int(self.edge_v[e]),
                    "duration_s": float(self.edge_duration[e]),
                    "length_m": float(self.edge_length[e]),
                }
                for e in range(len(self.edge_u))
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RoadNetwork":
        nodes = sorted(data["nodes"], key=lambda n: n["id"])
        ids = [n["id"] for n in nodes]
        if ids != list(range(len(ids))):
            raise ValueError("node ids must be consecutive integers starting at 0")
        edges = data["edges"]
        return cls(
            [n["lat"] for n in nodes],
            [n["lon"] for n in nodes],
            [e["u"] for e in edges],
            [e["v"] for e in edges],
            [e["duration_s"] for e in edges],
            [e["length_m"] for e in edges],
        )

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load_json(cls, path) -> "RoadNetwork":
        with open(path) as f:
            return cls.from_dict(json.load(f))


DEFAULT_ORIGIN = GeoPoint(40.72, -74.0)


def build_grid_network(
    rows: int,
    cols: int,
    spacing_m: float = 500.0,
    speed_jitter_seed: int = 0,
    origin: GeoPoint = DEFAULT_ORIGIN,
) -> RoadNetwork:
    """Build a rows x cols grid city with bidirectional streets.

    Each directed edge gets an independent speed drawn uniformly from
    [6, 14] m/s under the seed, so durations are deterministic but street
    directions are not symmetric.
    """
    if rows < 2 or cols < 2:
        raise ValueError(f"grid needs rows, cols >= 2, got {rows}x{cols}")
    dlat = spacing_m / METERS_PER_DEGREE_LAT
    dlon = spacing_m / (METERS_PER_DEGREE_LAT * math.cos(math.radians(origin.lat)))
    lat = np.empty(rows * cols)
    lon = np.empty(rows * cols)
    for r in range(rows):
        for c in range(cols):
            lat[r * cols + c] = origin.lat + r * dlat
            lon[r * cols + c] = origin.lon + c * dlon
    us, vs = [], []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                us.extend((i, i + 1))
                vs.extend((i + 1, i))
            if r + 1 < rows:
                us.extend((i, i + cols))
                vs.extend((i + cols, i))
    rng = np.random.default_rng(speed_jitter_seed)
    speeds = rng.uniform(6.0, 14.0, size=len(us))
    durations = spacing_m / speeds
    lengths = np.full(len(us), float(spacing_m))
    return RoadNetwork(lat, lon, us, vs, durations, lengths)


def build_city_network(
    rows: int,
    cols: int,
    spacing_m: float = 500.0,
    seed: int = 0,
    arterial_every: int = 5,
    side_speed: tuple[float, float] = (3.0, 5.0),
    arterial_speed: tuple[float, float] = (12.0, 14.0),
    origin: GeoPoint = DEFAULT_ORIGIN,
) -> RoadNetwork:
    """Grid city with an arterial hierarchy: every `arterial_every`-th row and
    column is fast, side streets are slow.

    The speed contrast makes shortest paths funnel onto shared trunk
    corridors, the way real commutes do; the returned network carries the
    arterial intersection node ids in `net.hubs` (used by the synthetic
    workload generator as demand anchors).
    """
    base = build_grid_network(rows, cols, spacing_m, seed, origin)
    rng = np.random.default_rng((seed, 0xA57))
    u, v = base.edge_u, base.edge_v
    row_u, col_u = u // cols, u % cols
    horizontal = row_u == v // cols
    arterial = ((row_u % arterial_every == 0) & horizontal) | (
        (col_u % arterial_every == 0) & ~horizontal
    )
    speeds = np.where(
        arterial,
        rng.uniform(arterial_speed[0], arterial_speed[1], len(u)),
        rng.uniform(side_speed[0], side_speed[1], len(u)),
    )
    net = RoadNetwork(base.node_lat, base.node_lon, u, v, spacing_m / speeds, base.edge_length)
    node_rows = np.arange(net.n_nodes) // cols
    node_cols = np.arange(net.n_nodes) % cols
    net.hubs = np.nonzero((node_rows % arterial_every == 0) & (node_cols % arterial_every == 0))[0]
    return net


def _reconstruct(net: RoadNetwork, pred: np.ndarray, source: int, target: int) -> list[int]:
    path = [target]
    while path[-1] != source:
        p = int(pred[path[-1]])
        if p < 0:
            raise NoRouteError(f"no path from node {source} to node {target}")
        path.append(p)
    path.reverse()
    return path


def _route_from_nodes(net: RoadNetwork, nodes: list[int], durations_by_edge: dict) -> Route:
    segs = [durations_by_edge[(nodes[i], nodes[i + 1])] for i in range(len(nodes) - 1)]
    return Route(
        points=[net.node_point(i) for i in nodes],
        segment_durations=segs,
        total_duration=math.fsum(segs),
        nodes=list(nodes),
    )


def _edge_duration_map(net: RoadNetwork) -> dict:
    dmap = getattr(net, "_edge_dmap", None)
    if dmap is None:
        dmap = {
            (int(u), int(v)): float(d)
            for u, v, d in zip(net.edge_u, net.edge_v, net.edge_duration)
        }
        net._edge_dmap = dmap
    return dmap


def route(net: RoadNetwork, origin: GeoPoint, dest: GeoPoint, alternates: int = 1) -> list[Route]:
    """Route between the nearest network nodes; up to `alternates` routes total.

    The first route is a minimum-duration Dijkstra path. Additional ones come
    from re-solving with used-edge durations penalized; a candidate is kept
    only while it stays within ALT_ACCEPT_RATIO of the optimum and uses a
    different edge set. The result is sorted by duration.
    """
    if alternates < 1:
        raise ValueError(f"alternates must be >= 1, got {alternates}")
    s = net.nearest_node(origin)
    t = net.nearest_node(dest)
    if s == t:
        return [Route(points=[net.node_point(s)], segment_durations=[], total_duration=0.0, nodes=[s])]
    dist, pred = net.shortest_from(s)
    if not np.isfinite(dist[t]):
        raise NoRouteError(f"no path from node {s} to node {t}")
    dmap = _edge_duration_map(net)
    best = _route_from_nodes(net, _reconstruct(net, pred, s, t), dmap)
    routes = [best]
    if alternates > 1:
        weights = net.edge_duration.copy()
        edge_index = {(int(u), int(v)): e for e, (u, v) in enumerate(zip(net.edge_u, net.edge_v))}
        seen_edge_sets = {frozenset(zip(best.nodes, best.nodes[1:]))}
        last = best
        while len(routes) < alternates:
            for a, b in zip(last.nodes, last.nodes[1:]):
                weights[edge_index[(a, b)]] *= ALT_EDGE_PENALTY
            dist_p, pred_p = accel.dijkstra_csr(net.indptr, net.edge_v, weights, s)
            if not np.isfinite(dist_p[t]):
                break
            cand = _route_from_nodes(net, _reconstruct(net, pred_p, s, t), dmap)
            edge_set = frozenset(zip(cand.nodes, cand.nodes[1:]))
            if edge_set in seen_edge_sets or cand.total_duration > ALT_ACCEPT_RATIO * best.total_duration:
                break
            seen_edge_sets.add(edge_set)
            routes.append(cand)
            last = cand
    routes.sort(key=lambda r: r.total_duration)
    return routes


def batch_route(net: RoadNetwork, requests, ledger: RoutingLedger) -> list[Route | None]:
    """Route each (origin, dest) request; None marks an unreachable pair.

    Charges the ledger one call per request, split into batches of <= 100.
    """
    results = batch_route_multi(net, requests, ledger, alternates=1)
    return [r[0] if r is not None else None for r in results]


def batch_route_multi(
    net: RoadNetwork, requests, ledger: RoutingLedger, alternates: int = 1
) -> list[list[Route] | None]:
    """Batch variant returning all alternates per request (still 1 call each)."""
    results: list[list[Route] | None] = []
    for origin, dest in requests:
        try:
            results.append(route(net, origin, dest, alternates=alternates))
        except NoRouteError:
            results.append(None)
    ledger.charge(len(results))
    return results
