"""The three heuristic comparison approaches.

All are deterministic (no seeds) and time-blind: CLOSEBY ranks by pickup
proximity, HAVERSINE by straight-line matching utility, CLOSEBY-HAVERSINE
prunes with the former and ranks with the latter. Ties break by ascending
ride id everywhere.
"""

from __future__ import annotations

import numpy as np

from .geo import haversine_km_arrays
from .trips import Ride

DEFAULT_M_CANDIDATES = 1000
DEFAULT_NOMINAL_SPEED_MPS = 8.0

_CHUNK = 256


def _arrays(rides):
    n = len(rides)
    ids = np.fromiter((r.id for r in rides), dtype=np.int64, count=n)
    ps = np.array([[r.pickup.lat, r.pickup.lon] for r in rides])
    ds = np.array([[r.dropoff.lat, r.dropoff.lon] for r in rides])
    costs = haversine_km_arrays(ps[:, 0], ps[:, 1], ds[:, 0], ds[:, 1])
    return ids, ps, ds, costs


def closeby(rides: list[Ride], k: int) -> dict[int, list[int]]:
    """Exact k nearest rides by haversine distance between pickups."""
    n = len(rides)
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    ids, ps, _, _ = _arrays(rides)
    out: dict[int, list[int]] = {}
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        d = haversine_km_arrays(ps[lo:hi, 0:1], ps[lo:hi, 1:2], ps[None, :, 0], ps[None, :, 1])
        for row in range(hi - lo):
            order = np.lexsort((ids, d[row]))
            order = order[order != lo + row][:k]
            out[int(ids[lo + row])] = [int(ids[i]) for i in order]
    return out


def _hav_utilities(ps, ds, costs, qi, cand, max_delay_s, nominal_speed_mps, feasibility):
    """Haversine matching utilities (km) of ride qi against candidate rows.

    Same four pickup-first orderings as the exact evaluator, but with
    straight-line point distances as segment costs; with symmetric distances
    the minimum collapses to ss + tt + min(cross, cross', C_a, C_b). The
    feasibility proxy is pickup distance / nominal speed <= max delay (no
    request-time term: the heuristic is deliberately time-blind).
    """
    ss = haversine_km_arrays(ps[cand, 0], ps[cand, 1], ps[qi, 0], ps[qi, 1])
    tt = haversine_km_arrays(ds[cand, 0], ds[cand, 1], ds[qi, 0], ds[qi, 1])
    s2t = haversine_km_arrays(ps[cand, 0], ps[cand, 1], ds[qi, 0], ds[qi, 1])
    st2 = haversine_km_arrays(ds[cand, 0], ds[cand, 1], ps[qi, 0], ps[qi, 1])
    c_a = costs[qi]
    c_b = costs[cand]
    combined = ss + tt + np.minimum.reduce([s2t, st2, np.full_like(ss, c_a), c_b])
    utility = np.maximum(0.0, c_a + c_b - combined)
    if feasibility:
        delay_s = ss * 1000.0 / nominal_speed_mps
        utility = np.where(delay_s <= max_delay_s, utility, 0.0)
    return utility


def haversine_topk(
    rides: list[Ride],
    k: int,
    max_delay_s: float = 600.0,
    nominal_speed_mps: float = DEFAULT_NOMINAL_SPEED_MPS,
    feasibility: bool = True,
) -> dict[int, list[int]]:
    """Exhaustive top-k by haversine matching utility per ride."""
    n = len(rides)
    ids, ps, ds, costs = _arrays(rides)
    all_idx = np.arange(n)
    out: dict[int, list[int]] = {}
    for qi in range(n):
        util = _hav_utilities(ps, ds, costs, qi, all_idx, max_delay_s, nominal_speed_mps, feasibility)
        order = np.lexsort((ids, -util))
        order = order[order != qi][:k]
        out[int(ids[qi])] = [int(ids[i]) for i in order]
    return out


def closeby_haversine(
    rides: list[Ride],
    k: int,
    m_candidates: int = DEFAULT_M_CANDIDATES,
    max_delay_s: float = 600.0,
    nominal_speed_mps: float = DEFAULT_NOMINAL_SPEED_MPS,
    feasibility: bool = True,
) -> dict[int, list[int]]:
    """Two-stage hybrid: m nearest pickups first, then top-k by haversine utility."""
    if m_candidates < k:
        raise ValueError(f"m_candidates ({m_candidates}) must be >= k ({k})")
    n = len(rides)
    m = min(m_candidates, n - 1)
    stage1 = closeby(rides, m)
    idx_of = {int(i): pos for pos, i in enumerate(r.id for r in rides)}
    ids, ps, ds, costs = _arrays(rides)
    out: dict[int, list[int]] = {}
    for qi in range(n):
        cand = np.fromiter((idx_of[c] for c in stage1[int(ids[qi])]), dtype=np.int64)
        util = _hav_utilities(ps, ds, costs, qi, cand, max_delay_s, nominal_speed_mps, feasibility)
        order = np.lexsort((ids[cand], -util))[:k]
        out[int(ids[qi])] = [int(ids[cand[i]]) for i in order]
    return out
