"""Sublinear ride-match search via spatio-temporal LSH, with baselines and evaluation."""

from .geo import GeoPoint, geohash_encode, haversine_km, time_bucket
from .lshindex import LshConfig, build_index, cp_hash, find_potential_matches, query, suggest_params
from .network import build_network, max_weight_matching, optimal_utility
from .roadnet import (
    NoRouteError,
    RoadNetwork,
    Route,
    RoutingLedger,
    batch_route,
    build_city_network,
    build_grid_network,
    route,
)
from .trips import Ride, Workload, load_trips_csv, subsample, synth_commute
from .utility import MatchEvaluation, brute_force_topk, combined_cost, matching_utility

__all__ = [
    "GeoPoint",
    "geohash_encode",
    "haversine_km",
    "time_bucket",
    "LshConfig",
    "build_index",
    "cp_hash",
    "find_potential_matches",
    "query",
    "suggest_params",
    "build_network",
    "max_weight_matching",
    "optimal_utility",
    "NoRouteError",
    "RoadNetwork",
    "Route",
    "RoutingLedger",
    "batch_route",
    "build_city_network",
    "build_grid_network",
    "route",
    "Ride",
    "Workload",
    "load_trips_csv",
    "subsample",
    "synth_commute",
    "MatchEvaluation",
    "brute_force_topk",
    "combined_cost",
    "matching_utility",
]
