import itertools

import numpy as np
import pytest

from ridematch.baselines import closeby
from ridematch.network import (
    MatchingResult,
    ShareabilityNetwork,
    build_network,
    dump_network_csv,
    greedy_matching,
    max_weight_matching,
    optimal_utility,
)
from ridematch.roadnet import RoutingLedger
from ridematch.trips import synth_commute
from ridematch.utility import matching_utility


def brute_force_matching(nodes, edges):
    """Exponential enumeration over all matchings; exact for small graphs."""
    best = 0.0
    edges = list(edges)

    def rec(i, used, total):
        nonlocal best
        best = max(best, total)
        for j in range(i, len(edges)):
            u, v, w = edges[j]
            if u not in used and v not in used:
                rec(j + 1, used | {u, v}, total + w)

    rec(0, set(), 0.0)
    return best


class TestBuildNetwork:
    def test_empty_proposals(self, city21, small_workload):
        g = build_network(small_workload.rides, {r.id: [] for r in small_workload.rides}, city21)
        assert g.edges == []
        assert g.evaluated_pairs == 0

    def test_bidirectional_proposal_single_edge(self, city21, small_workload):
        a, b = small_workload.rides[:2]
        rides = small_workload.rides
        proposals = {a.id: [b.id], b.id: [a.id]}
        g = build_network(rides, proposals, city21)
        assert g.evaluated_pairs == 1
        assert len(g.edges) <= 1

    def test_accepts_scored_tuples(self, city21, small_workload):
        a, b = small_workload.rides[:2]
        g1 = build_network(small_workload.rides, {a.id: [(b.id, 0.5)]}, city21)
        g2 = build_network(small_workload.rides, {a.id: [b.id]}, city21)
        assert g1.edges == g2.edges

    def test_weights_are_exact_utilities(self, city21, small_workload):
        rides = small_workload.rides
        proposals = closeby(rides, 4)
        g = build_network(rides, proposals, city21, provenance="closeby")
        by_id = {r.id: r for r in rides}
        for u, v, w in g.edges[:40]:
            assert w == pytest.approx(matching_utility(by_id[u], by_id[v], city21), abs=1e-12)
            assert w > 0
            assert g.provenance[(u, v)] == "closeby"

    def test_ledger_counts_nodes_plus_six_edges(self, city21):
        ledger = RoutingLedger()
        w = synth_commute(city21, 80, seed=31, ledger=ledger)
        assert ledger.call_count == 80
        proposals = closeby(w.rides, 5)
        g = build_network(w.rides, proposals, city21, ledger=ledger)
        assert ledger.call_count == 80 + 6 * g.evaluated_pairs

    def test_unknown_ride_rejected(self, city21, small_workload):
        with pytest.raises(ValueError):
            build_network(small_workload.rides, {small_workload.rides[0].id: [10**9]}, city21)

    def test_dump_csv(self, city21, small_workload, tmp_path):
        proposals = closeby(small_workload.rides, 3)
        g = build_network(small_workload.rides, proposals, city21, provenance="closeby")
        path = tmp_path / "net.csv"
        dump_network_csv(g, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "u,v,weight_s,provenance"
        assert len(lines) == len(g.edges) + 1
        u, v, w, prov = lines[1].split(",")
        assert prov == "closeby"
        assert float(w) > 0


class TestMaxWeightMatching:
    def test_path_takes_middle_edge(self):
        g = ShareabilityNetwork(nodes=[0, 1, 2, 3], edges=[(0, 1, 1.0), (1, 2, 5.0), (2, 3, 1.0)])
        res = max_weight_matching(g)
        assert res.pairs == [(1, 2)]
        assert res.total_utility == 5.0
        assert res.unmatched == [0, 3]

    def test_triangle(self):
        g = ShareabilityNetwork(nodes=[0, 1, 2], edges=[(0, 1, 3.0), (1, 2, 2.0), (0, 2, 1.0)])
        res = max_weight_matching(g)
        assert res.total_utility == 3.0
        assert res.pairs == [(0, 1)]

    def test_against_exhaustive_enumeration(self):
        rng = np.random.default_rng(17)
        for trial in range(30):
            n = int(rng.integers(2, 9))
            edges = []
            for u, v in itertools.combinations(range(n), 2):
                if rng.uniform() < 0.5:
                    edges.append((u, v, float(rng.uniform(0.1, 10.0))))
            g = ShareabilityNetwork(nodes=list(range(n)), edges=edges)
            res = max_weight_matching(g)
            assert res.total_utility == pytest.approx(
                brute_force_matching(range(n), edges), abs=1e-9
            )

    def test_pairs_vertex_disjoint(self, city21, small_workload):
        proposals = closeby(small_workload.rides, 6)
        g = build_network(small_workload.rides, proposals, city21)
        res = max_weight_matching(g)
        flat = [x for p in res.pairs for x in p]
        assert len(flat) == len(set(flat))
        assert set(flat) | set(res.unmatched) == set(g.nodes)

    def test_greedy_is_lower_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(4, 10))
            edges = [
                (u, v, float(rng.uniform(0.1, 5.0)))
                for u, v in itertools.combinations(range(n), 2)
                if rng.uniform() < 0.6
            ]
            g = ShareabilityNetwork(nodes=list(range(n)), edges=edges)
            assert greedy_matching(g).total_utility <= max_weight_matching(g).total_utility + 1e-12


class TestOptimalUtility:
    def test_two_rides(self, city21):
        w = synth_commute(city21, 2, seed=32)
        a, b = w.rides
        res = optimal_utility(w.rides, city21)
        assert res.total_utility == pytest.approx(matching_utility(a, b, city21), abs=1e-12)

    def test_dominates_proposal_networks(self, city21):
        w = synth_commute(city21, 60, seed=33)
        opt = optimal_utility(w.rides, city21)
        proposals = closeby(w.rides, 5)
        g = build_network(w.rides, proposals, city21)
        assert max_weight_matching(g).total_utility <= opt.total_utility + 1e-9

    def test_matches_independent_complete_pass(self, city21):
        w = synth_commute(city21, 50, seed=34)
        rides = w.rides
        opt = optimal_utility(rides, city21)
        edges = []
        for i in range(len(rides)):
            for j in range(i + 1, len(rides)):
                u = matching_utility(rides[i], rides[j], city21)
                if u > 0:
                    edges.append((rides[i].id, rides[j].id, u))
        ref = max_weight_matching(ShareabilityNetwork(nodes=[r.id for r in rides], edges=edges))
        assert opt.total_utility == pytest.approx(ref.total_utility, abs=1e-9)

    def test_cap_refused_with_guidance(self, city21, small_workload):
        with pytest.raises(ValueError, match="lower the load"):
            optimal_utility(small_workload.rides, city21, cap=10)

    def test_greedy_flag_runs_past_cap(self, city21, small_workload):
        res = optimal_utility(small_workload.rides, city21, cap=10, greedy=True)
        assert isinstance(res, MatchingResult)
        assert res.total_utility > 0

    def test_ledger_accounting(self, city21):
        w = synth_commute(city21, 30, seed=35)
        ledger = RoutingLedger()
        optimal_utility(w.rides, city21, ledger=ledger)
        assert ledger.call_count == 6 * (30 * 29 // 2)
