import math

import numpy as np
import pytest

from pushpull.allcast import (
    PULL2,
    PUSH1,
    PUSH2,
    AllcastReport,
    allcast_beta,
    allcast_bit_budget,
    audit_delivery,
    audit_layered,
    delivery_depths,
    layered_allcast,
    orient_edges,
    run_allcast,
    run_allcast_vanishing,
    vanishing_p,
    verify_delivery,
)
from pushpull.graph_models import Bernoulli, CapGraph, Discrete, Uniform, gen_complete_capacitated, gen_gnp
from pushpull.matching import gamma_bound
from pushpull.seeding import derive_seed


def reachable_bits(n, source, B, rows):
    """Which node ends up with which bit, recomputed from the transmissions by fixed-point iteration."""
    hold = [set() for _ in range(n)]
    hold[source] = set(range(B))
    changed = True
    while changed:
        changed = False
        for t, h, b, _ in rows:
            if b in hold[t] and b not in hold[h]:
                hold[h].add(b)
                changed = True
    return hold


def copy_report(r: AllcastReport, keep: np.ndarray) -> AllcastReport:
    return AllcastReport(
        r.n, r.p, r.eps, r.source, r.B, r.beta, r.restricted, r.owners, r.a1, r.a2, r.a3, r.m, r.failed,
        r.delivered, r.usage_tail[keep], r.usage_head[keep], r.usage_bit[keep], r.usage_phase[keep], r.causes,
    )


class TestOrientation:
    def test_triangle(self, k3):
        o = orient_edges(k3, 0, 3)
        d = o.direction
        assert d[(0, 1)] == (0, 1) and d[(0, 2)] == (0, 2)
        assert d[(1, 2)] in {(1, 2), (2, 1)}

    def test_single_edge(self):
        o = orient_edges(CapGraph.from_edges(2, [(0, 1, 1)]), 1, 0)
        assert o.direction == {(0, 1): (1, 0)}

    def test_every_edge_once(self):
        g = gen_gnp(40, 0.3, 2)
        o = orient_edges(g, 5, 9)
        assert set(o.direction) == set(g.capacities)
        deg = g.degrees()
        assert np.array_equal(o.out_degrees(40) + o.in_degrees(40), deg)
        assert o.in_degrees(40)[5] == 0

    def test_source_must_exist(self, k3):
        with pytest.raises(ValueError):
            orient_edges(k3, 3, 0)

    def test_fair_coins_on_complete_graph(self):
        n = 500
        o = orient_edges(CapGraph.complete(n), 0, 11)
        out = o.out_degrees(n)[1:]  # source edges point inward, so only non-source edges count
        mean, sd = (n - 2) / 2, math.sqrt((n - 2) / 4)
        assert np.all(np.abs(out - mean) <= 4 * sd)
        # aggregate: total forward coins among non-source edges
        m = (n - 1) * (n - 2) // 2
        forward = int(np.sum(o.tail[(o.tail != 0)] < o.head[(o.tail != 0)]))
        assert abs(forward - m / 2) <= 4 * math.sqrt(m / 4)

    def test_seeded(self):
        g = gen_gnp(30, 0.5, 1)
        a, b = orient_edges(g, 0, 4), orient_edges(g, 0, 4)
        assert np.array_equal(a.tail, b.tail) and a.direction != orient_edges(g, 0, 5).direction


class TestBudget:
    def test_formulas(self):
        assert allcast_bit_budget(800, 0.5, 0.25) == 149
        assert allcast_beta(149, 0.5, 0.25) == math.floor(149 * (1 - 0.1875))
        assert allcast_bit_budget(6, 1.0, 0.6) == 1


class TestRunAllcast:
    def test_single_bit_on_k6(self):
        g = CapGraph.complete(6)
        r = run_allcast(g, 0, 0.6, 5, 1.0)
        assert r.B == 1 and len(r.owners) == 1 and r.owners[0] == 1
        hold = reachable_bits(6, 0, 1, r.usage_rows())
        assert [bool(h) for h in hold] == r.delivered[:, 0].tolist()
        assert r.success == all(hold)
        assert verify_delivery(r, g)

    def test_isolated_source(self):
        g = CapGraph.from_edges(6, [(i, j, 1) for i in range(1, 6) for j in range(i + 1, 6)])
        r = run_allcast(g, 0, 0.6, 1, 1.0)
        assert r.a1 and not r.success and r.fatal_events == ["A1"]
        assert r.usage_tail.size == 0 and verify_delivery(r, g)

    def test_rejects_bad_inputs(self):
        g = gen_gnp(20, 0.5, 1)
        with pytest.raises(ValueError):
            run_allcast(CapGraph.from_edges(3, [(0, 1, 2.0)]), 0, 0.2, 1, 0.5)
        for eps in (0, 1, -0.1):
            with pytest.raises(ValueError):
                run_allcast(g, 0, eps, 1, 0.5)
        with pytest.raises(ValueError):
            run_allcast(gen_gnp(4, 0.5, 1), 0, 0.5, 1, 0.5)

    def test_determinism(self):
        g = gen_gnp(200, 0.5, 3)
        a, b = run_allcast(g, 0, 0.25, 7, 0.5), run_allcast(g, 0, 0.25, 7, 0.5)
        assert a.to_dict() == b.to_dict()

    def test_owner_keeps_own_bit(self):
        r = run_allcast(gen_gnp(150, 0.5, 2), 0, 0.25, 2, 0.5)
        assert np.all(r.delivered[r.owners, np.arange(r.B)])
        assert np.array_equal(r.owners, np.sort(r.owners)) and r.owners.size == r.B

    def test_phases_and_depth(self):
        g = gen_gnp(300, 0.5, 4)
        r = run_allcast(g, 0, 0.25, 4, 0.5)
        assert set(np.unique(r.usage_phase).tolist()) <= {PUSH1, PUSH2, PULL2}
        assert np.sum(r.usage_phase == PUSH1) == r.B
        depth = delivery_depths(r)
        assert depth[r.delivered].max() <= 3
        assert np.all(depth[~r.delivered] == -1)

    def test_json_fields(self):
        d = run_allcast(gen_gnp(60, 0.6, 1), 3, 0.3, 1, 0.6).to_dict()
        assert {"B", "beta", "events", "edge_usage", "success", "failure_causes"} <= set(d)
        assert set(d["events"]) == {"A1", "A2", "A3", "M"}
        assert "edge_usage" not in run_allcast(gen_gnp(60, 0.6, 1), 3, 0.3, 1, 0.6).to_dict(include_usage=False)

    def test_non_zero_source(self):
        g = gen_gnp(200, 0.5, 8)
        r = run_allcast(g, 17, 0.25, 8, 0.5)
        assert r.delivered[17].all() and verify_delivery(r, g)
        assert 17 not in r.receivers

    def test_moderate_size_mostly_succeeds(self):
        wins = 0
        for s in range(10):
            g = gen_gnp(400, 0.5, derive_seed(s, "graph"))
            r = run_allcast(g, 0, 0.25, derive_seed(s, "allcast"), 0.5)
            assert verify_delivery(r, g)
            wins += r.success
        assert wins >= 8

    @pytest.mark.slow
    def test_success_at_800(self):
        wins = sum(
            run_allcast(gen_gnp(800, 0.5, 1000 + s), 0, 0.25, s, 0.5).success for s in range(50)
        )
        assert wins >= 48


class TestAudit:
    def test_tampering_detected(self):
        g = gen_gnp(120, 0.5, 6)
        r = run_allcast(g, 0, 0.25, 6, 0.5)
        assert audit_delivery(r, g) == []
        for phase in (PUSH1, PUSH2, PULL2):
            idx = np.flatnonzero(r.usage_phase == phase)
            if idx.size == 0:
                continue
            keep = np.ones(r.usage_tail.size, dtype=bool)
            keep[idx[0]] = False
            assert audit_delivery(copy_report(r, keep), g)

    def test_over_capacity_detected(self):
        g = gen_gnp(120, 0.5, 6)
        r = run_allcast(g, 0, 0.25, 6, 0.5)
        keep = np.concatenate([np.arange(r.usage_tail.size), [r.B]])
        bad = copy_report(r, keep)
        assert any("capacity" in msg for msg in audit_delivery(bad, g))

    def test_missing_edge_detected(self):
        g = gen_gnp(80, 0.5, 2)
        r = run_allcast(g, 0, 0.25, 2, 0.5)
        sparser = CapGraph.from_edges(80, [(i, j, 1) for i, j, _ in g.edges() if (i, j) != (0, int(r.owners[0]))])
        assert any("not in the graph" in msg for msg in audit_delivery(r, sparser))

    def test_graph_mismatch(self):
        r = run_allcast(gen_gnp(80, 0.5, 2), 0, 0.25, 2, 0.5)
        assert audit_delivery(r, gen_gnp(81, 0.5, 2))

    def test_auditor_agrees_over_mixed_runs(self):
        outcomes = set()
        for s in range(100):
            n = 40 + 3 * s
            p = 0.35 + 0.5 * (s % 7) / 7
            g = gen_gnp(n, p, s)
            if allcast_bit_budget(n, p, 0.3) < 1:
                continue
            r = run_allcast(g, s % n, 0.3, s, p, restricted=bool(s % 2))
            assert audit_delivery(r, g) == []
            assert delivery_depths(r)[r.delivered].max() <= 3
            outcomes.add(r.success)
        assert outcomes == {True, False}


class TestRestricted:
    def test_matching_failures_within_bound(self):
        n, p, eps = 800, 0.5, 0.25
        tried = fails = 0
        beta = allcast_beta(allcast_bit_budget(n, p, eps), p, eps)
        for s in range(4):
            g = gen_gnp(n, p, 50 + s)
            r = run_allcast(g, 0, eps, s, p, restricted=True)
            assert verify_delivery(r, g)
            reached = [t for t in range(1, n) if r.causes.get(t) != "A3"]
            tried += len(reached)
            fails += sum(1 for t in reached if r.causes.get(t) == "M")
        gamma = gamma_bound(beta, p / 2)
        assert gamma < 1
        assert fails / tried <= gamma + 5 * math.sqrt(gamma * (1 - gamma) / tried)

    def test_restricted_reports_a3_cause(self):
        # a star: every leaf has at most a single helper, far fewer than beta
        n = 40
        g = CapGraph.from_edges(n, [(0, j, 1) for j in range(1, n)] + [(1, j, 1) for j in range(2, n)])
        r = run_allcast(g, 0, 0.5, 1, 1.0, restricted=True)
        assert not r.success and set(r.causes.values()) <= {"A3", "M"}
        assert verify_delivery(r, g)


class TestVanishing:
    def test_formula(self):
        n = 10_000
        assert vanishing_p(n, math.log(n)) == pytest.approx(math.log(n) / math.sqrt(n))
        assert vanishing_p(n, math.log(n)) == pytest.approx(0.0921, abs=5e-5)

    def test_boundary_p_one(self):
        n = 12
        tau = n / math.log(n)
        assert vanishing_p(n, tau) == 1.0
        r = run_allcast_vanishing(n, tau, 0.5, 3)
        assert r.p == 1.0 and r.B == allcast_bit_budget(n, 1.0, 0.5)
        g = gen_gnp(n, 1.0, derive_seed(3, "graph"))
        assert g == CapGraph.complete(n) and verify_delivery(r, g)

    def test_p_above_one(self):
        with pytest.raises(ValueError):
            run_allcast_vanishing(12, 20.0, 0.5, 0)

    def test_moderate_run(self):
        r = run_allcast_vanishing(2000, 10, 0.3, 1)
        g = gen_gnp(2000, r.p, derive_seed(1, "graph"))
        assert verify_delivery(r, g)
        assert r.B == math.floor(1999 * r.p * 0.7 / 2)


class TestLayered:
    def test_single_layer_matches_plain_run(self):
        dist = Bernoulli(0.5)
        g = gen_complete_capacitated(120, dist, 4)
        rep = layered_allcast(g, dist, 0.25, 9, delta=0.5, M=1)
        plain = run_allcast(g, 0, 0.25, derive_seed(9, "layer", 1), 0.5)
        assert rep.layer_p == [0.5]
        assert np.array_equal(rep.layers[0].delivered, plain.delivered)
        assert rep.rate == 0.5 * plain.common_bits and rep.success == plain.success

    def test_full_unit_layer(self):
        # with delta just below one the unit edges carry one bit per layer
        dist = Bernoulli(1.0)
        g = gen_complete_capacitated(10, dist, 0)
        rep = layered_allcast(g, dist, 0.5, 1, delta=0.9, M=1)
        assert rep.layer_p == [1.0] and rep.layers[0].B == 2

    def test_zero_capacity_rejected(self):
        g = gen_complete_capacitated(8, Discrete((0.0,), (1.0,)), 0)
        with pytest.raises(ValueError):
            layered_allcast(g, Discrete((0.0,), (1.0,)), 0.2, 0)

    def test_uniform_audit(self):
        dist = Uniform(0, 1)
        g = gen_complete_capacitated(200, dist, 3)
        rep = layered_allcast(g, dist, 0.2, 3)
        assert audit_layered(rep, g) == []
        assert len(rep.layers) == rep.M and rep.normalized_rate > 0
        d = rep.to_dict()
        assert d["rate"] == pytest.approx(rep.delta * sum(d["layer_bits"]))

    def test_aggregate_overload_detected(self):
        dist = Uniform(0, 1)
        g = gen_complete_capacitated(200, dist, 3)
        rep = layered_allcast(g, dist, 0.2, 3)
        # a report claiming a larger quantum than the one it ran with does not fit the graph
        rep.delta *= 4
        assert audit_layered(rep, g)
