import math

import numpy as np
import pytest

from pushpull.allcast import verify_delivery
from pushpull.audit import replay_depths
from pushpull.flow import (
    FlowReport,
    audit_flow,
    flow_beta,
    flow_bit_budget,
    multicast_overlap,
    run_maxflow,
    run_maxflow_pushpull_multi,
    run_multicast,
    verify_flow,
)
from pushpull.graph_models import RelayNetwork, gen_gnp, gen_relay_network
from pushpull.seeding import derive_seed


def full_network(k, n):
    return RelayNetwork(k, n, np.ones((k, n), dtype=bool), ~np.eye(n, dtype=bool))


def flow_depths(r: FlowReport):
    return replay_depths(r.k + r.n, 0, r.B, r.usage_tail, r.usage_head, r.usage_bit, r.usage_phase)


def with_rows(r: FlowReport, keep) -> FlowReport:
    return FlowReport(
        r.algorithm, r.k, r.n, r.p, r.eps, r.B, r.beta, r.restricted, r.owners, r.a1, r.a2, r.a3, r.m,
        r.failed, r.delivered, r.usage_tail[keep], r.usage_head[keep], r.usage_bit[keep], r.usage_phase[keep],
        r.causes,
    )


def test_budgets():
    assert flow_bit_budget(700, 0.5, 0.25) == 262
    assert flow_beta(700, 0.5, 0.25) == math.floor(700 * 0.375 * 0.625)
    assert flow_bit_budget(600, 0.5, 0.25) == 225 and flow_beta(600, 0.5, 0.25) == 140


class TestMaxflow:
    def test_two_relays_single_bit(self):
        net = full_network(2, 2)
        r = run_maxflow(net, 0.5, 1.0)
        assert r.B == 1 and r.success
        assert r.owners.tolist() == [2]
        pulls = [row for row in r.usage_rows() if row[1] == 1]
        assert pulls == [[2, 1, 0, 2]]
        assert verify_flow(r, net)

    def test_source_without_relays(self):
        net = full_network(2, 5)
        net.session_adj[0] = False
        r = run_maxflow(net, 0.5, 1.0)
        assert r.a1 and not r.success and r.fatal_events == ["A1"]
        assert verify_flow(r, net)

    def test_rejects_multiple_sinks(self):
        with pytest.raises(ValueError):
            run_maxflow(full_network(3, 4), 0.5, 1.0)

    def test_rejects_small_budget(self):
        with pytest.raises(ValueError):
            run_maxflow(full_network(2, 1), 0.5, 0.5)

    def test_relayed_path(self):
        # the only owner is not next to the sink; relay 3 bridges owner 2 and the sink
        session = np.array([[True, False], [False, True]])
        relay = np.array([[False, True], [True, False]])
        net = RelayNetwork(2, 2, session, relay)
        r = run_maxflow(net, 0.5, 1.0)
        assert r.success
        assert sorted(map(tuple, r.usage_rows())) == [(0, 2, 0, 1), (2, 3, 0, 2), (3, 1, 0, 3)]
        assert flow_depths(r)[1, 0] == 3

    def test_mid_size_runs_audit_clean(self):
        for s in range(10):
            net = gen_relay_network(2, 300, 0.5, s)
            r = run_maxflow(net, 0.25, 0.5)
            assert audit_flow(r, net) == []
            if r.success:
                assert r.common_bits == r.B
            assert flow_depths(r)[1][r.delivered[1]].max() <= 3

    def test_deterministic(self):
        net = gen_relay_network(2, 200, 0.5, 3)
        assert run_maxflow(net, 0.25, 0.5).to_dict() == run_maxflow(net, 0.25, 0.5).to_dict()

    @pytest.mark.slow
    def test_success_at_700(self):
        wins = sum(run_maxflow(gen_relay_network(2, 700, 0.5, s), 0.25, 0.5).success for s in range(50))
        assert wins >= 48


class TestPushPull:
    def test_two_sinks_all_direct(self):
        net = full_network(3, 2)
        r = run_maxflow_pushpull_multi(net, 0.5, 1.0)
        # floor(2 * 1 * (1 - 0.5)) is one bit, not two
        assert r.B == 1 and r.success
        assert all(row[3] != 3 for row in r.usage_rows())
        assert verify_flow(r, net)

    def test_isolated_sink(self):
        net = gen_relay_network(4, 200, 0.5, 2)
        net.session_adj[2] = False
        r = run_maxflow_pushpull_multi(net, 0.25, 0.5)
        assert not r.success and 2 in r.a3 and 2 in r.failed
        assert not r.delivered[2].any()
        assert verify_flow(r, net)

    def test_isolated_sink_restricted(self):
        net = gen_relay_network(4, 200, 0.5, 2)
        net.session_adj[2] = False
        r = run_maxflow_pushpull_multi(net, 0.25, 0.5, restricted=True)
        assert r.causes[2] == "A3" and 2 in r.a3

    def test_owner_links_unused_between_owners(self):
        net = gen_relay_network(5, 300, 0.5, 8)
        r = run_maxflow_pushpull_multi(net, 0.25, 0.5)
        owners = set(r.owners.tolist())
        assert not any(t in owners and h in owners for t, h, _, _ in r.usage_rows())

    def test_shared_relays_stay_within_capacity(self):
        for s in range(6):
            net = gen_relay_network(40, 300, 0.5, s)
            r = run_maxflow_pushpull_multi(net, 0.25, 0.5)
            assert audit_flow(r, net) == []
            depth = flow_depths(r)[: r.k]
            assert depth[r.delivered].max() <= 3

    def test_tampering(self):
        net = gen_relay_network(6, 200, 0.5, 1)
        r = run_maxflow_pushpull_multi(net, 0.25, 0.5)
        assert audit_flow(r, net) == []
        keep = np.ones(r.usage_tail.size, dtype=bool)
        keep[0] = False
        assert audit_flow(with_rows(r, keep), net)
        dup = np.concatenate([np.arange(r.usage_tail.size), [r.usage_tail.size - 1]])
        assert audit_flow(with_rows(r, dup), net)

    def test_network_mismatch(self):
        r = run_maxflow_pushpull_multi(gen_relay_network(3, 100, 0.5, 1), 0.25, 0.5)
        assert audit_flow(r, gen_relay_network(4, 100, 0.5, 1))

    def test_agrees_with_maxflow(self):
        same = total = 0
        for s in range(40):
            net = gen_relay_network(2, 500, 0.5, 300 + s)
            a = run_maxflow(net, 0.25, 0.5)
            b = run_maxflow_pushpull_multi(net, 0.25, 0.5)
            same += a.success == b.success
            total += 1
        assert same / total >= 0.95

    @pytest.mark.slow
    def test_fifth_of_relays_as_sinks(self):
        n = 600
        k = math.ceil(0.2 * n)
        wins = sum(run_maxflow_pushpull_multi(gen_relay_network(k, n, 0.5, s), 0.25, 0.5).success for s in range(30))
        assert wins >= 28


class TestMulticast:
    def test_whole_graph_session_is_pure_allcast(self):
        r = run_multicast(200, 200, 0.5, 0.2, 4)
        assert r.relay is None and r.relay_bits == 0
        g = gen_gnp(200, 0.5, derive_seed(4, "graph"))
        assert verify_delivery(r.session, g)
        assert r.total == r.session.common_bits

    def test_pair_session_is_pure_relay_flow(self):
        r = run_multicast(300, 2, 0.5, 0.2, 4)
        assert r.session is None and r.session_bits == 0
        g = gen_gnp(300, 0.5, derive_seed(4, "graph"))
        net = RelayNetwork.from_capgraph(g, 2)
        assert verify_flow(r.relay, net)
        assert r.total == r.relay.common_bits

    def test_parts_are_edge_disjoint(self):
        for s in range(5):
            r = run_multicast(200, 60 + 20 * s, 0.5, 0.2, s)
            assert multicast_overlap(r) == set()
            g = gen_gnp(200, 0.5, derive_seed(s, "graph"))
            assert verify_delivery(r.session, g.induced(r.k))
            assert verify_flow(r.relay, RelayNetwork.from_capgraph(g, r.k))

    def test_overlap_detects_shared_edge(self):
        r = run_multicast(100, 40, 0.5, 0.2, 1)
        # graft one session row onto the relay log: the edge is then used twice
        r.relay.usage_tail = np.append(r.relay.usage_tail, r.session.usage_tail[0])
        r.relay.usage_head = np.append(r.relay.usage_head, r.session.usage_head[0])
        assert multicast_overlap(r)

    def test_totals_and_target(self):
        r = run_multicast(300, 150, 0.5, 0.2, 2)
        assert r.total == r.session_bits + r.relay_bits
        assert r.alpha == 0.5 and r.target == pytest.approx(0.75 * 0.5 * 0.6)
        d = r.to_dict()
        assert d["total"] == r.total and d["normalized_rate"] == pytest.approx(r.total / 300)

    def test_bad_session_size(self):
        for k in (1, 0, 11):
            with pytest.raises(ValueError):
                run_multicast(10, k, 0.5, 0.2, 0)

    def test_half_session_meets_rate(self):
        hits = sum(run_multicast(600, 300, 0.5, 0.2, s).normalized_rate >= 0.225 for s in range(6))
        assert hits >= 5


def test_relay_split_keeps_vertex_ids():
    g = gen_gnp(30, 0.6, 5)
    net = RelayNetwork.from_capgraph(g, 7)
    kept = net.to_capgraph().capacities
    assert set(kept) == {(i, j) for (i, j) in g.capacities if j >= 7}
