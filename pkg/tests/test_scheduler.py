import numpy as np
import pytest

from picomesh.channel import DEFAULT_CHANNEL, DEFAULT_RADIOS, NodeClass
from picomesh.scheduler import (ConstraintModel, build_mwdbsg_program,
                                schedule_frame, schedule_oracle,
                                select_flows_and_xi)
from picomesh.topology import FlowSpec, Link, NetworkGraph, Node
from picomesh.verify import random_queues, random_test_graph

MU = ConstraintModel.MU_MIMO
K1 = ConstraintModel.K_TO_1
OO = ConstraintModel.ONE_TO_1


def make_graph(n_nodes, link_spec, n_flows):
    """link_spec rows: (tx, rx, rate_eq, rate_full)."""
    nodes = [Node(i, NodeClass.BS if i == 0 else NodeClass.RN, float(i), 0.0)
             for i in range(n_nodes)]
    links = [Link(tx=t, rx=r, pathloss_db=100.0, beam_gain=1e-5,
                  rate_eq=re, rate_full=rf)
             for (t, r, re, rf) in sorted(link_spec)]
    flows = [FlowSpec(f, "DL", ue_id=0, sources=(0,),
                      destinations=(n_nodes - 1,)) for f in range(n_flows)]
    return NetworkGraph(nodes=nodes, links=links, flows=flows,
                        radios=dict(DEFAULT_RADIOS), chan_params=DEFAULT_CHANNEL,
                        pathloss_threshold_db=200.0)


def path_graph():
    """A - B - C with weights 5 (A->B), 2 (B->A), 4 (B->C), 3 (C->B).

    Rates are chosen to bind before backlogs and each link elects its own
    flow, so all three constraint models see the same four weights.
    """
    g = make_graph(3, [(0, 1, 0.5, 0.5), (1, 0, 1.0, 1.0),
                       (1, 2, 2.0, 2.0), (2, 1, 1.0, 1.0)], n_flows=4)
    q = np.array([
        [10.0, 0.0, 0.0, 0.0],    # A
        [0.0, 2.0, 2.0, 0.0],     # B
        [0.0, 0.5, 0.0, 3.0],     # C
    ])
    return g, q


def test_flow_selection_prefers_largest_differential():
    g, q = path_graph()
    wt = select_flows_and_xi(q, g, MU)
    by_link = {(int(wt.tx[i]), int(wt.rx[i])): i for i in range(len(wt))}
    assert wt.flow[by_link[(0, 1)]] == 0
    assert wt.flow[by_link[(1, 0)]] == 1     # tie between flows 1 and 2
    assert wt.flow[by_link[(1, 2)]] == 2
    assert wt.flow[by_link[(2, 1)]] == 3


def test_path_graph_weights():
    g, q = path_graph()
    for model in (MU, K1, OO):
        wt = select_flows_and_xi(q, g, model)
        by_link = {(int(wt.tx[i]), int(wt.rx[i])): float(wt.weight[i])
                   for i in range(len(wt))}
        assert by_link == {(0, 1): 5.0, (1, 0): 2.0, (1, 2): 4.0, (2, 1): 3.0}


def test_path_graph_optimal_schedules():
    g, q = path_graph()
    for model in (MU, K1):
        s = schedule_frame(q, g, model)
        assert s.objective_value == 8.0
        assert s.active_links == [(0, 1), (2, 1)]
    s = schedule_frame(q, g, OO)
    assert s.objective_value == 5.0
    assert s.active_links == [(0, 1)]


def test_xi_splits_rate_proportionally():
    # one transmitter, two outgoing links electing the same flow at equal-split
    # rates 3 and 1: the flow's transmit rate fractions are 0.75 and 0.25
    g = make_graph(3, [(0, 1, 3.0, 6.0), (1, 0, 1.0, 1.0),
                       (0, 2, 1.0, 2.0), (2, 0, 1.0, 1.0)], n_flows=1)
    q = np.array([[9.0], [0.0], [0.0]])
    wt = select_flows_and_xi(q, g, MU)
    by_link = {(int(wt.tx[i]), int(wt.rx[i])): i for i in range(len(wt))}
    assert wt.xi[by_link[(0, 1)]] == pytest.approx(0.75)
    assert wt.xi[by_link[(0, 2)]] == pytest.approx(0.25)
    # single-link models do not split
    for model in (K1, OO):
        wt1 = select_flows_and_xi(q, g, model)
        assert (wt1.xi == 1.0).all()
        # full-power rates are used
        assert wt1.rate[by_link[(0, 1)]] == 6.0


def test_weight_formula_example():
    # q_tx = 10 against an empty receiver at rate 4 with xi = 1: the link can
    # move min(4, 10) = 4 useful bits at differential 10 -> weight 40
    g = make_graph(2, [(0, 1, 4.0, 4.0), (1, 0, 4.0, 4.0)], n_flows=1)
    q = np.array([[10.0], [0.0]])
    for model in (MU, K1, OO):
        wt = select_flows_and_xi(q, g, model)
        i = {(int(wt.tx[j]), int(wt.rx[j])): j for j in range(len(wt))}[(0, 1)]
        assert wt.weight[i] == 40.0


def test_equal_queues_give_zero_weight():
    g = make_graph(2, [(0, 1, 4.0, 4.0), (1, 0, 4.0, 4.0)], n_flows=1)
    q = np.array([[7.0], [7.0]])
    wt = select_flows_and_xi(q, g, MU)
    assert (wt.weight == 0.0).all()
    assert (wt.pressure == 0.0).all()


def test_negative_pressure_clamped_not_propagated():
    g = make_graph(2, [(0, 1, 4.0, 4.0), (1, 0, 4.0, 4.0)], n_flows=1)
    q = np.array([[0.0], [5.0]])
    wt = select_flows_and_xi(q, g, MU)
    i = {(int(wt.tx[j]), int(wt.rx[j])): j for j in range(len(wt))}[(0, 1)]
    assert wt.pressure[i] == -5.0
    assert wt.weight[i] == 0.0


def test_all_zero_queues_schedule_nothing():
    g, _ = path_graph()
    q = np.zeros((3, 4))
    for model in (MU, K1, OO):
        s = schedule_frame(q, g, model)
        assert s.active == []
        assert s.served == []
        assert s.objective_value == 0.0


def test_star_hub_models_diverge():
    # hub 0 with three leaves; every hub->leaf link elects its own flow with
    # weight 4: MU_MIMO sums all three, the single-link models take one
    spec = []
    for leaf in (1, 2, 3):
        spec.append((0, leaf, 10.0, 10.0))
        spec.append((leaf, 0, 10.0, 10.0))
    g = make_graph(4, spec, n_flows=3)
    q = np.full((4, 3), 2.0)
    q[0] = 2.0
    for leaf in (1, 2, 3):
        q[leaf, leaf - 1] = 0.0
    assert schedule_frame(q, g, MU).objective_value == pytest.approx(12.0)
    assert schedule_frame(q, g, K1).objective_value == pytest.approx(4.0)
    assert schedule_frame(q, g, OO).objective_value == pytest.approx(4.0)


def test_program_constraint_counts():
    g, q = path_graph()
    wt = select_flows_and_xi(q, g, MU)
    assert build_mwdbsg_program(wt, g, MU).n_constraints == 4
    assert build_mwdbsg_program(wt, g, K1).n_constraints == 5
    assert build_mwdbsg_program(wt, g, OO).n_constraints == 6


def test_methods_agree_with_oracle():
    rng = np.random.default_rng(101)
    methods = {MU: ("enumerate", "binprog"),
               K1: ("enumerate", "binprog"),
               OO: ("matching", "binprog")}
    for _ in range(12):
        g = random_test_graph(rng, n_nodes=int(rng.integers(4, 8)),
                              n_flows=int(rng.integers(1, 4)))
        q = random_queues(rng, g)
        for model in (MU, K1, OO):
            ref = schedule_oracle(q, g, model)
            for method in methods[model]:
                s = schedule_frame(q, g, model, method=method)
                assert s.objective_value == ref.objective_value, (model, method)


def test_half_duplex_and_model_validity():
    rng = np.random.default_rng(17)
    for _ in range(10):
        g = random_test_graph(rng, n_nodes=7, n_flows=2)
        q = random_queues(rng, g)
        for model in (MU, K1, OO):
            s = schedule_frame(q, g, model)
            txs = {t for (t, r) in s.active_links}
            rxs = {r for (t, r) in s.active_links}
            assert not txs & rxs
            if model in (K1, OO):
                tx_list = [t for (t, r) in s.active_links]
                assert len(tx_list) == len(set(tx_list))
            if model is OO:
                rx_list = [r for (t, r) in s.active_links]
                assert len(rx_list) == len(set(rx_list))


def test_model_objectives_nest():
    # K_TO_1 and ONE_TO_1 score the same weight table over nested feasible
    # sets, so the K_TO_1 optimum can never be smaller
    rng = np.random.default_rng(29)
    for _ in range(10):
        g = random_test_graph(rng, n_nodes=6, n_flows=2)
        q = random_queues(rng, g)
        v_k = schedule_frame(q, g, K1).objective_value
        v_o = schedule_frame(q, g, OO).objective_value
        assert v_k >= v_o - 1e-12


def test_schedule_scale_invariant_when_rate_bound():
    rng = np.random.default_rng(37)
    for _ in range(5):
        g = random_test_graph(rng, n_nodes=6, n_flows=2)
        q = random_queues(rng, g, scale=1e6)   # backlogs dwarf the rates
        for model in (MU, K1, OO):
            a = schedule_frame(q, g, model)
            b = schedule_frame(2.0 * q, g, model)
            assert a.active == b.active
            assert b.objective_value == pytest.approx(2.0 * a.objective_value,
                                                      rel=1e-12)


def test_served_bits_respect_caps():
    rng = np.random.default_rng(41)
    for _ in range(8):
        g = random_test_graph(rng, n_nodes=7, n_flows=3)
        q = random_queues(rng, g, scale=8.0)
        for model in (MU, K1, OO):
            s = schedule_frame(q, g, model)
            per_txflow: dict[tuple[int, int], float] = {}
            for (t, r, f, bits) in s.served:
                assert bits >= 0.0
                idx = g.link_index(t, r)
                rate = g.links[idx].rate_eq if model is MU else g.links[idx].rate_full
                assert bits <= rate + 1e-9
                per_txflow[(t, f)] = per_txflow.get((t, f), 0.0) + bits
            for (t, f), total in per_txflow.items():
                assert total <= q[t, f] + 1e-9


def test_service_share_recomputed_over_scheduled_links():
    # transmitter 0 has two links electing the same flow (rates 3 and 1), but
    # the lower-rate receiver holds an equal queue, so only one link is
    # scheduled -- and the served bits use the full transmit rate, not the
    # pre-solve 0.75 share
    g = make_graph(3, [(0, 1, 3.0, 3.0), (1, 0, 1.0, 1.0),
                       (0, 2, 1.0, 1.0), (2, 0, 1.0, 1.0)], n_flows=1)
    q = np.array([[2.0], [0.0], [2.0]])
    s = schedule_frame(q, g, MU)
    assert s.active_links == [(0, 1)]
    assert s.served == [(0, 1, 0, 2.0)]      # min(3, 1.0 * 2), not 0.75 * 2


def test_queue_shape_mismatch_rejected():
    g, _ = path_graph()
    with pytest.raises(ValueError):
        select_flows_and_xi(np.zeros((2, 4)), g, MU)
    with pytest.raises(ValueError):
        select_flows_and_xi(np.zeros((3, 3)), g, MU)


def test_matching_method_restricted_to_one_to_one():
    g, q = path_graph()
    with pytest.raises(ValueError):
        schedule_frame(q, g, MU, method="matching")
    with pytest.raises(ValueError):
        schedule_frame(q, g, OO, method="enumerate")
    with pytest.raises(ValueError):
        schedule_frame(q, g, MU, method="simplex")
