"""Frame scheduling: queue-pressure weights and max-weight link activation.

Each frame the scheduler picks, per directed link, the flow with the largest
queue differential, weights the link by how many useful bits it could move,
and then chooses a half-duplex-consistent set of links maximizing total
weight.  Node halves: a node either transmits or receives in a frame, never
both (a directed bipartite subgraph of the connectivity graph).

Three constraint models:

* MU_MIMO   - a transmitter may serve all its receiving neighbors at once
              (equal power split across its whole neighborhood) and a
              receiver may collect from many transmitters.
* K_TO_1    - each transmitter drives at most one link at full power;
              receivers may still collect from many transmitters.
* ONE_TO_1  - additionally each receiver listens to at most one transmitter,
              so the active set is a matching.

MU_MIMO weights use the equal-split rates and the per-flow rate fraction xi;
the single-link models use full-power rates with xi = 1, matching how their
transmitters actually allocate power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import networkx as nx
import numpy as np
from scipy.optimize import linear_sum_assignment

from .binprog import BinaryProgram, solve_branch_and_bound
from .topology import NetworkGraph

ENUM_NODE_LIMIT = 20          # refuse exhaustive node-state sweeps above this
_FULL_TABLE_LIMIT = 16        # cache full state tables up to here
_CHUNK = 1 << 15


class ConstraintModel(Enum):
    MU_MIMO = "MU_MIMO"
    K_TO_1 = "K_TO_1"
    ONE_TO_1 = "ONE_TO_1"


@dataclass(frozen=True)
class LinkWeight:
    """Per-link scheduling weight breakdown for one frame."""

    tx: int
    rx: int
    flow: int            # flow with the largest queue differential on this link
    pressure: float      # that differential (may be negative)
    xi: float            # transmit-rate fraction granted to the flow
    rate: float          # frozen rate the model would serve at (bits/frame)
    service_cap: float   # min(rate, xi * backlog)
    weight: float        # max(0, service_cap * pressure)


class WeightTable:
    """Array-of-columns view of all link weights for one frame."""

    def __init__(self, tx, rx, flow, pressure, xi, rate, service_cap, weight):
        self.tx = tx
        self.rx = rx
        self.flow = flow
        self.pressure = pressure
        self.xi = xi
        self.rate = rate
        self.service_cap = service_cap
        self.weight = weight

    def __len__(self) -> int:
        return len(self.weight)

    def row(self, i: int) -> LinkWeight:
        return LinkWeight(tx=int(self.tx[i]), rx=int(self.rx[i]),
                          flow=int(self.flow[i]), pressure=float(self.pressure[i]),
                          xi=float(self.xi[i]), rate=float(self.rate[i]),
                          service_cap=float(self.service_cap[i]),
                          weight=float(self.weight[i]))

    def rows(self) -> list[LinkWeight]:
        return [self.row(i) for i in range(len(self))]


@dataclass
class Schedule:
    node_state: np.ndarray               # 1 = transmitting, 0 = receiving/idle
    active: list[int]                    # link indices, ascending
    served: list[tuple[int, int, int, float]]   # (tx, rx, flow, bits)
    objective_value: float
    model: ConstraintModel

    @property
    def active_links(self) -> list[tuple[int, int]]:
        return [(int(t), int(r)) for (t, r, _f, _b) in self.served]


def select_flows_and_xi(q: np.ndarray, g: NetworkGraph,
                        model: ConstraintModel = ConstraintModel.MU_MIMO) -> WeightTable:
    """Per-link flow choice, rate fraction and back-pressure weight.

    For link (n, m) the served flow f* maximizes q_n^f - q_m^f (ties to the
    lowest flow id).  Under MU_MIMO xi splits n's transmit rate over all of
    its outgoing links that elected the same flow, proportionally to their
    equal-split rates; the single-link models get xi = 1 and full-power
    rates.  Weight = max(0, min(rate, xi * q_n^{f*}) * (q_n^{f*} - q_m^{f*})).
    """
    n_nodes, n_flows = q.shape
    if n_nodes != g.n_nodes or n_flows != g.n_flows:
        raise ValueError("queue matrix shape does not match the graph")
    tx, rx, r_eq, r_full = g.link_arrays()
    n_links = len(tx)
    if n_links == 0 or n_flows == 0:
        z = np.zeros(n_links)
        return WeightTable(tx, rx, np.zeros(n_links, dtype=np.int64),
                           z, z.copy(), z.copy(), z.copy(), z.copy())

    diff = q[tx] - q[rx]                          # (L, F)
    fstar = np.argmax(diff, axis=1)
    pressure = np.take_along_axis(diff, fstar[:, None], axis=1).ravel()
    backlog = q[tx, fstar]

    if model is ConstraintModel.MU_MIMO:
        rate = r_eq
        denom = np.zeros((n_nodes, n_flows))
        np.add.at(denom, (tx, fstar), r_eq)
        with np.errstate(invalid="ignore", divide="ignore"):
            xi = np.where(denom[tx, fstar] > 0.0, r_eq / denom[tx, fstar], 0.0)
    else:
        rate = r_full
        xi = np.ones(n_links)

    service_cap = np.minimum(rate, xi * backlog)
    weight = service_cap * np.maximum(pressure, 0.0)
    return WeightTable(tx, rx, fstar, pressure, xi, rate, service_cap, weight)


def build_mwdbsg_program(wt: WeightTable, g: NetworkGraph,
                         model: ConstraintModel) -> BinaryProgram:
    """Binary program over link activations for one frame.

    One half-duplex constraint per directed link (n, m): activating it
    forbids any incoming link at n, expressed as b_{n,m} plus the incoming
    sum scaled by 1/|A(n)| staying at or under 1.  K_TO_1 adds a one-out-link
    row per transmitter, ONE_TO_1 additionally a one-in-link row per
    receiver.  Objective coefficients are the (already nonnegative) weights.
    """
    n_links = len(wt)
    if n_links != len(g.links):
        raise ValueError("weight table does not cover the graph's links")
    incoming: dict[int, list[int]] = {node.node_id: [] for node in g.nodes}
    outgoing: dict[int, list[int]] = {node.node_id: [] for node in g.nodes}
    for l in range(n_links):
        incoming[int(wt.rx[l])].append(l)
        outgoing[int(wt.tx[l])].append(l)

    rows = []
    for l in range(n_links):
        n = int(wt.tx[l])
        row = np.zeros(n_links)
        row[l] += 1.0
        share = 1.0 / g.degree(n)
        for l_in in incoming[n]:
            row[l_in] += share
        rows.append(row)
    if model in (ConstraintModel.K_TO_1, ConstraintModel.ONE_TO_1):
        for node in g.nodes:
            outs = outgoing[node.node_id]
            if len(outs) > 1:
                row = np.zeros(n_links)
                row[outs] = 1.0
                rows.append(row)
    if model is ConstraintModel.ONE_TO_1:
        for node in g.nodes:
            ins = incoming[node.node_id]
            if len(ins) > 1:
                row = np.zeros(n_links)
                row[ins] = 1.0
                rows.append(row)

    a = np.array(rows) if rows else np.zeros((0, n_links))
    return BinaryProgram(c=np.maximum(wt.weight, 0.0), a=a,
                         d=np.ones(len(rows)))


# ---------------------------------------------------------------------------
# state-enumeration machinery

class _EnumTables:
    def __init__(self, g: NetworkGraph):
        n = g.n_nodes
        self.n = n
        tx, rx, _, _ = g.link_arrays()
        self.tx = tx
        self.rx = rx
        self.out_links = [(node.node_id,
                           [l for l in range(len(tx)) if tx[l] == node.node_id])
                          for node in g.nodes if g.degree(node.node_id) > 0]
        self.bits: Optional[np.ndarray] = None
        self.recv_mask: Optional[dict[int, np.ndarray]] = None
        if n <= _FULL_TABLE_LIMIT:
            states = np.arange(1 << n, dtype=np.int64)
            self.bits = ((states[:, None] >> np.arange(n)) & 1).astype(float)
            self.recv_mask = {}
            for node_id, links in self.out_links:
                col = np.zeros(1 << n, dtype=np.int64)
                for j, l in enumerate(links):
                    col |= (((states >> rx[l]) & 1) ^ 1) << j
                self.recv_mask[node_id] = col

    def chunk_bits(self, lo: int, hi: int) -> np.ndarray:
        if self.bits is not None:
            return self.bits[lo:hi]
        states = np.arange(lo, hi, dtype=np.int64)
        return ((states[:, None] >> np.arange(self.n)) & 1).astype(float)

    def chunk_recv_mask(self, node_id: int, links: list[int],
                        lo: int, hi: int) -> np.ndarray:
        if self.recv_mask is not None:
            return self.recv_mask[node_id][lo:hi]
        states = np.arange(lo, hi, dtype=np.int64)
        col = np.zeros(hi - lo, dtype=np.int64)
        for j, l in enumerate(links):
            col |= (((states >> self.rx[l]) & 1) ^ 1) << j
        return col


def _enum_tables(g: NetworkGraph) -> _EnumTables:
    cached = g.__dict__.get("_enum_tables")
    if cached is None or cached.n != g.n_nodes or len(cached.tx) != len(g.links):
        cached = _EnumTables(g)
        g.__dict__["_enum_tables"] = cached
    return cached


def _subset_max_table(w: np.ndarray) -> np.ndarray:
    table = np.zeros(1)
    for x in w:
        table = np.concatenate([table, np.maximum(table, x)])
    return table


def _enumerate_best_state(g: NetworkGraph, wt: WeightTable,
                          model: ConstraintModel) -> int:
    n = g.n_nodes
    if n > ENUM_NODE_LIMIT:
        raise ValueError(f"state enumeration limited to {ENUM_NODE_LIMIT} nodes")
    tables = _enum_tables(g)
    best_val = -math.inf
    best_state = 0
    sub_max = None
    if model is ConstraintModel.K_TO_1:
        sub_max = {node_id: _subset_max_table(wt.weight[links])
                   for node_id, links in tables.out_links}
    for lo in range(0, 1 << n, _CHUNK):
        hi = min(lo + _CHUNK, 1 << n)
        bits = tables.chunk_bits(lo, hi)
        if model is ConstraintModel.MU_MIMO:
            act = bits[:, tables.tx] * (1.0 - bits[:, tables.rx])
            vals = act @ wt.weight
        else:
            vals = np.zeros(hi - lo)
            for node_id, links in tables.out_links:
                mask = tables.chunk_recv_mask(node_id, links, lo, hi)
                vals += bits[:, node_id] * sub_max[node_id][mask]
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            best_state = lo + k
    return best_state


def _active_for_state(state: int, g: NetworkGraph, wt: WeightTable,
                      model: ConstraintModel) -> list[int]:
    def transmitting(node: int) -> bool:
        return bool((state >> node) & 1)

    active: list[int] = []
    if model is ConstraintModel.MU_MIMO:
        for l in range(len(wt)):
            if wt.weight[l] > 0.0 and transmitting(int(wt.tx[l])) \
                    and not transmitting(int(wt.rx[l])):
                active.append(l)
        return active
    # K_TO_1: best available receiver per transmitter, ties to lowest index
    tables = _enum_tables(g)
    for node_id, links in tables.out_links:
        if not transmitting(node_id):
            continue
        best_l, best_w = -1, 0.0
        for l in links:
            if not transmitting(int(wt.rx[l])) and wt.weight[l] > best_w:
                best_l, best_w = l, float(wt.weight[l])
        if best_l >= 0:
            active.append(best_l)
    return active


# ---------------------------------------------------------------------------
# matching machinery for ONE_TO_1

class _MatchTables:
    def __init__(self, g: NetworkGraph):
        self.n_links = len(g.links)
        pairs: dict[tuple[int, int], list[int]] = {}
        for idx, lk in enumerate(g.links):
            key = (min(lk.tx, lk.rx), max(lk.tx, lk.rx))
            pairs.setdefault(key, [-1, -1])
            pairs[key][0 if lk.tx < lk.rx else 1] = idx
        self.pairs = [(u, v, fwd, rev) for (u, v), (fwd, rev) in sorted(pairs.items())]
        self.pair_links = {(u, v): (fwd, rev) for (u, v, fwd, rev) in self.pairs}
        self.graph = nx.Graph()
        self.graph.add_nodes_from(node.node_id for node in g.nodes)
        for (u, v, _f, _r) in self.pairs:
            self.graph.add_edge(u, v, weight=0.0)


def _match_tables(g: NetworkGraph) -> _MatchTables:
    cached = g.__dict__.get("_match_tables")
    if cached is None or cached.n_links != len(g.links):
        cached = _MatchTables(g)
        g.__dict__["_match_tables"] = cached
    return cached


def _solve_one_to_one(g: NetworkGraph, wt: WeightTable) -> list[int]:
    """Matching reduction: a ONE_TO_1 schedule is a matching on undirected
    pairs scored by their better direction, and any matching orients into a
    valid half-duplex state, so one max-weight matching is exact."""
    tables = _match_tables(g)

    def dir_weight(idx: int) -> float:
        return float(wt.weight[idx]) if idx >= 0 else 0.0

    G = tables.graph
    for (u, v, fwd, rev) in tables.pairs:
        G[u][v]["weight"] = max(dir_weight(fwd), dir_weight(rev))
    mate = nx.max_weight_matching(G, maxcardinality=False)
    active = []
    for pair in sorted(tuple(sorted(p)) for p in mate):
        fwd, rev = tables.pair_links[pair]
        w_f, w_r = dir_weight(fwd), dir_weight(rev)
        if max(w_f, w_r) <= 0.0:
            continue
        active.append(fwd if w_f >= w_r else rev)
    return active


# ---------------------------------------------------------------------------

def _serve(active: list[int], wt: WeightTable, q: np.ndarray,
           model: ConstraintModel) -> list[tuple[int, int, int, float]]:
    """Served bits per active link; xi is re-derived over the scheduled links
    sharing a (transmitter, flow) pair so the transmit rate granted to a flow
    is split only among links actually serving it."""
    served = []
    if model is ConstraintModel.MU_MIMO:
        denom: dict[tuple[int, int], float] = {}
        for l in active:
            key = (int(wt.tx[l]), int(wt.flow[l]))
            denom[key] = denom.get(key, 0.0) + float(wt.rate[l])
        for l in active:
            tx, f = int(wt.tx[l]), int(wt.flow[l])
            tot = denom[(tx, f)]
            xi = float(wt.rate[l]) / tot if tot > 0.0 else 0.0
            bits = min(float(wt.rate[l]), xi * float(q[tx, f]))
            served.append((tx, int(wt.rx[l]), f, bits))
    else:
        for l in active:
            tx, f = int(wt.tx[l]), int(wt.flow[l])
            bits = min(float(wt.rate[l]), float(q[tx, f]))
            served.append((tx, int(wt.rx[l]), f, bits))
    return served


def _objective(active: list[int], wt: WeightTable) -> float:
    total = 0.0
    for l in active:
        total += float(wt.weight[l])
    return total


def _finalize(q: np.ndarray, g: NetworkGraph, wt: WeightTable,
              model: ConstraintModel, active: list[int]) -> Schedule:
    active = sorted(active)
    state = np.zeros(g.n_nodes, dtype=np.int8)
    for l in active:
        state[int(wt.tx[l])] = 1
    for l in active:
        if state[int(wt.rx[l])] != 0:
            raise RuntimeError("half-duplex violation in computed schedule")
    return Schedule(node_state=state, active=active,
                    served=_serve(active, wt, q, model),
                    objective_value=_objective(active, wt), model=model)


def schedule_frame(q: np.ndarray, g: NetworkGraph,
                   model: ConstraintModel = ConstraintModel.MU_MIMO,
                   method: str = "auto",
                   wt: Optional[WeightTable] = None) -> Schedule:
    """Max-weight half-duplex schedule for one frame.

    method:
        "auto"      - ONE_TO_1 via the matching reduction; the other models
                      by exhaustive node-state enumeration up to 16 nodes and
                      the binary-program route beyond.
        "enumerate" - force node-state enumeration (<= 20 nodes).
        "matching"  - force the matching reduction (ONE_TO_1 only).
        "binprog"   - force the branch-and-bound binary-program route.

    A weight table already computed for this (q, model) pair may be passed to
    avoid recomputation; it must come from select_flows_and_xi on the same
    arguments.
    """
    if wt is None:
        wt = select_flows_and_xi(q, g, model)
    if method == "auto":
        if model is ConstraintModel.ONE_TO_1:
            method = "matching"
        else:
            method = "enumerate" if g.n_nodes <= _FULL_TABLE_LIMIT else "binprog"

    if method == "matching":
        if model is not ConstraintModel.ONE_TO_1:
            raise ValueError("matching method applies to ONE_TO_1 only")
        active = _solve_one_to_one(g, wt)
    elif method == "enumerate":
        if model is ConstraintModel.ONE_TO_1:
            raise ValueError("use matching or binprog for ONE_TO_1")
        best_state = _enumerate_best_state(g, wt, model)
        active = _active_for_state(best_state, g, wt, model)
    elif method == "binprog":
        prog = build_mwdbsg_program(wt, g, model)
        sol = solve_branch_and_bound(prog)
        if sol.proof_status != "OPTIMAL":
            raise RuntimeError("link-activation program unexpectedly infeasible")
        active = [l for l in range(len(wt))
                  if sol.assignment[l] == 1 and wt.weight[l] > 0.0]
    else:
        raise ValueError(f"unknown method {method!r}")
    return _finalize(q, g, wt, model, active)


def schedule_oracle(q: np.ndarray, g: NetworkGraph,
                    model: ConstraintModel) -> Schedule:
    """Independent exhaustive reference: sweep every node-state vector and
    solve the inner link choice directly (all positive links for MU_MIMO,
    best link per transmitter for K_TO_1, a bipartite assignment between
    transmitters and receivers for ONE_TO_1).  Small graphs only."""
    n = g.n_nodes
    if n > ENUM_NODE_LIMIT:
        raise ValueError(f"oracle limited to {ENUM_NODE_LIMIT} nodes")
    wt = select_flows_and_xi(q, g, model)
    n_links = len(wt)

    def state_value(state: int) -> float:
        tx_on = [(state >> i) & 1 for i in range(n)]
        if model is ConstraintModel.MU_MIMO:
            total = 0.0
            for l in range(n_links):
                if wt.weight[l] > 0.0 and tx_on[int(wt.tx[l])] \
                        and not tx_on[int(wt.rx[l])]:
                    total += float(wt.weight[l])
            return total
        if model is ConstraintModel.K_TO_1:
            best: dict[int, float] = {}
            for l in range(n_links):
                t = int(wt.tx[l])
                if tx_on[t] and not tx_on[int(wt.rx[l])]:
                    w = float(wt.weight[l])
                    if w > best.get(t, 0.0):
                        best[t] = w
            return float(sum(best.values()))
        # ONE_TO_1: optimal assignment between transmitter and receiver sets
        senders = [i for i in range(n) if tx_on[i]]
        receivers = [i for i in range(n) if not tx_on[i]]
        if not senders or not receivers:
            return 0.0
        profit = np.zeros((len(senders), len(receivers)))
        for l in range(n_links):
            t, r = int(wt.tx[l]), int(wt.rx[l])
            if tx_on[t] and not tx_on[r]:
                profit[senders.index(t), receivers.index(r)] = max(0.0, float(wt.weight[l]))
        ri, ci = linear_sum_assignment(profit, maximize=True)
        return float(profit[ri, ci].sum())

    best_state, best_val = 0, -math.inf
    for state in range(1 << n):
        v = state_value(state)
        if v > best_val:
            best_state, best_val = state, v

    # rebuild the active set at the winning state
    tx_on = [(best_state >> i) & 1 for i in range(n)]
    if model is ConstraintModel.ONE_TO_1:
        senders = [i for i in range(n) if tx_on[i]]
        receivers = [i for i in range(n) if not tx_on[i]]
        active: list[int] = []
        if senders and receivers:
            profit = np.zeros((len(senders), len(receivers)))
            by_pair: dict[tuple[int, int], int] = {}
            for l in range(n_links):
                t, r = int(wt.tx[l]), int(wt.rx[l])
                if tx_on[t] and not tx_on[r]:
                    profit[senders.index(t), receivers.index(r)] = max(0.0, float(wt.weight[l]))
                    by_pair[(t, r)] = l
            ri, ci = linear_sum_assignment(profit, maximize=True)
            for i, j in zip(ri, ci):
                if profit[i, j] > 0.0:
                    active.append(by_pair[(senders[i], receivers[j])])
    else:
        active = _active_for_state(best_state, g, wt, model)
    return _finalize(q, g, wt, model, active)
