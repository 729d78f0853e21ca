"""Deployment drops: node placement, pair channel draws, frozen rate tables.

A drop is one random network realization: a base station at the origin, a
ring of relay nodes, user terminals scattered uniformly in the cell disk, and
one frozen channel per connected pair.  Connectivity is symmetric (a pair is
either linked in both directions or not at all) but the two directed rates
differ because transmit power, receiver noise figure and the transmitter's
power split all depend on direction.

Each directed link carries two frozen rates: rate_eq assumes the transmitter
splits power equally over its whole neighborhood (1/|A(n)| share), rate_full
assumes the link gets the transmitter's entire power.  Which one a scheduler
uses depends on its constraint model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import (
    DEFAULT_CHANNEL,
    DEFAULT_RADIOS,
    ChannelParams,
    LinkChannel,
    LinkState,
    NodeClass,
    RadioProfile,
    beamform_gain,
    link_rate_bits,
    sample_fading_matrix,
    sample_link_state,
    sample_pathloss_db,
)

GRAPH_FORMAT_HEADER = "# picomesh-graph v1"


class DropGenerationError(RuntimeError):
    """A drop could not satisfy its connectivity requirements."""


@dataclass(frozen=True)
class DropConfig:
    cell_radius_m: float = 200.0
    rn_distance_m: float = 115.0
    rn_count: int = 4
    ue_count: int = 10
    pathloss_threshold_db: float = 200.0
    rn_rotation: bool = False    # rotate the relay ring by a random offset
    max_ue_retries: int = 100    # per-UE position resamples before giving up

    def __post_init__(self):
        if self.cell_radius_m <= 0:
            raise ValueError("cell_radius_m must be positive")
        if self.rn_count < 0 or self.ue_count < 0:
            raise ValueError("node counts must be nonnegative")
        if self.rn_count > 0 and not 0 < self.rn_distance_m:
            raise ValueError("rn_distance_m must be positive")
        if self.max_ue_retries < 0:
            raise ValueError("max_ue_retries must be nonnegative")


@dataclass(frozen=True)
class Node:
    node_id: int
    node_class: NodeClass
    x: float
    y: float

    def distance_to(self, other: "Node") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass
class Link:
    """One directed link with its frozen channel summary."""

    tx: int
    rx: int
    pathloss_db: float
    beam_gain: float           # composite amplitude |g| * sigma_max(H)
    rate_eq: float             # bits/frame at power share 1/|A(tx)|
    rate_full: float           # bits/frame at full power
    channel: Optional[LinkChannel] = field(default=None, repr=False)


@dataclass(frozen=True)
class FlowSpec:
    flow_id: int
    kind: str                  # "UL" or "DL"
    ue_id: int
    sources: tuple[int, ...]
    destinations: tuple[int, ...]

    def __post_init__(self):
        if set(self.sources) & set(self.destinations):
            raise ValueError("a flow may not source at its own destination")
        if self.kind not in ("UL", "DL"):
            raise ValueError("kind must be UL or DL")


@dataclass
class NetworkGraph:
    nodes: list[Node]
    links: list[Link]
    flows: list[FlowSpec]
    radios: dict[NodeClass, RadioProfile]
    chan_params: ChannelParams
    pathloss_threshold_db: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self._rebuild_index()

    def _rebuild_index(self):
        self._adj: dict[int, list[int]] = {n.node_id: [] for n in self.nodes}
        self._link_index: dict[tuple[int, int], int] = {}
        for idx, lk in enumerate(self.links):
            self._link_index[(lk.tx, lk.rx)] = idx
            if lk.rx not in self._adj[lk.tx]:
                self._adj[lk.tx].append(lk.rx)
        for neighbors in self._adj.values():
            neighbors.sort()

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_flows(self) -> int:
        return len(self.flows)

    def neighbors(self, node_id: int) -> list[int]:
        return self._adj[node_id]

    def degree(self, node_id: int) -> int:
        return len(self._adj[node_id])

    @property
    def max_degree(self) -> int:
        return max((len(v) for v in self._adj.values()), default=0)

    def link_index(self, tx: int, rx: int) -> int:
        return self._link_index[(tx, rx)]

    def has_link(self, tx: int, rx: int) -> bool:
        return (tx, rx) in self._link_index

    def link_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(tx, rx, rate_eq, rate_full) as aligned arrays over links."""
        tx = np.array([lk.tx for lk in self.links], dtype=np.int64)
        rx = np.array([lk.rx for lk in self.links], dtype=np.int64)
        r_eq = np.array([lk.rate_eq for lk in self.links], dtype=float)
        r_full = np.array([lk.rate_full for lk in self.links], dtype=float)
        return tx, rx, r_eq, r_full

    @property
    def max_rate_full(self) -> float:
        """Largest full-power link rate in the drop (0 for a linkless graph)."""
        return max((lk.rate_full for lk in self.links), default=0.0)


def _uniform_disk(radius: float, rng: np.random.Generator) -> tuple[float, float]:
    r = radius * math.sqrt(rng.uniform())
    theta = rng.uniform(0.0, 2.0 * math.pi)
    return r * math.cos(theta), r * math.sin(theta)


def _sample_pair(node_a: Node, node_b: Node, radios, params, rng,
                 keep_fading: bool) -> Optional[tuple[LinkChannel, LinkChannel]]:
    """Draw one channel for the unordered pair, return both directions.

    The fading matrix is drawn once for a->b; the reverse direction is its
    transpose, so the singular value matches and the beam vectors are the
    conjugated swaps of the forward pair.  Returns None when the pair is in
    outage or over the pathloss budget.
    """
    d = node_a.distance_to(node_b)
    state = sample_link_state(d, rng)
    if state is LinkState.OUT:
        return None
    pl = sample_pathloss_db(state, d, rng)
    n_tx = radios[node_a.node_class].n_antennas
    n_rx = radios[node_b.node_class].n_antennas
    h = sample_fading_matrix(n_rx, n_tx, params, rng)
    gain, w_t, w_r = beamform_gain(h)
    fwd = LinkChannel(state=state, pathloss_db=pl, fading_gain=gain,
                      w_t=w_t, w_r=w_r, fading=h if keep_fading else None)
    rev = LinkChannel(state=state, pathloss_db=pl, fading_gain=gain,
                      w_t=np.conj(w_r), w_r=np.conj(w_t),
                      fading=h.T if keep_fading else None)
    return fwd, rev


def generate_drop(cfg: DropConfig,
                  chan_params: ChannelParams = DEFAULT_CHANNEL,
                  radios: dict[NodeClass, RadioProfile] = DEFAULT_RADIOS,
                  rng: Optional[np.random.Generator] = None,
                  seed: Optional[int] = None,
                  keep_fading: bool = False) -> NetworkGraph:
    """Generate one network drop.

    Node ids: 0 is the BS at the origin, 1..rn_count the relay ring, then the
    UEs.  A pair is linked (both directions) iff its sampled omnidirectional
    pathloss, shadowing included, is below cfg.pathloss_threshold_db; UE-UE
    pairs are never linked.  A UE that ends up with no neighbors is replaced
    (fresh position, fresh channels) up to cfg.max_ue_retries times.  Rates
    are frozen once adjacency is final.  Two flows per UE: uplink to the BS
    and downlink from it.

    Draw order is fixed: optional ring rotation, infrastructure pair channels
    in (i, j) order, then each UE in id order (position, then channels to the
    BS and relays in node order).
    """
    if rng is None:
        rng = np.random.default_rng(seed)

    nodes: list[Node] = [Node(0, NodeClass.BS, 0.0, 0.0)]
    rotation = rng.uniform(0.0, 2.0 * math.pi) if cfg.rn_rotation else 0.0
    for k in range(cfg.rn_count):
        ang = rotation + 2.0 * math.pi * k / cfg.rn_count
        nodes.append(Node(1 + k, NodeClass.RN,
                          cfg.rn_distance_m * math.cos(ang),
                          cfg.rn_distance_m * math.sin(ang)))
    n_infra = len(nodes)

    channels: dict[tuple[int, int], LinkChannel] = {}

    def try_pair(a: Node, b: Node):
        pair = _sample_pair(a, b, radios, chan_params, rng, keep_fading)
        if pair is None:
            return
        fwd, rev = pair
        if fwd.pathloss_db < cfg.pathloss_threshold_db:
            channels[(a.node_id, b.node_id)] = fwd
            channels[(b.node_id, a.node_id)] = rev

    for i in range(n_infra):
        for j in range(i + 1, n_infra):
            try_pair(nodes[i], nodes[j])

    total_retries = 0
    for u in range(cfg.ue_count):
        ue_id = n_infra + u
        for attempt in range(cfg.max_ue_retries + 1):
            x, y = _uniform_disk(cfg.cell_radius_m, rng)
            ue = Node(ue_id, NodeClass.UE, x, y)
            drawn: dict[tuple[int, int], LinkChannel] = {}
            for infra in nodes[:n_infra]:
                pair = _sample_pair(infra, ue, radios, chan_params, rng, keep_fading)
                if pair is None:
                    continue
                fwd, rev = pair
                if fwd.pathloss_db < cfg.pathloss_threshold_db:
                    drawn[(infra.node_id, ue_id)] = fwd
                    drawn[(ue_id, infra.node_id)] = rev
            if drawn:
                nodes.append(ue)
                channels.update(drawn)
                break
            total_retries += 1
        else:
            raise DropGenerationError(
                f"UE {ue_id} found no neighbor within the pathloss budget "
                f"after {cfg.max_ue_retries} retries")

    degree: dict[int, int] = {n.node_id: 0 for n in nodes}
    for (tx, _rx) in channels:
        degree[tx] += 1

    links: list[Link] = []
    for (tx, rx) in sorted(channels):
        chan = channels[(tx, rx)]
        tx_node, rx_node = nodes[tx], nodes[rx]
        r_eq = link_rate_bits(1.0 / degree[tx], radios[tx_node.node_class],
                              radios[rx_node.node_class], chan, chan_params)
        r_full = link_rate_bits(1.0, radios[tx_node.node_class],
                                radios[rx_node.node_class], chan, chan_params)
        links.append(Link(tx=tx, rx=rx, pathloss_db=chan.pathloss_db,
                          beam_gain=chan.beam_gain, rate_eq=r_eq,
                          rate_full=r_full, channel=chan))

    flows: list[FlowSpec] = []
    for u in range(cfg.ue_count):
        ue_id = n_infra + u
        flows.append(FlowSpec(flow_id=len(flows), kind="UL", ue_id=ue_id,
                              sources=(ue_id,), destinations=(0,)))
        flows.append(FlowSpec(flow_id=len(flows), kind="DL", ue_id=ue_id,
                              sources=(0,), destinations=(ue_id,)))

    graph = NetworkGraph(nodes=nodes, links=links, flows=flows, radios=radios,
                         chan_params=chan_params,
                         pathloss_threshold_db=cfg.pathloss_threshold_db,
                         metadata={"ue_retries": total_retries})
    graph.metadata["max_degree"] = graph.max_degree
    return graph


def validate_graph(g: NetworkGraph) -> list[str]:
    """Structural invariant check; returns human-readable violations."""
    problems: list[str] = []
    ids = [n.node_id for n in g.nodes]
    if ids != list(range(len(ids))):
        problems.append("node ids are not dense 0..N-1")
    bs = [n for n in g.nodes if n.node_class is NodeClass.BS]
    if len(bs) != 1 or bs[0].node_id != 0 or (bs[0].x, bs[0].y) != (0.0, 0.0):
        problems.append("expected exactly one BS with id 0 at the origin")
    cls = {n.node_id: n.node_class for n in g.nodes}

    seen = set()
    for lk in g.links:
        key = (lk.tx, lk.rx)
        if key in seen:
            problems.append(f"duplicate link {key}")
        seen.add(key)
        if lk.tx == lk.rx:
            problems.append(f"self link at node {lk.tx}")
        if cls.get(lk.tx) is NodeClass.UE and cls.get(lk.rx) is NodeClass.UE:
            problems.append(f"UE-UE link {key}")
        if not (lk.pathloss_db < g.pathloss_threshold_db):
            problems.append(f"link {key} over the pathloss budget")
        if not (math.isfinite(lk.rate_eq) and lk.rate_eq >= 0):
            problems.append(f"link {key} has invalid rate_eq")
        if not (math.isfinite(lk.rate_full) and lk.rate_full >= lk.rate_eq - 1e-9):
            problems.append(f"link {key} has rate_full below rate_eq")
        if lk.channel is not None:
            expect = lk.channel.beam_gain
            scale = max(abs(expect), 1e-300)
            if abs(lk.beam_gain - expect) > 1e-6 * scale:
                problems.append(f"link {key} beam_gain inconsistent with channel")
    for (tx, rx) in seen:
        if (rx, tx) not in seen:
            problems.append(f"link ({tx}, {rx}) lacks its reverse")

    for f in g.flows:
        for node in f.sources + f.destinations:
            if node not in cls:
                problems.append(f"flow {f.flow_id} references unknown node {node}")
    if [f.flow_id for f in g.flows] != list(range(len(g.flows))):
        problems.append("flow ids are not dense 0..F-1")
    return problems


def _fmt(x: float) -> str:
    return repr(float(x))


def save_graph(g: NetworkGraph, path) -> None:
    """Write the line-oriented text form (no fading matrices, no flows; flows
    are a convention of node classes and are rebuilt on load)."""
    lines = [GRAPH_FORMAT_HEADER,
             "# node <id> <class> <x_m> <y_m>",
             "# link <tx> <rx> <pathloss_db> <beam_gain> <rate_bits> <rate_full_bits>"]
    for n in g.nodes:
        lines.append(f"node {n.node_id} {n.node_class.value} {_fmt(n.x)} {_fmt(n.y)}")
    for lk in g.links:
        lines.append("link {} {} {} {} {} {}".format(
            lk.tx, lk.rx, _fmt(lk.pathloss_db), _fmt(lk.beam_gain),
            _fmt(lk.rate_eq), _fmt(lk.rate_full)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_graph(path,
               chan_params: ChannelParams = DEFAULT_CHANNEL,
               radios: dict[NodeClass, RadioProfile] = DEFAULT_RADIOS,
               pathloss_threshold_db: float = 200.0) -> NetworkGraph:
    """Rebuild a NetworkGraph from its text form.

    Channel realizations (fading matrices, beams) are not in the file, so
    loaded links carry channel=None; everything the simulator needs (rates,
    adjacency, flows) is reconstructed.
    """
    nodes: list[Node] = []
    links: list[Link] = []
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != GRAPH_FORMAT_HEADER:
            raise ValueError(f"unrecognized graph header: {first!r}")
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "node" and len(parts) == 5:
                nodes.append(Node(int(parts[1]), NodeClass(parts[2]),
                                  float(parts[3]), float(parts[4])))
            elif parts[0] == "link" and len(parts) == 7:
                links.append(Link(tx=int(parts[1]), rx=int(parts[2]),
                                  pathloss_db=float(parts[3]),
                                  beam_gain=float(parts[4]),
                                  rate_eq=float(parts[5]),
                                  rate_full=float(parts[6])))
            else:
                raise ValueError(f"malformed graph line: {line!r}")
    flows: list[FlowSpec] = []
    for n in nodes:
        if n.node_class is NodeClass.UE:
            flows.append(FlowSpec(flow_id=len(flows), kind="UL", ue_id=n.node_id,
                                  sources=(n.node_id,), destinations=(0,)))
            flows.append(FlowSpec(flow_id=len(flows), kind="DL", ue_id=n.node_id,
                                  sources=(0,), destinations=(n.node_id,)))
    return NetworkGraph(nodes=nodes, links=links, flows=flows, radios=radios,
                        chan_params=chan_params,
                        pathloss_threshold_db=pathloss_threshold_db,
                        metadata={"loaded_from": str(path)})
