"""Per-node per-flow queue recursion and bit accounting.

Queues live in a dense (nodes x flows) float matrix of bits.  One frame is:
drain served bits from transmitters, credit them to receivers, add this
frame's arrivals (they become servable next frame), then absorb anything
sitting at a flow's destination as delivered throughput.  Destinations hold
zero backlog by construction, which is what makes them queue sinks.
"""

from __future__ import annotations

import numpy as np

from .topology import NetworkGraph


class ContractViolation(RuntimeError):
    """An inter-module invariant failed at runtime (scheduler overdraft,
    negative queue, malformed arrivals); the frame state is unusable."""


def make_queues(g: NetworkGraph) -> np.ndarray:
    return np.zeros((g.n_nodes, g.n_flows))


def destination_mask(g: NetworkGraph) -> np.ndarray:
    """Boolean (nodes x flows) marker of queue sinks."""
    mask = np.zeros((g.n_nodes, g.n_flows), dtype=bool)
    for f in g.flows:
        for node in f.destinations:
            mask[node, f.flow_id] = True
    return mask


def source_indices(g: NetworkGraph) -> tuple[np.ndarray, np.ndarray]:
    """(node, flow) index arrays of every source cell."""
    nodes, flows = [], []
    for f in g.flows:
        for node in f.sources:
            nodes.append(node)
            flows.append(f.flow_id)
    return np.array(nodes, dtype=np.int64), np.array(flows, dtype=np.int64)


def sample_arrivals(lam: np.ndarray, rng: np.random.Generator,
                    law: str = "deterministic") -> np.ndarray:
    """Arrival bits for one frame given the admission-rate matrix.

    "deterministic" injects exactly lam; "poisson" draws counts with that
    mean (still reals downstream).  Poisson consumes randomness only for
    cells with lam > 0 so silent flows do not perturb the stream.
    """
    lam = np.asarray(lam, dtype=float)
    if (lam < 0).any() or not np.isfinite(lam).all():
        raise ContractViolation("admission rates must be finite and nonnegative")
    if law == "deterministic":
        return lam.copy()
    if law == "poisson":
        out = np.zeros_like(lam)
        hot = lam > 0
        if hot.any():
            out[hot] = rng.poisson(lam[hot]).astype(float)
        return out
    raise ValueError(f"unknown arrival law {law!r}")


def apply_frame(q: np.ndarray, served: list[tuple[int, int, int, float]],
                arrivals: np.ndarray, g: NetworkGraph,
                dest_mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Advance queues by one frame.

    served entries are (tx, rx, flow, bits) and may not overdraw any (tx,
    flow) cell of q as it stood at frame start.  Returns the next queue
    matrix and the bits absorbed at each flow's destinations this frame.
    """
    if arrivals.shape != q.shape:
        raise ContractViolation("arrivals shape does not match queues")
    if dest_mask is None:
        dest_mask = destination_mask(g)

    drained: dict[tuple[int, int], float] = {}
    for (tx, _rx, flow, bits) in served:
        if bits < 0:
            raise ContractViolation("served bits must be nonnegative")
        key = (tx, flow)
        drained[key] = drained.get(key, 0.0) + bits
    for (tx, flow), total in drained.items():
        have = q[tx, flow]
        if total > have + 1e-6 + 1e-9 * have:
            raise ContractViolation(
                f"scheduler overdraft at node {tx} flow {flow}: "
                f"serving {total} of {have} queued bits")

    q_next = q.copy()
    for (tx, rx, flow, bits) in served:
        q_next[tx, flow] -= bits
        q_next[rx, flow] += bits
    q_next += arrivals

    floor = -(1e-6 + 1e-9 * float(np.abs(q).max(initial=0.0)))
    if (q_next < floor).any():
        cell = np.unravel_index(np.argmin(q_next), q_next.shape)
        raise ContractViolation(
            f"negative queue at node {cell[0]} flow {cell[1]}: {q_next[cell]}")
    np.maximum(q_next, 0.0, out=q_next)

    delivered = np.zeros(q.shape[1])
    np.add.at(delivered, np.nonzero(dest_mask)[1], q_next[dest_mask])
    q_next[dest_mask] = 0.0
    return q_next, delivered


def conservation_audit(arrivals: np.ndarray, delivered: np.ndarray,
                       t0: int, t1: int) -> list[tuple[int, float, float, float]]:
    """Per-flow (flow, mean_in, mean_out, relative_gap) over frames [t0, t1).

    Inputs are per-frame per-flow bit series.  A flow with no arrivals in
    the window reports gap 0 if nothing was delivered either, else inf.
    """
    if not 0 <= t0 < t1 <= arrivals.shape[0]:
        raise ValueError("audit window out of range")
    rows = []
    span = t1 - t0
    for f in range(arrivals.shape[1]):
        mean_in = float(arrivals[t0:t1, f].sum()) / span
        mean_out = float(delivered[t0:t1, f].sum()) / span
        if mean_in > 0:
            gap = abs(mean_in - mean_out) / mean_in
        else:
            gap = 0.0 if mean_out == 0 else float("inf")
        rows.append((f, mean_in, mean_out, gap))
    return rows
