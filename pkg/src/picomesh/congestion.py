"""Admission control: queue-backlog-driven source rates.

Sources look at their own backlog and admit new bits at the rate where the
marginal utility of going faster equals the backlog-scaled price q/V: lambda
= clamp(Udot^{-1}(q/V), 0, lambda_max).  Large V chases utility harder at the
cost of deeper queues; the default V = 10 * R_max^2 scales with the drop's
best full-power link rate.  The admission ceiling lambda_max = A_max * R_max
is the most a node could conceivably forward with every neighbor served at
the top rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .queues import source_indices
from .topology import NetworkGraph


class Utility:
    """Strictly-concave-unless-noted utility of a long-term flow rate."""

    name = "base"

    def value(self, x: float) -> float:
        raise NotImplementedError

    def inverse_derivative(self, y: float) -> float:
        """Rate at which the marginal utility equals y (y >= 0)."""
        raise NotImplementedError


class ProportionalFair(Utility):
    """U(x) = 0.5 * ln(x)."""

    name = "proportional_fair"

    def value(self, x: float) -> float:
        return 0.5 * math.log(x) if x > 0 else -math.inf

    def inverse_derivative(self, y: float) -> float:
        if y < 0:
            raise ValueError("marginal utility must be nonnegative")
        return math.inf if y == 0 else 1.0 / (2.0 * y)


class ScaledLog(Utility):
    """U(x) = scale * ln(x)."""

    name = "scaled_log"

    def __init__(self, scale: float = 1.0):
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.scale = scale

    def value(self, x: float) -> float:
        return self.scale * math.log(x) if x > 0 else -math.inf

    def inverse_derivative(self, y: float) -> float:
        if y < 0:
            raise ValueError("marginal utility must be nonnegative")
        return math.inf if y == 0 else self.scale / y


class Linear(Utility):
    """U(x) = x.  Usable for scoring only: not strictly concave, so it has
    no inverse marginal and cannot drive admission control."""

    name = "linear"

    def value(self, x: float) -> float:
        return float(x)

    def inverse_derivative(self, y: float) -> float:
        raise ValueError("linear utility is not strictly concave; "
                         "admission control requires an invertible marginal")


def make_utility(name: str, scale: float = 1.0) -> Utility:
    if name == "proportional_fair":
        return ProportionalFair()
    if name == "scaled_log":
        return ScaledLog(scale)
    if name == "linear":
        return Linear()
    raise ValueError(f"unknown utility {name!r}")


@dataclass
class AdmissionState:
    """Frozen admission parameters for one run plus the last rate matrix."""

    utility: Utility
    v: float
    lambda_max: float
    src_nodes: np.ndarray
    src_flows: np.ndarray
    lam: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.v <= 0 or not math.isfinite(self.v):
            raise ValueError("V must be positive and finite")
        if self.lambda_max < 0 or not math.isfinite(self.lambda_max):
            raise ValueError("lambda_max must be finite and nonnegative")


def make_admission(g: NetworkGraph, utility: Utility,
                   v: Optional[float] = None, v_scale: float = 10.0) -> AdmissionState:
    """Build the admission state for a drop.

    v defaults to v_scale * R_max^2 with R_max the drop's best full-power
    link rate; lambda_max = max_degree * R_max.
    """
    r_max = g.max_rate_full
    if r_max <= 0:
        raise ValueError("graph has no usable links; cannot scale admission")
    if v is None:
        v = v_scale * r_max * r_max
    lam_max = g.max_degree * r_max
    nodes, flows = source_indices(g)
    return AdmissionState(utility=utility, v=v, lambda_max=lam_max,
                          src_nodes=nodes, src_flows=flows)


def update_rates(q: np.ndarray, state: AdmissionState) -> np.ndarray:
    """Admission rates for this frame: nonzero only at source cells, each
    clamp(Udot^{-1}(q/V), 0, lambda_max); an empty backlog admits at the
    ceiling.  Nonincreasing in the backlog."""
    lam = np.zeros_like(q)
    for node, flow in zip(state.src_nodes, state.src_flows):
        y = q[node, flow] / state.v
        raw = state.utility.inverse_derivative(float(y))
        lam[node, flow] = min(max(raw, 0.0), state.lambda_max)
    state.lam = lam
    return lam


def utility_of_rates(rates: np.ndarray, utility: Utility) -> float:
    """Total utility of per-flow long-term rates; -inf when a log utility
    sees a starved flow."""
    total = 0.0
    for x in np.asarray(rates, dtype=float).ravel():
        total += utility.value(float(x))
    return total
