"""Randomized self-checks: every fast path is replayed against an
independent reference (exhaustive enumeration, dense SVD) on synthetic
instances.  Used by the `verify` CLI subcommand and by the test suite."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .binprog import BinaryProgram, solve_branch_and_bound, solve_exhaustive
from .channel import DEFAULT_CHANNEL, DEFAULT_RADIOS, NodeClass, beamform_gain
from .scheduler import ConstraintModel, schedule_frame, schedule_oracle
from .topology import FlowSpec, Link, NetworkGraph, Node


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    elapsed_s: float


def random_test_graph(rng: np.random.Generator, n_nodes: int = 8,
                      n_flows: int = 3, link_prob: float = 0.6) -> NetworkGraph:
    """Small synthetic graph with random symmetric connectivity and random
    frozen rates; node classes are irrelevant to scheduling so everything
    but the hub is a relay."""
    if n_nodes < 2:
        raise ValueError("need at least 2 nodes")
    nodes = [Node(0, NodeClass.BS, 0.0, 0.0)]
    for i in range(1, n_nodes):
        x, y = rng.uniform(-100.0, 100.0, size=2)
        nodes.append(Node(i, NodeClass.RN, float(x), float(y)))
    links = []
    connected = set()
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if rng.uniform() >= link_prob and not (i == 0 and j == 1):
                continue  # always keep one edge so the graph is never empty
            r_full = float(rng.uniform(1.0, 10.0))
            r_eq = r_full * float(rng.uniform(0.2, 1.0))
            r_full_rev = float(rng.uniform(1.0, 10.0))
            r_eq_rev = r_full_rev * float(rng.uniform(0.2, 1.0))
            pl = float(rng.uniform(80.0, 120.0))
            bg = 10.0 ** (-pl / 20.0)
            links.append(Link(i, j, pl, bg, r_eq, r_full))
            links.append(Link(j, i, pl, bg, r_eq_rev, r_full_rev))
            connected.add((i, j))
    flows = []
    for f in range(n_flows):
        src = int(rng.integers(0, n_nodes))
        dst = int(rng.integers(0, n_nodes - 1))
        if dst >= src:
            dst += 1
        flows.append(FlowSpec(f, "UL" if f % 2 == 0 else "DL", ue_id=src,
                              sources=(src,), destinations=(dst,)))
    return NetworkGraph(nodes=nodes, links=links, flows=flows,
                        radios=dict(DEFAULT_RADIOS), chan_params=DEFAULT_CHANNEL,
                        pathloss_threshold_db=200.0)


def random_queues(rng: np.random.Generator, g: NetworkGraph,
                  scale: float = 50.0) -> np.ndarray:
    """Continuous backlogs (ties between distinct link sets have measure
    zero) with destination cells zeroed."""
    q = rng.uniform(0.0, scale, size=(g.n_nodes, g.n_flows))
    for fl in g.flows:
        for d in fl.destinations:
            q[d, fl.flow_id] = 0.0
    return q


def random_program(rng: np.random.Generator, n_vars: int,
                   n_constraints: int, integer: bool = True) -> BinaryProgram:
    if integer:
        c = rng.integers(-8, 9, size=n_vars).astype(float)
        a = rng.integers(-3, 4, size=(n_constraints, n_vars)).astype(float)
        d = rng.integers(0, 3 * n_vars, size=n_constraints).astype(float)
    else:
        c = rng.uniform(-5.0, 5.0, size=n_vars)
        a = rng.uniform(-2.0, 2.0, size=(n_constraints, n_vars))
        d = rng.uniform(0.0, float(n_vars), size=n_constraints)
    return BinaryProgram(c=c, a=a, d=d)


def check_scheduler_against_oracle(seed=0, instances: int = 30,
                                   max_nodes: int = 8) -> CheckResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    tried = 0
    for k in range(instances):
        n = int(rng.integers(4, max_nodes + 1))
        g = random_test_graph(rng, n_nodes=n, n_flows=int(rng.integers(1, 4)))
        q = random_queues(rng, g)
        for model in ConstraintModel:
            got = schedule_frame(q, g, model)
            ref = schedule_oracle(q, g, model)
            tried += 1
            if got.objective_value != ref.objective_value:
                return CheckResult(
                    "scheduler-vs-oracle", False,
                    f"instance {k} model {model.value}: "
                    f"{got.objective_value!r} != {ref.objective_value!r}",
                    time.perf_counter() - t0)
    return CheckResult("scheduler-vs-oracle", True,
                       f"{tried} frame solves matched exhaustive search",
                       time.perf_counter() - t0)


def check_solver_against_enumeration(seed=0, instances: int = 40,
                                     max_vars: int = 12) -> CheckResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    for k in range(instances):
        n = int(rng.integers(3, max_vars + 1))
        m = int(rng.integers(1, 7))
        prog = random_program(rng, n, m, integer=True)
        got = solve_branch_and_bound(prog)
        ref = solve_exhaustive(prog)
        if got.proof_status != ref.proof_status:
            return CheckResult("solver-vs-enumeration", False,
                               f"instance {k}: status {got.proof_status} != "
                               f"{ref.proof_status}", time.perf_counter() - t0)
        if got.proof_status == "OPTIMAL" and \
                got.objective_value != ref.objective_value:
            return CheckResult("solver-vs-enumeration", False,
                               f"instance {k}: {got.objective_value!r} != "
                               f"{ref.objective_value!r}",
                               time.perf_counter() - t0)
    return CheckResult("solver-vs-enumeration", True,
                       f"{instances} programs matched 2^n enumeration",
                       time.perf_counter() - t0)


def check_beamforming_against_svd(seed=0, instances: int = 40,
                                  rel_tol: float = 1e-6,
                                  max_side: int = 16) -> CheckResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(instances):
        n_rx = int(rng.integers(1, max_side + 1))
        n_tx = int(rng.integers(1, max_side + 1))
        h = (rng.normal(size=(n_rx, n_tx)) + 1j * rng.normal(size=(n_rx, n_tx)))
        gain, _, _ = beamform_gain(h)
        ref = float(np.linalg.svd(h, compute_uv=False)[0])
        err = abs(gain - ref) / max(ref, 1e-300)
        worst = max(worst, err)
        if err > rel_tol:
            return CheckResult("beamforming-vs-svd", False,
                               f"{n_rx}x{n_tx}: rel err {err:.3e} > {rel_tol:g}",
                               time.perf_counter() - t0)
    return CheckResult("beamforming-vs-svd", True,
                       f"{instances} matrices, worst rel err {worst:.2e}",
                       time.perf_counter() - t0)


def run_verification(seed=0) -> list[CheckResult]:
    return [
        check_solver_against_enumeration(seed),
        check_scheduler_against_oracle(seed),
        check_beamforming_against_svd(seed),
    ]
