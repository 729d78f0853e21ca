"""Small dense 0/1 linear programs: exact branch-and-bound plus a brute-force
enumerator used as its cross-check.

Programs are maximize c.b subject to a @ b <= d with b binary.  Both solvers
recompute the reported objective as a plain python sum over the chosen
variables in index order, so equal assignments produce bit-identical values
regardless of which solver found them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

PROGRAM_FORMAT_HEADER = "# picomesh-binprog v1"

# Integrality test for LP relaxation coordinates.
INTEGRALITY_TOL = 1e-9
# Subtrees whose bound does not beat the incumbent by more than this relative
# margin are pruned.  The margin absorbs the LP solver's objective error, so a
# strictly better solution is only missed if it wins by less than the margin
# (impossible for integer-valued data, measure-zero for continuous data).
PRUNE_REL_TOL = 1e-7
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class BinaryProgram:
    """maximize c.b  s.t.  a @ b <= d,  b in {0,1}^n."""

    c: np.ndarray
    a: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        a = np.asarray(self.a, dtype=float)
        d = np.asarray(self.d, dtype=float)
        if a.size == 0:
            a = a.reshape(0, c.shape[0] if c.ndim else 0)
        if c.ndim != 1 or a.ndim != 2 or d.ndim != 1:
            raise ValueError("c and d must be vectors, a a matrix")
        if a.shape != (d.shape[0], c.shape[0]):
            raise ValueError("inconsistent shapes: need a of shape (len(d), len(c))")
        if not (np.isfinite(c).all() and np.isfinite(a).all() and np.isfinite(d).all()):
            raise ValueError("program data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "d", d)

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.d.shape[0]


@dataclass
class Solution:
    assignment: np.ndarray
    objective_value: float
    node_count_explored: int
    proof_status: str                     # "OPTIMAL" | "INFEASIBLE"
    root_bound: Optional[float] = None    # valid upper bound from the root relaxation


def _exact_value(c: np.ndarray, b: np.ndarray) -> float:
    total = 0.0
    for j in range(len(c)):
        if b[j]:
            total += float(c[j])
    return total


def _feasible(prog: BinaryProgram, b: np.ndarray) -> bool:
    if prog.n_constraints == 0:
        return True
    slack = prog.d - prog.a @ b
    tol = FEAS_TOL * np.maximum(1.0, np.abs(prog.d))
    return bool((slack >= -tol).all())


def solve_exhaustive(prog: BinaryProgram, max_vars: int = 25) -> Solution:
    """Enumerate all 2^n assignments (refused above max_vars).

    Deterministic: among equal-valued optima the lowest assignment integer
    (variable j mapped to bit j) wins.
    """
    n = prog.n_vars
    if n > max_vars:
        raise ValueError(f"refusing exhaustive enumeration beyond {max_vars} variables")
    if n == 0:
        feasible = bool((prog.d >= -FEAS_TOL * np.maximum(1.0, np.abs(prog.d))).all())
        return Solution(np.zeros(0, dtype=np.int8), 0.0, 1,
                        "OPTIMAL" if feasible else "INFEASIBLE")

    tol = FEAS_TOL * np.maximum(1.0, np.abs(prog.d)) if prog.n_constraints else None
    best_val = -math.inf
    best_bits: Optional[np.ndarray] = None
    chunk = 1 << 16
    for lo in range(0, 1 << n, chunk):
        idx = np.arange(lo, min(lo + chunk, 1 << n), dtype=np.int64)
        bits = ((idx[:, None] >> np.arange(n)) & 1).astype(float)
        vals = bits @ prog.c
        if prog.n_constraints:
            ok = ((bits @ prog.a.T) <= prog.d + tol).all(axis=1)
            vals = np.where(ok, vals, -math.inf)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            best_bits = bits[k].astype(np.int8)
    if best_bits is None or best_val == -math.inf:
        return Solution(np.zeros(n, dtype=np.int8), -math.inf, 1 << n, "INFEASIBLE")
    return Solution(best_bits, _exact_value(prog.c, best_bits), 1 << n, "OPTIMAL")


def _coordinate_bound(c: np.ndarray, fixed_value: float, free: np.ndarray) -> float:
    """Constraint-free upper bound: take every free variable with c > 0."""
    ub = fixed_value
    for j in free:
        if c[j] > 0.0:
            ub += float(c[j])
    return ub


def solve_branch_and_bound(prog: BinaryProgram) -> Solution:
    """Exact depth-first branch and bound.

    Bounding is two-stage per node: a free coordinate bound, then the [0,1]
    LP relaxation (HiGHS).  Branching picks the most fractional relaxation
    coordinate (closest to 0.5, ties to the lowest index) and explores the
    1-branch first.  Presolve fixes to zero any variable that can neither
    raise the objective nor relax a constraint (c <= 0 and a nonnegative
    constraint column).
    """
    n = prog.n_vars
    if n == 0:
        sol = solve_exhaustive(prog)
        sol.root_bound = 0.0
        return sol

    c, a, d = prog.c, prog.a, prog.d
    base = -np.ones(n, dtype=np.int8)
    if prog.n_constraints:
        col_ok = (a >= 0.0).all(axis=0)
    else:
        col_ok = np.ones(n, dtype=bool)
    base[(c <= 0.0) & col_ok] = 0

    best_val = -math.inf
    best_bits: Optional[np.ndarray] = None
    nodes = 0
    root_bound: Optional[float] = None

    def prune_margin() -> float:
        if best_val == -math.inf:
            return 0.0
        return PRUNE_REL_TOL * max(1.0, abs(best_val))

    stack = [base]
    first_node = True
    while stack:
        asg = stack.pop()
        nodes += 1
        free = np.flatnonzero(asg < 0)
        ones = asg == 1
        fixed_value = _exact_value(c, ones)

        ub = _coordinate_bound(c, fixed_value, free)
        if first_node:
            root_bound = ub
        if ub <= best_val + prune_margin():
            first_node = False
            continue

        if free.size == 0:
            bits = (asg == 1).astype(np.int8)
            if _feasible(prog, bits):
                val = _exact_value(c, bits)
                if val > best_val:
                    best_val, best_bits = val, bits
            first_node = False
            continue

        if prog.n_constraints:
            rhs = d - a[:, ones].sum(axis=1)
            a_free = a[:, free]
            res = linprog(-c[free], A_ub=a_free, b_ub=rhs,
                          bounds=[(0.0, 1.0)] * free.size, method="highs")
            if res.status == 2:          # relaxation infeasible
                first_node = False
                continue
            if res.status != 0:
                raise RuntimeError(f"LP relaxation failed with status {res.status}")
            x = res.x
            ub = fixed_value + float(-res.fun)
            if first_node:
                root_bound = ub
            if ub <= best_val + prune_margin():
                first_node = False
                continue
        else:
            # no constraints: the coordinate bound is attained
            x = (c[free] > 0.0).astype(float)
        first_node = False

        frac_dist = np.abs(x - 0.5)
        if (np.minimum(x, 1.0 - x) <= INTEGRALITY_TOL).all():
            bits = (asg == 1).astype(np.int8)
            bits[free[x > 0.5]] = 1
            if _feasible(prog, bits):
                val = _exact_value(c, bits)
                if val > best_val:
                    best_val, best_bits = val, bits
            continue      # relaxation integral: subtree solved

        j = free[int(np.argmin(frac_dist))]
        child0 = asg.copy()
        child0[j] = 0
        child1 = asg.copy()
        child1[j] = 1
        stack.append(child0)
        stack.append(child1)              # popped first

    if best_bits is None:
        return Solution(np.zeros(n, dtype=np.int8), -math.inf, nodes,
                        "INFEASIBLE", root_bound)
    sol = Solution(best_bits, _exact_value(c, best_bits), nodes, "OPTIMAL", root_bound)
    if sol.root_bound is not None and sol.root_bound < sol.objective_value - 1e-6 * max(1.0, abs(sol.objective_value)):
        raise RuntimeError("root relaxation bound fell below the integer optimum")
    return sol


def dumps_program(prog: BinaryProgram) -> str:
    """Replayable one-program text dump."""
    lines = [PROGRAM_FORMAT_HEADER,
             "maximize " + " ".join(repr(float(x)) for x in prog.c)]
    for i in range(prog.n_constraints):
        lines.append("subject-to " + " ".join(repr(float(x)) for x in prog.a[i])
                     + " <= " + repr(float(prog.d[i])))
    return "\n".join(lines) + "\n"


def loads_program(text: str) -> BinaryProgram:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != PROGRAM_FORMAT_HEADER:
        raise ValueError("unrecognized program header")
    if len(lines) < 2 or not lines[1].startswith("maximize"):
        raise ValueError("missing maximize line")
    c = np.array([float(x) for x in lines[1].split()[1:]], dtype=float)
    rows, rhs = [], []
    for ln in lines[2:]:
        if not ln.startswith("subject-to"):
            raise ValueError(f"malformed constraint line: {ln!r}")
        body = ln[len("subject-to"):].strip()
        lhs_txt, rhs_txt = body.split("<=")
        rows.append([float(x) for x in lhs_txt.split()])
        rhs.append(float(rhs_txt))
    a = np.array(rows, dtype=float) if rows else np.zeros((0, c.shape[0]))
    return BinaryProgram(c=c, a=a, d=np.array(rhs, dtype=float))
