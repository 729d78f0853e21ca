import math

import numpy as np
import pytest

from picomesh.binprog import (BinaryProgram, dumps_program, loads_program,
                              solve_branch_and_bound, solve_exhaustive)
from picomesh.verify import random_program


def test_unconstrained_takes_positive_coefficients():
    prog = BinaryProgram(c=np.array([5.0, 3.0]), a=np.zeros((0, 2)),
                         d=np.zeros(0))
    for solve in (solve_exhaustive, solve_branch_and_bound):
        sol = solve(prog)
        assert sol.proof_status == "OPTIMAL"
        assert sol.assignment.tolist() == [1, 1]
        assert sol.objective_value == 8.0


def test_packing_constraint_picks_heavier_variable():
    prog = BinaryProgram(c=np.array([5.0, 4.0]),
                         a=np.array([[1.0, 1.0]]), d=np.array([1.0]))
    for solve in (solve_exhaustive, solve_branch_and_bound):
        sol = solve(prog)
        assert sol.assignment.tolist() == [1, 0]
        assert sol.objective_value == 5.0


def test_empty_program():
    prog = BinaryProgram(c=np.zeros(0), a=np.zeros((0, 0)), d=np.zeros(0))
    for solve in (solve_exhaustive, solve_branch_and_bound):
        sol = solve(prog)
        assert sol.proof_status == "OPTIMAL"
        assert sol.objective_value == 0.0
        assert sol.assignment.shape == (0,)


def test_infeasible_program_reported():
    # 0*b <= -1 can never hold
    prog = BinaryProgram(c=np.array([1.0]), a=np.array([[0.0]]),
                         d=np.array([-1.0]))
    for solve in (solve_exhaustive, solve_branch_and_bound):
        sol = solve(prog)
        assert sol.proof_status == "INFEASIBLE"
        assert sol.objective_value == -math.inf


def test_all_negative_objective_stays_home():
    prog = BinaryProgram(c=np.array([-2.0, -1.0, -5.0]),
                         a=np.array([[1.0, 1.0, 1.0]]), d=np.array([2.0]))
    sol = solve_branch_and_bound(prog)
    assert sol.assignment.tolist() == [0, 0, 0]
    assert sol.objective_value == 0.0
    # presolve fixes every variable, so the root is the only node
    assert sol.node_count_explored == 1


def test_branch_and_bound_matches_enumeration_integer_data():
    rng = np.random.default_rng(7)
    for _ in range(80):
        n = int(rng.integers(2, 13))
        m = int(rng.integers(1, 6))
        prog = random_program(rng, n, m, integer=True)
        ref = solve_exhaustive(prog)
        got = solve_branch_and_bound(prog)
        assert got.proof_status == ref.proof_status
        if ref.proof_status == "OPTIMAL":
            assert got.objective_value == ref.objective_value
            slack = prog.d - prog.a @ got.assignment
            assert (slack >= -1e-9).all()


def test_branch_and_bound_matches_enumeration_continuous_data():
    rng = np.random.default_rng(11)
    for _ in range(40):
        n = int(rng.integers(2, 11))
        m = int(rng.integers(1, 5))
        prog = random_program(rng, n, m, integer=False)
        ref = solve_exhaustive(prog)
        got = solve_branch_and_bound(prog)
        assert got.proof_status == ref.proof_status
        if ref.proof_status == "OPTIMAL":
            assert got.objective_value == pytest.approx(ref.objective_value,
                                                        rel=1e-6, abs=1e-9)


def test_root_bound_dominates_optimum():
    rng = np.random.default_rng(23)
    for _ in range(40):
        n = int(rng.integers(2, 12))
        prog = random_program(rng, n, int(rng.integers(1, 5)), integer=True)
        sol = solve_branch_and_bound(prog)
        if sol.proof_status == "OPTIMAL":
            assert sol.root_bound is not None
            assert sol.root_bound >= sol.objective_value - 1e-9


def test_node_count_bounded_by_full_tree():
    rng = np.random.default_rng(31)
    for _ in range(20):
        n = int(rng.integers(2, 10))
        prog = random_program(rng, n, 3, integer=True)
        sol = solve_branch_and_bound(prog)
        assert 1 <= sol.node_count_explored <= 2 ** (n + 1)


def test_exhaustive_refuses_large_programs():
    n = 26
    prog = BinaryProgram(c=np.ones(n), a=np.zeros((0, n)), d=np.zeros(0))
    with pytest.raises(ValueError):
        solve_exhaustive(prog)


def test_equal_optima_resolve_identically():
    # two symmetric variables under a packing constraint: both solvers must
    # return the same (lowest-index) winner, not merely the same value
    prog = BinaryProgram(c=np.array([3.0, 3.0]),
                         a=np.array([[1.0, 1.0]]), d=np.array([1.0]))
    ref = solve_exhaustive(prog)
    got = solve_branch_and_bound(prog)
    assert ref.assignment.tolist() == got.assignment.tolist() == [1, 0]


def test_dump_load_roundtrip():
    rng = np.random.default_rng(5)
    prog = random_program(rng, 6, 3, integer=False)
    back = loads_program(dumps_program(prog))
    assert np.array_equal(back.c, prog.c)
    assert np.array_equal(back.a, prog.a)
    assert np.array_equal(back.d, prog.d)
    assert dumps_program(back) == dumps_program(prog)


def test_loads_rejects_bad_header():
    with pytest.raises(ValueError):
        loads_program("maximize 1.0\n")


def test_program_shape_validation():
    with pytest.raises(ValueError):
        BinaryProgram(c=np.ones(3), a=np.ones((2, 2)), d=np.ones(2))
    with pytest.raises(ValueError):
        BinaryProgram(c=np.array([np.inf]), a=np.zeros((0, 1)), d=np.zeros(0))
