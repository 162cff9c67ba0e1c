import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import lp_vertex_enumeration
from stormstage.opt_backend import (DESK_SCALE_LIMIT, INFEASIBLE, OPTIMAL, UNBOUNDED, LinearModel, ModelError,
                                    NodeLimitError, solve, solve_lp, solve_mip)


def test_single_variable_bound():
    m = LinearModel()
    x = m.add_var("x", obj=1.0)
    m.add_constr({x: 1}, ">=", 3)
    m.add_constr({x: 1}, "<=", 10)
    sol = solve_lp(m)
    assert sol.status == OPTIMAL
    assert sol[x] == pytest.approx(3.0)
    assert sol.objective_value == pytest.approx(3.0)


def test_degenerate_face_any_vertex():
    m = LinearModel()
    x, y = m.add_var("x", obj=1), m.add_var("y", obj=1)
    m.add_constr({x: 1, y: 1}, ">=", 1)
    sol = solve_lp(m)
    assert sol.objective_value == pytest.approx(1.0)
    assert sol[x] + sol[y] == pytest.approx(1.0)


def test_infeasible_and_unbounded_are_statuses():
    m = LinearModel()
    x = m.add_var("x")
    m.add_constr({x: 1}, "<=", -1)
    assert solve_lp(m).status == INFEASIBLE
    m2 = LinearModel()
    y = m2.add_var("y", obj=-1)
    assert solve_lp(m2).status == UNBOUNDED
    assert y == 0


def test_malformed_models_raise():
    m = LinearModel()
    with pytest.raises(ModelError):
        m.add_var("x", lb=2, ub=1)
    m.add_var("x")
    with pytest.raises(ModelError):
        m.add_var("x")
    with pytest.raises(ModelError):
        m.add_constr({0: 1}, "<", 1)
    m.add_constr({5: 1}, "<=", 1)
    with pytest.raises(ModelError, match="undeclared"):
        solve_lp(m)


def test_solve_lp_rejects_integers():
    m = LinearModel()
    m.add_var("z", 0, 1, integer=True)
    with pytest.raises(ModelError):
        solve_lp(m)


def test_desk_scale_limit():
    m = LinearModel()
    for i in range(DESK_SCALE_LIMIT + 1):
        m.add_var(f"x{i}")
    with pytest.raises(ModelError, match="instance exceeds desk scale"):
        solve_lp(m)


def test_single_binary():
    m = LinearModel()
    x = m.add_var("x", 0, 1, integer=True, obj=-1)
    sol = solve_mip(m)
    assert sol[x] == 1.0


def test_integral_relaxation_needs_no_branching():
    m = LinearModel()
    x = m.add_var("x", 0, 4, integer=True, obj=1)
    y = m.add_var("y", 0, 4, integer=True, obj=2)
    m.add_constr({x: 1, y: 1}, ">=", 3)
    sol = solve_mip(m)
    assert sol.nodes == 0
    m_lp = LinearModel()
    a = m_lp.add_var("x", 0, 4, obj=1)
    b = m_lp.add_var("y", 0, 4, obj=2)
    m_lp.add_constr({a: 1, b: 1}, ">=", 3)
    assert sol.objective_value == pytest.approx(solve_lp(m_lp).objective_value)


def _knapsack(values, weights, cap):
    m = LinearModel("knap")
    xs = [m.add_var(f"x{i}", 0, 1, integer=True, obj=-v) for i, v in enumerate(values)]
    m.add_constr({x: w for x, w in zip(xs, weights)}, "<=", cap)
    return m, xs


def _knapsack_enum(values, weights, cap):
    best = 0.0
    for bits in itertools.product((0, 1), repeat=len(values)):
        if sum(b * w for b, w in zip(bits, weights)) <= cap:
            best = max(best, sum(b * v for b, v in zip(bits, values)))
    return best


def test_knapsack_four_items():
    values, weights = [10, 13, 7, 8], [5, 7, 4, 3]
    m, _ = _knapsack(values, weights, 10)
    assert -solve_mip(m).objective_value == pytest.approx(_knapsack_enum(values, weights, 10))


@given(st.lists(st.tuples(st.integers(1, 30), st.integers(1, 15)), min_size=1, max_size=12),
       st.integers(0, 60))
def test_mip_matches_enumeration(items, cap):
    values = [v for v, _ in items]
    weights = [w for _, w in items]
    m, _ = _knapsack(values, weights, cap)
    sol = solve_mip(m)
    assert sol.status == OPTIMAL
    assert -sol.objective_value == pytest.approx(_knapsack_enum(values, weights, cap), abs=1e-7)
    assert m.max_violation(sol.x) <= 1e-7


@given(st.integers(0, 10_000))
def test_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    # 2 sources x 2 sinks plus a slack column: five variables, transportation shaped
    supply = rng.integers(5, 15, size=2)
    demand = rng.integers(1, 8, size=2)
    cost = rng.integers(1, 20, size=5).astype(float)
    A = [[1, 1, 0, 0, 0], [0, 0, 1, 1, 0], [-1, 0, -1, 0, -1], [0, -1, 0, -1, 0]]
    b = [supply[0], supply[1], -demand[0], -demand[1]]
    m = LinearModel()
    xs = [m.add_var(f"x{i}", obj=c) for i, c in enumerate(cost)]
    for row, rhs in zip(A, b):
        m.add_constr({x: a for x, a in zip(xs, row)}, "<=", float(rhs))
    sol = solve_lp(m)
    expected = lp_vertex_enumeration(cost, A, b)
    assert sol.objective_value == pytest.approx(expected, rel=1e-7, abs=1e-9)


def test_deterministic_values():
    values, weights = [5, 5, 5, 5], [3, 3, 3, 3]
    runs = [solve_mip(_knapsack(values, weights, 7)[0]).x for _ in range(3)]
    assert all(np.array_equal(runs[0], r) for r in runs)


def test_node_limit_carries_incumbent():
    values = [9, 11, 13, 15, 17, 19, 21, 23]
    weights = [5, 6, 7, 8, 9, 10, 11, 12]
    m, _ = _knapsack(values, weights, 31)
    with pytest.raises(NodeLimitError) as info:
        solve_mip(m, node_limit=1)
    assert info.value.incumbent is None or info.value.incumbent.status == OPTIMAL


def test_write_lp(tmp_path):
    m = LinearModel("demo")
    x = m.add_var("x", 0, 3, integer=True, obj=2)
    y = m.add_var("y", obj=-1)
    m.add_constr({x: 1, y: 1}, "<=", 4, "cap")
    path = tmp_path / "demo.lp"
    m.write_lp(path)
    text = path.read_text()
    assert text.startswith("\\ demo\nMinimize\n")
    assert " c0: + 1 x0 + 1 x1 <= 4" in text
    assert "General" in text and "End" in text
    assert solve(m).status == OPTIMAL
