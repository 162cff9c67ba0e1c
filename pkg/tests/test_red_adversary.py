import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from oracles import red_grid_1d, red_grid_2d, red_value_grid
from stormstage.red_adversary import (BudgetError, RedBudget, effort_to_impact, red_objective, solve_red)

L1, L2 = ("a", "b"), ("b", "c")


def test_effort_to_impact_examples():
    z = effort_to_impact({L1: 0.0, L2: math.log(2)})
    assert z[L1] == 0.0 and z[L2] == pytest.approx(1.0, abs=1e-15)
    assert effort_to_impact({L1: 1.0})[L1] == pytest.approx(math.e - 1, abs=1e-12)
    with pytest.raises(ValueError):
        effort_to_impact({L1: 1.5})


def test_empty_and_zero_flows():
    prof = solve_red({L1: 0, L2: 0}, RedBudget())
    assert prof.effort == {} and prof.objective == 0.0


def test_budget_validation():
    with pytest.raises(BudgetError):
        solve_red({L1: 1}, RedBudget(epsilon=0))
    with pytest.raises(BudgetError):
        solve_red({L1: 1}, RedBudget(per_link={L1: -1.0}))
    with pytest.warns(UserWarning):
        solve_red({L1: 1}, RedBudget(total=5.0, per_link=1.0))


def test_single_link_matches_grid():
    budget = RedBudget(0.01, 0.01, 1.0, 1.0)
    prof = solve_red({L1: 10}, budget)
    w_grid, v_grid = red_grid_1d(10, 1, 1, 0.01, 0.01)
    assert prof.effort[L1] == pytest.approx(w_grid, abs=1e-4)
    assert prof.objective >= v_grid - 1e-12
    assert prof.kkt_residual <= 1e-8


def test_heavier_link_gets_more_effort():
    prof = solve_red({L1: 30, L2: 1}, RedBudget(0.1, 0.1, 1.0, 1.0))
    assert prof.effort[L1] > prof.effort[L2]
    w, v = red_grid_2d([30, 1], [1, 1], 1.0, 0.1, 0.1)
    assert prof.objective == pytest.approx(v, abs=1e-4)


def test_profile_outputs(tmp_path):
    prof = solve_red({L1: 30, L2: 1}, RedBudget(0.1, 0.1, 1.0, 1.0))
    assert all(z > 0.05 for z in prof.heavy_links(0.05).values())
    assert L1 in prof.heavy_links(0.05)
    assert prof.top_table().splitlines()[1].startswith("a->b")
    prof.write(tmp_path / "red.json")
    assert (tmp_path / "red.json").read_text().count('"W"') == 2
    assert red_objective({L1: 30, L2: 1}, RedBudget(0.1, 0.1, 1.0, 1.0), prof.effort) == pytest.approx(
        prof.objective, abs=1e-12)


def test_full_objective_is_not_concave():
    # the exponential reward is convex in W, so midpoint concavity fails for large flows
    n, b, beta, eps = [50.0], [1.0], 1.0, 0.01
    w = np.array([[0.0], [0.9], [0.45]])
    f0, f1, fm = red_value_grid(n, b, beta, eps, eps, w)
    assert fm < (f0 + f1) / 2


budgets = st.tuples(st.floats(0.005, 0.1), st.floats(0.005, 0.1), st.floats(0.3, 2.0),
                    st.floats(0.3, 2.0), st.floats(0.3, 2.0))


@given(st.lists(st.floats(0, 1), min_size=4, max_size=4), budgets)
def test_barrier_part_is_concave(pts, bud):
    eps, eps_hat, beta, b1, b2 = bud
    w1, w2 = np.array(pts[:2]), np.array(pts[2:])
    b = np.array([b1, b2])
    zero = np.zeros(2)
    f1, f2, fm = (red_value_grid(zero, b, beta, eps, eps_hat, w[None])[0] for w in (w1, w2, (w1 + w2) / 2))
    assume(np.isfinite(f1) and np.isfinite(f2))
    assert fm >= (f1 + f2) / 2 - 1e-10


@pytest.mark.filterwarnings("ignore:total budget exceeds")
@settings(max_examples=30)
@given(st.integers(1, 40), st.integers(1, 40), budgets)
def test_monotone_in_flow(na, nb, bud):
    assume(na != nb)
    eps, eps_hat, beta, b1, _ = bud
    prof = solve_red({L1: na, L2: nb}, RedBudget(eps, eps_hat, beta, b1))
    hi, lo = (L1, L2) if na > nb else (L2, L1)
    assert prof.effort[hi] >= prof.effort[lo] - 1e-9


@settings(max_examples=30)
@given(st.lists(st.integers(0, 40), min_size=1, max_size=5), budgets)
def test_profile_invariants(flows, bud):
    eps, eps_hat, beta, b1, _ = bud
    links = [(f"n{i}", f"n{i + 1}") for i in range(len(flows))]
    budget = RedBudget(eps, eps_hat, beta, b1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prof = solve_red(dict(zip(links, flows)), budget)
    assert set(prof.effort) == {l for l, n in zip(links, flows) if n > 0}
    for k, w in prof.effort.items():
        assert 0 <= w <= 1
        assert b1 - w >= 1e-9
        assert prof.cost_increase[k] == pytest.approx(math.expm1(w), abs=1e-12)
    if prof.effort:
        assert beta - sum(prof.effort.values()) >= 1e-9
        assert prof.kkt_residual <= 1e-8


@pytest.mark.filterwarnings("ignore:total budget exceeds")
@pytest.mark.parametrize("flows,b,beta", [([5.0], [1.0], 0.6), ([5.0], [0.4], 2.0), ([5.0, 3.0], [1.0, 1.0], 1.2),
                                          ([5.0, 3.0], [0.3, 0.5], 3.0)])
def test_vanishing_barrier_limit(flows, b, beta):
    links = [L1, L2][:len(flows)]
    prof = solve_red(dict(zip(links, flows)), RedBudget(1e-6, 1e-6, beta, dict(zip(links, b))))
    target = min(beta, sum(min(x, 1.0) for x in b))
    assert sum(prof.effort.values()) == pytest.approx(target, abs=1e-4)
    if len(flows) == 1:
        w, _ = red_grid_1d(flows[0], b[0], beta, 1e-6, 1e-6)
    else:
        w, _ = red_grid_2d(flows, b, beta, 1e-6, 1e-6)
    assert sum(prof.effort.values()) == pytest.approx(float(np.sum(w)), abs=2e-3)
