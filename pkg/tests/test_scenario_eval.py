import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import naive_dispatch_expectation, naive_location_expectation
from stormstage.data_model import ForecastTree, instance_from_dict, normalize_tree
from stormstage.prestage import solve_prestage
from stormstage.scenario_eval import (EvaluationError, LocationExpectation, OutcomePerformance,
                                      dispatch_expectations, evaluate_grid, evaluate_outcome, location_expectations)


def two_site_instance():
    return instance_from_dict({
        "locations": [
            {"id": "A", "prestage_candidate": True, "capacity_by_supply": {"w": 5}},
            {"id": "B", "prestage_candidate": True, "capacity_by_supply": {"w": 5}},
            {"id": "J1"}, {"id": "J2"}],
        "supply_types": [{"id": "w"}],
        "demands": {"base": [{"location": "J1", "supply": "w", "units": 10}],
                    "outcomes": {
                        "plan": {"entries": [{"location": "J1", "supply": "w", "units": 10}]},
                        "shift": {"entries": [{"location": "J2", "supply": "w", "units": 8}], "destroyed": []},
                        "lossA": {"entries": [{"location": "J1", "supply": "w", "units": 10}],
                                  "destroyed": ["A", "B"]}}},
        "modes": [{"from": "A", "to": "J1", "mode": "t", "travel_time": 4},
                  {"from": "B", "to": "J1", "mode": "t", "travel_time": 6},
                  {"from": "B", "to": "J2", "mode": "t", "travel_time": 3}],
        "forecast": {"outcomes": ["plan", "shift", "lossA"], "scenarios": ["s"], "intermediate_locations": ["L"],
                     "dispatch_times": [10],
                     "outcome_weights": [{"outcome": o, "location": "L", "scenario": "s", "p": p}
                                         for o, p in (("plan", 0.5), ("shift", 0.3), ("lossA", 0.2))],
                     "location_weights": [{"location": "L", "time": 10, "p": 1.0}],
                     "planning_outcome": "plan"},
    })


def test_self_consistency():
    inst = two_site_instance()
    plan = solve_prestage(inst)
    closing, frac = evaluate_outcome(plan, inst, "plan")["w"]
    assert frac == 0.0
    assert closing == 6.0


def test_shifted_demand_reachable_from_one_site():
    inst = two_site_instance()
    plan = solve_prestage(inst)
    closing, frac = evaluate_outcome(plan, inst, "shift")["w"]
    assert frac == pytest.approx(3 / 8)
    assert closing == 3.0


def test_destroyed_stock_means_total_loss():
    inst = two_site_instance()
    plan = solve_prestage(inst)
    assert evaluate_outcome(plan, inst, "lossA")["w"] == (0.0, 1.0)


def test_unknown_outcome():
    inst = two_site_instance()
    with pytest.raises(EvaluationError):
        evaluate_outcome(solve_prestage(inst), inst, "nope")


def test_grid_parallel_matches_serial():
    inst = two_site_instance()
    plan = solve_prestage(inst)
    assert evaluate_grid(plan, inst, jobs=2) == evaluate_grid(plan, inst, jobs=1)


def _tree(n_out=2, weights=None):
    outs = tuple(f"o{i}" for i in range(n_out))
    ow = {(o, "L", "s"): w for o, w in zip(outs, weights)}
    return ForecastTree(outs, ("s",), ("L",), (5.0,), ow, {("L", 5.0): 1.0})


def test_location_expectation_examples():
    perf = OutcomePerformance({("k", "o0", "s"): 10.0, ("k", "o1", "s"): 20.0},
                              {("k", "o0", "s"): 0.0, ("k", "o1", "s"): 0.5})
    le = location_expectations(perf, _tree(2, (0.5, 0.5)))
    assert le.exp_closing[("k", "L")] == 15.0
    le1 = location_expectations(perf, _tree(2, (1.0, 0.0)))
    assert le1.exp_closing[("k", "L")] == 10.0


def test_missing_cell_with_weight():
    perf = OutcomePerformance({("k", "o0", "s"): 10.0}, {("k", "o0", "s"): 0.0})
    with pytest.raises(EvaluationError):
        location_expectations(perf, _tree(2, (0.5, 0.5)))


def test_dispatch_expectation_examples():
    tree = ForecastTree(("o",), ("s",), ("L1", "L2"), (3.0,), {}, {("L1", 3.0): 0.5, ("L2", 3.0): 0.5})
    le = LocationExpectation({("k", "L1"): 75.0, ("k", "L2"): 75.0}, {("k", "L1"): 0.1, ("k", "L2"): 0.1})
    de = dispatch_expectations(le, tree)
    assert de.exp_closing[("k", 3.0)] == 75.0


def test_noru_dispatch_expectations(noru_instance):
    plan = solve_prestage(noru_instance)
    perf = evaluate_grid(plan, noru_instance)
    de = dispatch_expectations(location_expectations(perf, noru_instance.forecast_tree), noru_instance.forecast_tree)
    got = [de.exp_closing[("water", t)] for t in (49, 37, 25, 13, 1)]
    assert got == pytest.approx([106, 98, 75, 71, 66], abs=1e-9)
    unmet = [100 * de.exp_unmet[("water", t)] for t in (49, 37, 25, 13, 1)]
    assert unmet == pytest.approx([29, 28, 20, 15, 9], abs=1e-9)


def random_tree_and_perf(rng, n_out=5, n_scen=3, n_loc=4, n_time=3, sparse=True):
    outs = tuple(f"o{i}" for i in range(n_out))
    scen = tuple(f"s{i}" for i in range(n_scen))
    locs = tuple(f"L{i}" for i in range(n_loc))
    times = tuple(float(t) for t in sorted(rng.choice(60, size=n_time, replace=False) + 1, reverse=True))
    ow = {}
    for l in locs:
        rows = [s for s in scen if not sparse or rng.uniform() < 0.7] or [scen[0]]
        for s in rows:
            raw = {o: float(rng.uniform(0, 1)) * (rng.uniform() < 0.8) for o in outs}
            if sum(raw.values()) == 0:
                raw[outs[0]] = 1.0
            ow.update({(o, l, s): p for o, p in raw.items()})
    lw = {(l, t): float(rng.uniform(0.01, 1)) for l in locs for t in times}
    tree = normalize_tree(ForecastTree(outs, scen, locs, times, ow, lw))
    perf = OutcomePerformance(
        {("k", o, s): float(rng.uniform(0, 200)) for o in outs for s in scen},
        {("k", o, s): float(rng.uniform(0, 1)) for o in outs for s in scen})
    return tree, perf


@given(st.integers(0, 10**6))
def test_expectations_match_naive_sums(seed):
    tree, perf = random_tree_and_perf(np.random.default_rng(seed))
    le = location_expectations(perf, tree)
    de = dispatch_expectations(le, tree)
    for l in tree.intermediate_locations:
        c, d = naive_location_expectation(perf, tree, "k", l)
        assert le.exp_closing[("k", l)] == pytest.approx(c, abs=1e-12, rel=1e-12)
        assert le.exp_unmet[("k", l)] == pytest.approx(d, abs=1e-12, rel=1e-12)
    for t in tree.dispatch_times:
        c, d = naive_dispatch_expectation(perf, tree, "k", t)
        assert de.exp_closing[("k", t)] == pytest.approx(c, abs=1e-12, rel=1e-12)
        assert de.exp_unmet[("k", t)] == pytest.approx(d, abs=1e-12, rel=1e-12)


@given(st.integers(0, 10**6))
def test_single_scenario_rows_are_convex_combinations(seed):
    rng = np.random.default_rng(seed)
    tree, perf = random_tree_and_perf(rng, n_scen=1, sparse=False)
    lo, hi = min(perf.closing_time.values()), max(perf.closing_time.values())
    de = dispatch_expectations(location_expectations(perf, tree), tree)
    for v in de.exp_closing.values():
        assert lo - 1e-9 <= v <= hi + 1e-9
    for v in de.exp_unmet.values():
        assert 0.0 <= v <= 1.0 + 1e-12


@given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    tree, p1 = random_tree_and_perf(rng)
    _, p2 = random_tree_and_perf(np.random.default_rng(seed + 1))
    mixed = location_expectations(p1.combine(p2, a, b), tree)
    e1, e2 = location_expectations(p1, tree), location_expectations(p2, tree)
    for key, v in mixed.exp_closing.items():
        assert v == pytest.approx(a * e1.exp_closing[key] + b * e2.exp_closing[key], abs=1e-9)


@given(st.integers(0, 10**6), st.floats(0, 1))
def test_moving_mass_to_better_outcome(seed, frac):
    rng = np.random.default_rng(seed)
    tree, perf = random_tree_and_perf(rng, n_scen=1, sparse=False)
    before = location_expectations(perf, tree)
    l, s = tree.intermediate_locations[0], tree.scenarios[0]
    worst = max(tree.outcomes, key=lambda o: perf.closing_time[("k", o, s)])
    best = min(tree.outcomes, key=lambda o: perf.closing_time[("k", o, s)])
    ow = dict(tree.outcome_weights)
    moved = frac * ow[(worst, l, s)]
    ow[(worst, l, s)] -= moved
    ow[(best, l, s)] += moved
    shifted = ForecastTree(tree.outcomes, tree.scenarios, tree.intermediate_locations, tree.dispatch_times, ow,
                           tree.location_weights)
    after = location_expectations(perf, shifted)
    assert after.exp_closing[("k", l)] <= before.exp_closing[("k", l)] + 1e-9


@given(st.integers(0, 10**6))
def test_evaluated_outputs_in_range(seed):
    from conftest import random_p1_doc
    rng = np.random.default_rng(seed)
    doc = random_p1_doc(rng)
    sites = [l["id"] for l in doc["locations"] if l.get("prestage_candidate")]
    doc["demands"]["outcomes"] = {
        "o1": {"entries": doc["demands"]["base"]},
        "o2": {"entries": [dict(r, units=r["units"] * 2) for r in doc["demands"]["base"]],
               "destroyed": sites[:1]}}
    doc["forecast"] = {"outcomes": ["o1", "o2"], "scenarios": ["s"], "intermediate_locations": ["L"],
                       "dispatch_times": [1],
                       "outcome_weights": [{"outcome": "o1", "location": "L", "scenario": "s", "p": 0.5},
                                           {"outcome": "o2", "location": "L", "scenario": "s", "p": 0.5}],
                       "location_weights": [{"location": "L", "time": 1, "p": 1.0}]}
    inst = instance_from_dict(doc)
    perf = evaluate_grid(solve_prestage(inst), inst)
    assert all(v >= 0 for v in perf.closing_time.values())
    assert all(0 <= v <= 1 for v in perf.unmet_fraction.values())
    assert not any(math.isnan(v) for v in perf.unmet_fraction.values())
