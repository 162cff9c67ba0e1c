"""Fixed-stock re-solves across landfall outcomes and the forecast-tree folds.

Closing time is the longest travel time among arcs that carry flow
(all deliveries leave in parallel); a re-solve with no deliveries has
closing time 0.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .data_model import ForecastTree, ProblemInstance
from .prestage import PrestagePlan, _solve_distribution

FLOW_EPS = 1e-9


@dataclass
class OutcomePerformance:
    closing_time: dict[tuple[str, str, str], float] = field(default_factory=dict)
    unmet_fraction: dict[tuple[str, str, str], float] = field(default_factory=dict)

    def combine(self, other: "OutcomePerformance", a: float, b: float) -> "OutcomePerformance":
        keys = self.closing_time.keys()
        return OutcomePerformance(
            {key: a * self.closing_time[key] + b * other.closing_time[key] for key in keys},
            {key: a * self.unmet_fraction[key] + b * other.unmet_fraction[key] for key in keys},
        )


@dataclass
class LocationExpectation:
    exp_closing: dict[tuple[str, str], float]
    exp_unmet: dict[tuple[str, str], float]


@dataclass
class DispatchExpectation:
    exp_closing: dict[tuple[str, float], float]
    exp_unmet: dict[tuple[str, float], float]

    @property
    def supplies(self) -> list[str]:
        return sorted({k for (k, t) in self.exp_closing})

    @property
    def times(self) -> list[float]:
        return sorted({t for (k, t) in self.exp_closing}, reverse=True)


class EvaluationError(ValueError):
    pass


def evaluate_outcome(plan: PrestagePlan, instance: ProblemInstance, outcome: str,
                     scenario: str | None = None) -> dict[str, tuple[float, float]]:
    """Re-solve distribution with the plan's site stocks fixed.

    Returns ``{supply: (closing_time, unmet_fraction)}``. The scenario
    index does not change the re-solve; it is accepted so callers can
    address grid cells uniformly.
    """
    tree = instance.forecast_tree
    if tree is not None and outcome not in tree.outcomes:
        raise EvaluationError(f"unknown outcome {outcome!r}")
    od = instance.demand_table.for_outcome(outcome)
    stock = {key: (0.0 if key[0] in od.destroyed else u) for key, u in plan.stock().items()}
    stock = {key: u for key, u in stock.items() if u > 0}
    resolved = _solve_distribution(instance, od.entries, stock, outcome=outcome)
    tau = instance.mode_matrix.travel_time
    out = {}
    for k in instance.supply_types:
        used = [tau[(i, j, m)] for (i, j, kk, m), x in resolved.allocations.items()
                if kk == k.id and x > FLOW_EPS]
        closing = max(used) if used else 0.0
        total = math.fsum(d for (j, kk), d in od.entries.items() if kk == k.id)
        short = math.fsum(u for (j, kk), u in resolved.unmet.items() if kk == k.id)
        frac = 0.0 if total <= 0 else min(1.0, max(0.0, short / total))
        out[k.id] = (closing, frac)
    return out


def _eval_task(args):
    plan, instance, o = args
    return o, evaluate_outcome(plan, instance, o)


def evaluate_grid(plan: PrestagePlan, instance: ProblemInstance, jobs: int = 1) -> OutcomePerformance:
    """c_kos and unmet fractions for every outcome and scenario of the tree."""
    tree = instance.forecast_tree
    if tree is None:
        raise EvaluationError("instance has no forecast tree")
    tasks = [(plan, instance, o) for o in tree.outcomes]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = dict(ex.map(_eval_task, tasks))
    else:
        results = dict(map(_eval_task, tasks))
    perf = OutcomePerformance()
    for o in tree.outcomes:
        for s in tree.scenarios:
            for k, (c, d) in results[o].items():
                perf.closing_time[(k, o, s)] = c
                perf.unmet_fraction[(k, o, s)] = d
    return perf


def location_expectations(perf: OutcomePerformance, tree: ForecastTree) -> LocationExpectation:
    """e_kl = sum_s sum_o p(o | l, s) c_kos, and likewise for unmet demand."""
    supplies = sorted({k for (k, o, s) in perf.closing_time})
    closing: dict[tuple[str, str], float] = {}
    unmet: dict[tuple[str, str], float] = {}
    for k in supplies:
        for l in tree.intermediate_locations:
            ce, de = [], []
            for s in tree.scenarios:
                for o in tree.outcomes:
                    p = tree.outcome_weights.get((o, l, s), 0.0)
                    if p == 0.0:
                        continue
                    if (k, o, s) not in perf.closing_time:
                        raise EvaluationError(f"performance grid missing cell ({k}, {o}, {s}) "
                                              f"with weight {p}")
                    ce.append(p * perf.closing_time[(k, o, s)])
                    de.append(p * perf.unmet_fraction[(k, o, s)])
            closing[(k, l)] = math.fsum(ce)
            unmet[(k, l)] = math.fsum(de)
    return LocationExpectation(closing, unmet)


def dispatch_expectations(locexp: LocationExpectation, tree: ForecastTree) -> DispatchExpectation:
    """e_kt = sum_l p(l | t) e_kl."""
    supplies = sorted({k for (k, l) in locexp.exp_closing})
    closing: dict[tuple[str, float], float] = {}
    unmet: dict[tuple[str, float], float] = {}
    for k in supplies:
        for t in tree.dispatch_times:
            ce, de = [], []
            for l in tree.intermediate_locations:
                p = tree.location_weights.get((l, t), 0.0)
                if p == 0.0:
                    continue
                if (k, l) not in locexp.exp_closing:
                    raise EvaluationError(f"location expectation missing ({k}, {l})")
                ce.append(p * locexp.exp_closing[(k, l)])
                de.append(p * locexp.exp_unmet[(k, l)])
            closing[(k, t)] = math.fsum(ce)
            unmet[(k, t)] = math.fsum(de)
    return DispatchExpectation(closing, unmet)


def perf_to_dict(instance: ProblemInstance, perf: OutcomePerformance, locexp: LocationExpectation,
                 dispexp: DispatchExpectation) -> dict:
    return {
        "supply_types": [{"id": k.id, "time_weight": k.time_weight, "demand_weight": k.demand_weight,
                          "lead_time": k.lead_time, "delay_buffer": k.delay_buffer}
                         for k in instance.supply_types],
        "grid": [{"supply": k, "outcome": o, "scenario": s, "closing_time": c,
                  "unmet_fraction": perf.unmet_fraction[(k, o, s)]}
                 for (k, o, s), c in sorted(perf.closing_time.items())],
        "location_expectations": [{"supply": k, "location": l, "exp_closing": v,
                                   "exp_unmet": locexp.exp_unmet[(k, l)]}
                                  for (k, l), v in sorted(locexp.exp_closing.items())],
        "dispatch_expectations": [{"supply": k, "time": t, "exp_closing": v,
                                   "exp_unmet": dispexp.exp_unmet[(k, t)]}
                                  for (k, t), v in sorted(dispexp.exp_closing.items(),
                                                          key=lambda kv: (kv[0][0], -kv[0][1]))],
    }


def dispatch_from_dict(doc: Mapping) -> DispatchExpectation:
    rows = doc["dispatch_expectations"]
    return DispatchExpectation({(r["supply"], r["time"]): float(r["exp_closing"]) for r in rows},
                               {(r["supply"], r["time"]): float(r["exp_unmet"]) for r in rows})


def write_perf(path: str | Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
