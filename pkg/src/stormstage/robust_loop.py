"""Blue -> Red -> penalty injection -> Blue feedback loop and concentration metrics."""

from __future__ import annotations

import copy
import json
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .blue_plan import (Event, LastMileProblem, RoutedPlan, build_blue_model, delivery_curve, solve_blue,
                        time_to_fraction)
from .red_adversary import RedBudget, solve_red
from .route_gen import RoadNetwork, RoutePool, extend_pool, initial_pool

log = logging.getLogger(__name__)

LinkKey = tuple[str, str]
HARD_CAP = 20


@dataclass(frozen=True)
class LoopConfig:
    theta: float = 500.0
    iterations: int = 3
    z_min: float = 0.05
    red: RedBudget | None = None  # None uses the problem's budget
    stop_rule: str = "fixed"  # or "adaptive"
    pool_cap: int = 8

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if self.stop_rule not in ("fixed", "adaptive"):
            raise ValueError(f"unknown stop rule {self.stop_rule!r}")


@dataclass
class LoopResult:
    baseline: RoutedPlan
    final: RoutedPlan
    trace: list[dict]
    pool: RoutePool
    network: RoadNetwork

    def trace_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.trace)


def _loads_list(loads: Mapping[LinkKey, float]) -> list[dict]:
    return [{"from": a, "to": b, "trucks": n} for (a, b), n in sorted(loads.items())]


def build_events(pool: RoutePool, coefficients: Mapping[LinkKey, float]) -> list[Event]:
    """One event per impacted link; members are the pooled routes that use it."""
    events = []
    for link, c in sorted(coefficients.items()):
        members = tuple(r.id for r in pool.all_routes() if link in r.links)
        if members:
            events.append(Event(f"{link[0]}->{link[1]}", members, c))
    return events


def run_loop(problem: LastMileProblem, config: LoopConfig, pool0: RoutePool | None = None) -> LoopResult:
    net = copy.deepcopy(problem.network)
    net.reset_impacts()
    prob = copy.copy(problem)
    prob.network = net
    budget = config.red or problem.red
    pairs = problem.od_pairs
    pool = copy.deepcopy(pool0) if pool0 is not None else initial_pool(net, pairs, config.pool_cap)

    baseline = solve_blue(build_blue_model(prob, pool, [], 0.0))
    trace = [{"iteration": 0, "pool_size": pool.size(), "plan": _plan_summary(baseline),
              "link_loads": _loads_list(baseline.link_loads)}]
    plan = baseline
    plans = [baseline]
    coeffs: dict[LinkKey, float] = {}
    best = baseline
    limit = config.iterations if config.stop_rule == "fixed" else HARD_CAP
    converged = config.stop_rule == "fixed"
    for it in range(1, limit + 1):
        profile = solve_red(plan.link_loads, budget)
        heavy = profile.heavy_links(config.z_min)
        if config.theta > 0:
            net.inject(heavy)
            for link, z in heavy.items():
                coeffs[link] = max(coeffs.get(link, 0.0), z)
        added = extend_pool(pool, net, pairs, config.theta) if config.theta > 0 else []
        events = build_events(pool, coeffs)
        new_plan = solve_blue(build_blue_model(prob, pool, events, config.theta))
        trace.append({
            "iteration": it,
            "red_input": _loads_list(plan.link_loads),
            "red": profile.to_dict(),
            "heavy_links": [[a, b, z] for (a, b), z in sorted(heavy.items())],
            "events": [{"id": e.id, "coefficient": e.coefficient, "members": list(e.members)} for e in events],
            "routes_added": [r.id for r in added],
            "pool_size": pool.size(),
            "plan": _plan_summary(new_plan),
            "link_loads": _loads_list(new_plan.link_loads),
        })
        unchanged = new_plan.signature() == plan.signature()
        plans.append(new_plan)
        plan = new_plan
        if plan.exposure < best.exposure or best is baseline:
            best = plan
        if config.stop_rule == "adaptive" and not added and unchanged:
            converged = True
            break
    final_events = build_events(pool, coeffs)
    for rec, pl in zip(trace, plans):
        rec["exposure_final_events"] = plan_exposure(pl, final_events)
    if not converged:
        warnings.warn(f"robust loop did not settle within {HARD_CAP} iterations; returning the lowest-exposure plan",
                      stacklevel=2)
        plan = best
    return LoopResult(baseline, plan, trace, pool, net)


def plan_exposure(plan: RoutedPlan, events: list[Event]) -> float:
    """Exposure of a fixed plan under an event set, so iterations can be compared on common events."""
    best = 0.0
    for e in events:
        members = set(e.members)
        best = max(best, math.fsum(e.coefficient * t["count"] for t in plan.trips if t["route"] in members))
    return float(round(best, 9))


def _plan_summary(plan: RoutedPlan) -> dict:
    return {"objective": plan.objective, "exposure": plan.exposure, "vehicle_cost": plan.vehicle_cost,
            "unmet_penalty": plan.unmet_penalty, "delivered": plan.delivered,
            "peak_load": max(plan.link_loads.values(), default=0)}


@dataclass
class ConcentrationReport:
    peak: float
    top3: float
    top5: float
    total: float
    corridors: dict[str, float]
    loads: list[float]

    def to_dict(self) -> dict:
        return {"peak": self.peak, "top3": self.top3, "top5": self.top5, "total": self.total,
                "corridors": dict(sorted(self.corridors.items())), "loads": self.loads}


def concentration_report(loads: RoutedPlan | Mapping[LinkKey, float],
                         corridors: Mapping[str, Iterable[LinkKey]] | None = None,
                         network: RoadNetwork | None = None) -> ConcentrationReport:
    """Peak and top-k sums over the plan's own most loaded links, plus corridor totals.

    With ``network`` given, corridor links are checked against it.
    """
    if isinstance(loads, RoutedPlan):
        loads = loads.link_loads
    corridors = corridors or {}
    if network is not None:
        check_corridors(corridors, network)
    vec = sorted((float(v) for v in loads.values()), reverse=True)
    cors = {name: math.fsum(float(loads.get(tuple(link), 0.0)) for link in links)
            for name, links in corridors.items()}
    return ConcentrationReport(vec[0] if vec else 0.0, math.fsum(vec[:3]), math.fsum(vec[:5]),
                               math.fsum(vec), cors, vec)


def check_corridors(corridors: Mapping[str, Iterable[LinkKey]], net: RoadNetwork) -> None:
    for name, links in corridors.items():
        for link in links:
            if tuple(link) not in net.links:
                raise KeyError(f"corridor {name}: unknown link {link[0]}->{link[1]}")


def pct_change(before: float, after: float) -> int:
    if before == 0:
        return 0
    return int(round(100.0 * (after - before) / before))


def compare_plans(r_minus: RoutedPlan, r_plus: RoutedPlan,
                  corridors: Mapping[str, Iterable[LinkKey]] | None = None) -> dict:
    if r_minus.problem_id != r_plus.problem_id:
        raise ValueError("plans were solved on different instances")
    a = concentration_report(r_minus, corridors)
    b = concentration_report(r_plus, corridors)
    rows = {"peak": (a.peak, b.peak), "top3": (a.top3, b.top3), "top5": (a.top5, b.top5)}
    for name in sorted(a.corridors):
        rows[f"corridor:{name}"] = (a.corridors[name], b.corridors[name])
    table = {k: {"baseline": x, "robust": y, "change_pct": pct_change(x, y)} for k, (x, y) in rows.items()}
    ca, cb = delivery_curve(r_minus), delivery_curve(r_plus)
    return {
        "metrics": table,
        "price_of_robustness": r_plus.nominal_objective - r_minus.nominal_objective,
        "delivered": {"baseline": r_minus.delivered, "robust": r_plus.delivered},
        "t90": {"baseline": _finite(time_to_fraction(ca, 0.9)), "robust": _finite(time_to_fraction(cb, 0.9))},
        "max_horizontal_gap": curve_gap(ca, cb),
    }


def _finite(x: float) -> float | None:
    return x if math.isfinite(x) else None


def curve_gap(ca: list[tuple[float, float]], cb: list[tuple[float, float]]) -> float:
    """Largest difference in time to reach any fraction level present in either curve."""
    levels = sorted({f for _, f in ca} | {f for _, f in cb})
    gap = 0.0
    for f in levels:
        ta, tb = time_to_fraction(ca, f), time_to_fraction(cb, f)
        if math.isfinite(ta) and math.isfinite(tb):
            gap = max(gap, abs(tb - ta))
    return gap


def comparison_csv(cmp: Mapping) -> str:
    lines = ["metric,baseline,robust,change_pct"]
    for k, row in cmp["metrics"].items():
        lines.append(f"{k},{_num(row['baseline'])},{_num(row['robust'])},{row['change_pct']}")
    return "\r\n".join(lines) + "\r\n"


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def write_json(path: str | Path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
