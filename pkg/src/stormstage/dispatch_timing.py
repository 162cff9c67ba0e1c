"""Dispatch-time selection per supply type.

For every candidate time t the composite score is

    a_k * (e_kt + max(0, lead_k + buffer_k - t)) + b_k * d_kt

with d_kt in percent. Enumeration picks the minimum; ties go to the later
dispatch (smaller t). A binary-program route with an explicit lateness
variable is kept as a cross-check.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .data_model import SupplyType
from .opt_backend import OPTIMAL, LinearModel, solve_mip
from .scenario_eval import DispatchExpectation

TIE_TOL = 1e-9


@dataclass(frozen=True)
class TimingRow:
    exp_closing: float
    lateness: float
    unmet: float
    time_penalty: float
    composite: float


@dataclass
class TimingDecision:
    chosen_time: dict[str, float]
    per_time_rows: dict[tuple[str, float], TimingRow]
    times: dict[str, list[float]] = field(default_factory=dict)

    def rows_for(self, k: str) -> list[tuple[float, TimingRow]]:
        if k not in self.times:
            raise KeyError(f"no timing rows for supply {k!r}")
        return [(t, self.per_time_rows[(k, t)]) for t in self.times[k]]

    def to_dict(self) -> dict:
        out = {"chosen_time": dict(sorted(self.chosen_time.items())), "rows": []}
        for k in sorted(self.times):
            for t, r in self.rows_for(k):
                out["rows"].append({
                    "supply": k, "dispatch_time": t, "exp_closing": r.exp_closing, "lateness": r.lateness,
                    "unmet": r.unmet, "time_penalty": r.time_penalty, "composite": r.composite,
                    "chosen": t == self.chosen_time[k], "suboptimal": t != self.chosen_time[k]})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["supply", "dispatch_time", "expected_closing_hrs", "lateness_hrs", "unmet_demand_pct",
                    "time_penalty_hrs", "objective", "suboptimal"])
        for k in sorted(self.times):
            for t, r in self.rows_for(k):
                w.writerow([k, _fmt(t), _fmt(r.exp_closing), _fmt(r.lateness), _fmt(r.unmet),
                            _fmt(r.time_penalty), _fmt(r.composite),
                            "true" if t != self.chosen_time[k] else "false"])
        return buf.getvalue()


def _fmt(x: float) -> str:
    return repr(float(x)) if x != int(x) else str(int(x))


def lateness(lead_time: float, buffer: float, t: float) -> float:
    return max(0.0, (lead_time + buffer) - t)


def timing_rows(expect: DispatchExpectation, supplies: Iterable[SupplyType],
                unmet_scale: float = 100.0) -> tuple[dict[tuple[str, float], TimingRow], dict[str, list[float]]]:
    rows: dict[tuple[str, float], TimingRow] = {}
    times: dict[str, list[float]] = {}
    all_times = expect.times
    if not all_times:
        raise ValueError("no candidate dispatch times")
    for sup in supplies:
        k = sup.id
        times[k] = list(all_times)
        for t in all_times:
            if (k, t) not in expect.exp_closing:
                raise KeyError(f"missing expectation for supply {k!r} at t={t}")
            e = expect.exp_closing[(k, t)]
            d = expect.exp_unmet[(k, t)] * unmet_scale
            late = lateness(sup.lead_time, sup.delay_buffer, t)
            rows[(k, t)] = TimingRow(e, late, d, e + late,
                                     sup.time_weight * (e + late) + sup.demand_weight * d)
    return rows, times


def _argmin_later(cands: list[tuple[float, float]]) -> float:
    best = min(c for _, c in cands)
    return min(t for t, c in cands if c <= best + TIE_TOL)


def select_dispatch(expect: DispatchExpectation, supplies: Iterable[SupplyType],
                    unmet_scale: float = 100.0, method: str = "enumerate") -> TimingDecision:
    """Pick one dispatch time per supply type.

    ``expect.exp_unmet`` holds fractions; ``unmet_scale`` converts them to
    the unit used in the composite (percent by default).
    """
    supplies = list(supplies)
    rows, times = timing_rows(expect, supplies, unmet_scale)
    if method == "enumerate":
        chosen = {k: _argmin_later([(t, rows[(k, t)].composite) for t in ts]) for k, ts in times.items()}
    elif method == "linear":
        chosen = _select_linear(expect, supplies, rows, times, unmet_scale)
    else:
        raise ValueError(f"unknown method {method!r}")
    return TimingDecision(chosen, rows, times)


def _select_linear(expect, supplies, rows, times, unmet_scale) -> dict[str, float]:
    """Binary program with lateness variables W_kt >= (lead + buffer - t) * Z_kt."""
    model = LinearModel("dispatch_timing")
    zvars: dict[tuple[str, float], int] = {}
    for sup in supplies:
        k = sup.id
        for t in times[k]:
            e = expect.exp_closing[(k, t)]
            d = expect.exp_unmet[(k, t)] * unmet_scale
            z = model.add_var(f"Z[{k},{t}]", 0, 1, integer=True,
                              obj=sup.time_weight * e + sup.demand_weight * d)
            w = model.add_var(f"W[{k},{t}]", 0, obj=sup.time_weight)
            model.add_constr({w: 1.0, z: -((sup.lead_time + sup.delay_buffer) - t)}, ">=", 0.0,
                             f"late[{k},{t}]")
            zvars[(k, t)] = z
        model.add_constr({zvars[(k, t)]: 1.0 for t in times[k]}, "=", 1.0, f"one[{k}]")
    sol = solve_mip(model)
    if sol.status != OPTIMAL:
        raise RuntimeError(f"dispatch model {sol.status}")
    chosen = {}
    for sup in supplies:
        k = sup.id
        picked = [t for t in times[k] if sol[zvars[(k, t)]] > 0.5]
        # the program's optimum value fixes the best composite; ties resolve to the later time
        best = rows[(k, picked[0])].composite
        chosen[k] = _argmin_later([(t, rows[(k, t)].composite) for t in times[k]
                                   if rows[(k, t)].composite <= best + TIE_TOL])
    return chosen


@dataclass(frozen=True)
class ParetoPoint:
    dispatch_time: float
    time_penalty: float
    unmet: float
    dominated: bool


def nondominated_mask(points: list[tuple[float, float]]) -> list[bool]:
    """True where no other point is <= in both coordinates and < in one."""
    mask = []
    for i, (a, b) in enumerate(points):
        dom = any((c <= a and d <= b) and (c < a or d < b) for j, (c, d) in enumerate(points) if j != i)
        mask.append(not dom)
    return mask


def pareto_points(decision: TimingDecision, k: str) -> list[ParetoPoint]:
    rows = decision.rows_for(k)
    pts = [(r.time_penalty, r.unmet) for _, r in rows]
    mask = nondominated_mask(pts)
    return [ParetoPoint(t, r.time_penalty, r.unmet, not nd) for (t, r), nd in zip(rows, mask)]


def supplies_from_perf(doc: Mapping) -> list[SupplyType]:
    return [SupplyType(id=r["id"], time_weight=r["time_weight"], demand_weight=r["demand_weight"],
                       lead_time=r["lead_time"], delay_buffer=r["delay_buffer"])
            for r in doc["supply_types"]]


def write_timing(decision: TimingDecision, path: str | Path, pareto: bool = True) -> None:
    doc = decision.to_dict()
    if pareto:
        doc["pareto"] = {k: [{"dispatch_time": p.dispatch_time, "time_penalty": p.time_penalty,
                              "unmet": p.unmet, "dominated": p.dominated} for p in pareto_points(decision, k)]
                         for k in sorted(decision.times)}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
