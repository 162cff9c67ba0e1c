"""Risk-weighted pre-staging LP.

    min  sum (tau_ijm + alpha_k p_i) X_ijkm + sum rho Dbar_jk
    s.t. sum_{j,m} X_ijkm <= u_ik                  (pre-stage capacity)
         sum_{i,m} X_ijkm + Dbar_jk >= d_jk        (demand coverage)
         X, Dbar >= 0
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .data_model import ProblemInstance
from .opt_backend import OPTIMAL, LinearModel, SolverError, solve_lp


class InfeasiblePlanError(RuntimeError):
    pass


@dataclass
class PrestagePlan:
    allocations: dict[tuple[str, str, str, str], float]
    unmet: dict[tuple[str, str], float]
    objective: float
    travel_term: float
    risk_term: float
    unmet_term: float
    outcome: str | None = None
    demand: dict[tuple[str, str], float] = field(default_factory=dict)

    @property
    def components(self) -> tuple[float, float, float]:
        return (self.travel_term, self.risk_term, self.unmet_term)

    def stock(self) -> dict[tuple[str, str], float]:
        """Units of each supply held at each site, summed over destinations and modes."""
        out: dict[tuple[str, str], float] = {}
        for (i, j, k, m), x in self.allocations.items():
            out[(i, k)] = out.get((i, k), 0.0) + x
        return out

    def risk_mass(self, instance: ProblemInstance, supply: str | None = None) -> float:
        """sum_i p_i * (outbound units from i), optionally for one supply type."""
        p = {l.id: l.destruction_prob for l in instance.locations}
        return sum(p[i] * x for (i, j, k, m), x in self.allocations.items()
                   if supply is None or k == supply)

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "objective": self.objective,
            "components": {"travel_term": self.travel_term, "risk_term": self.risk_term,
                           "unmet_term": self.unmet_term},
            "allocations": [{"site": i, "demand": j, "supply": k, "mode": m, "units": x}
                            for (i, j, k, m), x in sorted(self.allocations.items())],
            "unmet": [{"demand": j, "supply": k, "units": u} for (j, k), u in sorted(self.unmet.items())],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PrestagePlan":
        comp = doc["components"]
        return cls(
            allocations={(r["site"], r["demand"], r["supply"], r["mode"]): float(r["units"])
                         for r in doc["allocations"]},
            unmet={(r["demand"], r["supply"]): float(r["units"]) for r in doc["unmet"]},
            objective=float(doc["objective"]), travel_term=float(comp["travel_term"]),
            risk_term=float(comp["risk_term"]), unmet_term=float(comp["unmet_term"]),
            outcome=doc.get("outcome"),
        )

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _clean(v: float) -> float:
    # strip solver noise so serialized plans are stable
    return 0.0 if abs(v) < 1e-9 else float(round(v, 9))


def build_distribution_model(
    instance: ProblemInstance,
    demand: Mapping[tuple[str, str], float],
    supply_limit: Mapping[tuple[str, str], float],
    alpha_override: Mapping[str, float] | None = None,
    allow_unmet: bool = True,
):
    """Shared LP skeleton for P1 and for the fixed-stock re-solves.

    ``supply_limit`` maps (site, supply) to the units available there;
    sites missing from it have no stock of that supply.
    """
    rho = instance.effective_unmet_penalty()
    p = {l.id: l.destruction_prob for l in instance.locations}
    alpha = {k.id: k.alpha for k in instance.supply_types}
    if alpha_override:
        alpha.update(alpha_override)
    supplies = [k.id for k in instance.supply_types]
    demand_nodes = sorted({j for (j, k), d in demand.items()})

    model = LinearModel("prestage")
    xvars: dict[tuple[str, str, str, str], int] = {}
    travel_cost: dict[int, float] = {}
    risk_cost: dict[int, float] = {}
    arcs = sorted(instance.mode_matrix.travel_time.items())
    for k in supplies:
        for (i, j, m), tau in arcs:
            if supply_limit.get((i, k), 0.0) <= 0 or demand.get((j, k), 0.0) <= 0:
                continue
            idx = model.add_var(f"X[{i},{j},{k},{m}]", obj=tau + alpha[k] * p[i])
            xvars[(i, j, k, m)] = idx
            travel_cost[idx] = tau
            risk_cost[idx] = alpha[k] * p[i]
    dvars: dict[tuple[str, str], int] = {}
    for (j, k), d in sorted(demand.items()):
        if d <= 0:
            continue
        ub = math.inf if allow_unmet else 0.0
        dvars[(j, k)] = model.add_var(f"Dbar[{j},{k}]", ub=ub, obj=rho)

    for (i, k), u in sorted(supply_limit.items()):
        row = {v: 1.0 for (ii, j, kk, m), v in xvars.items() if ii == i and kk == k}
        if row:
            model.add_constr(row, "<=", u, f"cap[{i},{k}]")
    for (j, k), dv in dvars.items():
        row = {v: 1.0 for (i, jj, kk, m), v in xvars.items() if jj == j and kk == k}
        row[dv] = 1.0
        model.add_constr(row, ">=", demand[(j, k)], f"cover[{j},{k}]")
    return model, xvars, dvars, travel_cost, risk_cost, rho


def _solve_distribution(instance, demand, supply_limit, alpha_override=None, allow_unmet=True,
                        outcome=None) -> PrestagePlan:
    for (j, k), d in demand.items():
        if d < 0:
            raise ValueError(f"negative demand at ({j}, {k})")
    model, xvars, dvars, tc, rc, rho = build_distribution_model(
        instance, demand, supply_limit, alpha_override, allow_unmet)
    sol = solve_lp(model)
    if sol.status != OPTIMAL:
        if sol.status == "infeasible":
            raise InfeasiblePlanError("pre-staging model infeasible (unmet demand disabled and "
                                      "capacity or arcs insufficient)")
        raise SolverError(f"pre-staging model {sol.status}")
    alloc = {key: _clean(sol[v]) for key, v in xvars.items()}
    alloc = {key: x for key, x in alloc.items() if x > 0}
    unmet = {key: _clean(sol[v]) for key, v in dvars.items()}
    unmet = {key: u for key, u in unmet.items() if u > 0}
    travel = math.fsum(tc[xvars[key]] * x for key, x in alloc.items())
    risk = math.fsum(rc[xvars[key]] * x for key, x in alloc.items())
    unmet_term = math.fsum(rho * u for u in unmet.values())
    return PrestagePlan(alloc, unmet, travel + risk + unmet_term, travel, risk, unmet_term,
                        outcome=outcome, demand=dict(demand))


def solve_prestage(instance: ProblemInstance, demand: Mapping[tuple[str, str], float] | None = None,
                   outcome: str | None = None, alpha_override: Mapping[str, float] | None = None,
                   allow_unmet: bool = True) -> PrestagePlan:
    """Solve the pre-staging LP.

    ``demand`` defaults to the demand table of ``outcome`` (itself
    defaulting to the instance's planning outcome). Capacities come from
    the candidate sites' ``capacity_by_supply``.
    """
    if demand is None:
        if outcome is None:
            outcome = instance.planning_outcome
        demand = instance.demand_table.for_outcome(outcome).entries
    caps = {(l.id, k): u for l in instance.prestage_sites for k, u in l.capacity_by_supply.items()}
    return _solve_distribution(instance, demand, caps, alpha_override, allow_unmet, outcome)


def sweep_alpha(instance: ProblemInstance, demand: Mapping[tuple[str, str], float] | None,
                alphas: list[float], outcome: str | None = None) -> list[tuple[float, PrestagePlan]]:
    """One plan per alpha value, applied to every supply type."""
    if any(a < 0 for a in alphas):
        raise ValueError("alphas must be nonnegative")
    if list(alphas) != sorted(alphas):
        raise ValueError("alphas must be sorted ascending")
    out = []
    for a in alphas:
        override = {k.id: a for k in instance.supply_types}
        out.append((a, solve_prestage(instance, demand, outcome, alpha_override=override)))
    return out
