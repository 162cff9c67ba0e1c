"""Route-based Blue MIP over discrete periods.

A vehicle class is ``count`` identical trucks introduced at one location;
its departure variable N[v, r, t] is an integer in [0, count] (binary when
count == 1). Each truck makes at most one trip. Cargo X shipped on a trip
departing in period t enters inventory at the destination in period
t + tau_r + 1, i.e. it arrives ``tau_r`` periods after departure.

Objective: theta * A + sum kappa * N + sum rho_hat * Dbar, where A bounds
every event's weighted truck count and Dbar is unmet demand at the end of
each period.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .opt_backend import INFEASIBLE, OPTIMAL, LinearModel, Solution, solve_mip
from .red_adversary import RedBudget
from .route_gen import RoadNetwork, Route, RoutePool

LinkKey = tuple[str, str]


class BlueInfeasibleError(RuntimeError):
    pass


class StructuralInfeasibility(ValueError):
    """Detected before solving, e.g. the horizon cannot fit any route to a demand node."""


@dataclass(frozen=True)
class Commodity:
    id: str
    weight: float = 1.0
    volume: float = 1.0


@dataclass(frozen=True)
class VehicleClass:
    id: str
    location: str
    count: int = 1
    weight_cap: float = 10.0
    volume_cap: float = 10.0
    turnaround: int = 0
    intro_period: int = 0
    cost_per_minute: float = 1.0

    def __post_init__(self):
        if self.weight_cap <= 0 or self.volume_cap <= 0:
            raise ValueError(f"vehicle {self.id}: capacities must be positive")
        if self.count < 1:
            raise ValueError(f"vehicle {self.id}: count must be >= 1")


@dataclass(frozen=True)
class Event:
    id: str
    members: tuple[str, ...]  # route ids
    coefficient: float


@dataclass
class LastMileProblem:
    network: RoadNetwork
    commodities: list[Commodity]
    vehicles: list[VehicleClass]
    supplies: dict[tuple[str, str], float]   # (commodity, location) -> units at period 0
    demands: dict[tuple[str, str], float]    # (commodity, location) -> units issued at period 0
    rho_hat: float = 10.0
    period_min: float = 10.0
    horizon: int = 48
    departure_window: int = 1
    hard_demand: bool = False
    depot_cap: dict[str, int] | None = None
    corridors: dict[str, list[LinkKey]] = field(default_factory=dict)
    red: RedBudget = field(default_factory=RedBudget)
    name: str = "last_mile"

    @property
    def od_pairs(self) -> list[tuple[str, str]]:
        origins = sorted({v.location for v in self.vehicles})
        dests = sorted({l for (c, l), d in self.demands.items() if d > 0})
        return [(o, d) for o in origins for d in dests if o != d]

    def travel_periods(self, route: Route) -> int:
        return max(1, math.ceil(route.nominal_length(self.network) / self.period_min - 1e-9))

    def fingerprint(self) -> str:
        doc = problem_to_dict(self)
        for l in doc["links"]:
            l.pop("impact", None)
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def problem_from_dict(doc: Mapping[str, Any], outcome: str | None = None) -> LastMileProblem:
    """Build a last-mile problem from the ``last_mile`` block of an instance.

    ``demands`` may be a list or a mapping outcome -> list; in the latter
    case ``outcome`` (or the key ``"default"``) selects the table.
    """
    net = RoadNetwork.from_links(doc["links"])
    dem = doc["demands"]
    if isinstance(dem, Mapping):
        key = outcome if outcome is not None and outcome in dem else "default"
        if key not in dem:
            raise KeyError(f"last-mile demands have no table for outcome {outcome!r}")
        dem = dem[key]
    red = doc.get("red", {})
    return LastMileProblem(
        network=net,
        commodities=[Commodity(str(c["id"]), float(c.get("weight", 1.0)), float(c.get("volume", 1.0)))
                     for c in doc["commodities"]],
        vehicles=[VehicleClass(str(v["id"]), str(v["location"]), int(v.get("count", 1)),
                               float(v.get("weight_cap", 10.0)), float(v.get("volume_cap", 10.0)),
                               int(v.get("turnaround", 0)), int(v.get("intro_period", 0)),
                               float(v.get("cost_per_minute", 1.0)))
                  for v in doc["vehicles"]],
        supplies={(str(r["commodity"]), str(r["location"])): float(r["units"]) for r in doc["supplies"]},
        demands={(str(r["commodity"]), str(r["location"])): float(r["units"]) for r in dem},
        rho_hat=float(doc.get("rho_hat", 10.0)),
        period_min=float(doc.get("period_min", 10.0)),
        horizon=int(doc.get("horizon", 48)),
        departure_window=int(doc.get("departure_window", 1)),
        hard_demand=bool(doc.get("hard_demand", False)),
        depot_cap=doc.get("depot_cap"),
        corridors={name: [tuple(l) for l in links] for name, links in doc.get("corridors", {}).items()},
        red=RedBudget(float(red.get("epsilon", 0.1)), float(red.get("epsilon_hat", 0.1)),
                      float(red.get("total", 2.0)), float(red.get("per_link", 1.0))),
        name=str(doc.get("name", "last_mile")),
    )


def problem_to_dict(p: LastMileProblem) -> dict:
    return {
        "name": p.name,
        "links": [{"from": a, "to": b, "cost_min": l.cost} for (a, b), l in sorted(p.network.links.items())],
        "commodities": [{"id": c.id, "weight": c.weight, "volume": c.volume} for c in p.commodities],
        "vehicles": [{"id": v.id, "location": v.location, "count": v.count, "weight_cap": v.weight_cap,
                      "volume_cap": v.volume_cap, "turnaround": v.turnaround, "intro_period": v.intro_period,
                      "cost_per_minute": v.cost_per_minute} for v in p.vehicles],
        "supplies": [{"commodity": c, "location": l, "units": u} for (c, l), u in sorted(p.supplies.items())],
        "demands": [{"commodity": c, "location": l, "units": u} for (c, l), u in sorted(p.demands.items())],
        "rho_hat": p.rho_hat, "period_min": p.period_min, "horizon": p.horizon,
        "departure_window": p.departure_window, "hard_demand": p.hard_demand, "depot_cap": p.depot_cap,
        "corridors": {k: [list(l) for l in v] for k, v in sorted(p.corridors.items())},
        "red": {"epsilon": p.red.epsilon, "epsilon_hat": p.red.epsilon_hat, "total": p.red.total,
                "per_link": p.red.per_link},
    }


@dataclass
class BlueModel:
    model: LinearModel
    problem: LastMileProblem
    routes: dict[str, Route]
    tau: dict[str, int]
    nvars: dict[tuple[str, str, int], int]
    xvars: dict[tuple[str, str, str, int], int]
    dvars: dict[tuple[str, str, int], int]
    dbar: dict[tuple[str, str, int], int]
    inv: dict[tuple[str, str, int], int]
    avar: int
    theta: float
    events: list[Event]
    kappa: dict[tuple[str, str, int], float]


def build_blue_model(problem: LastMileProblem, pool: RoutePool, events: list[Event] | None = None,
                     theta: float = 0.0) -> BlueModel:
    events = list(events or [])
    H = problem.horizon
    routes = pool.by_id()
    if not routes:
        raise ValueError("route pool is empty")
    tau = {rid: problem.travel_periods(r) for rid, r in routes.items()}
    com = {c.id: c for c in problem.commodities}
    m = LinearModel(f"blue[{problem.name}]")

    # eligible (v, r, t): departure inside the window and arrival inside the horizon
    elig: list[tuple[VehicleClass, Route, int]] = []
    for v in problem.vehicles:
        for rid, r in sorted(routes.items()):
            if r.origin != v.location:
                continue
            for t in range(v.intro_period, min(H, v.intro_period + problem.departure_window)):
                if t + tau[rid] + 1 <= H - 1:
                    elig.append((v, r, t))
    reach = {r.destination for (_, r, _) in elig}
    for (c, l), d in sorted(problem.demands.items()):
        if d > 0 and l not in reach and (c, l) not in problem.supplies:
            raise StructuralInfeasibility(f"horizon {H} too short for every route to demand node {l}")

    locs = sorted({l for (_, l) in problem.supplies} | {l for (_, l) in problem.demands}
                  | {r.origin for r in routes.values()} | {r.destination for r in routes.values()})

    nvars, xvars, kappa = {}, {}, {}
    for v, r, t in elig:
        k = v.cost_per_minute * r.nominal_length(problem.network)
        idx = m.add_var(f"N[{v.id},{r.id},{t}]", 0, v.count, integer=True, obj=k)
        nvars[(v.id, r.id, t)] = idx
        kappa[(v.id, r.id, t)] = k
        for c in problem.commodities:
            xvars[(c.id, v.id, r.id, t)] = m.add_var(f"X[{c.id},{v.id},{r.id},{t}]")

    # vehicle stock
    for v in problem.vehicles:
        vlocs = sorted({v.location} | {r.destination for (vv, r, _) in elig if vv.id == v.id})
        nbar = {(l, t): m.add_var(f"Nbar[{v.id},{l},{t}]") for l in vlocs for t in range(H)}
        for l in vlocs:
            for t in range(H):
                row = {nbar[(l, t)]: 1.0}
                if t > 0:
                    row[nbar[(l, t - 1)]] = -1.0
                for (vid, rid, tt), idx in nvars.items():
                    if vid != v.id:
                        continue
                    r = routes[rid]
                    if r.origin == l and tt == t:
                        row[idx] = row.get(idx, 0.0) + 1.0
                    if r.destination == l and tt == t - tau[rid] - v.turnaround - 1:
                        row[idx] = row.get(idx, 0.0) - 1.0
                intro = v.count if (l == v.location and t == v.intro_period) else 0
                m.add_constr(row, "=", intro, f"vstock[{v.id},{l},{t}]")

    # commodity stock and demand recursion
    dvars, dbar, inv = {}, {}, {}
    for c in problem.commodities:
        for l in locs:
            d0 = problem.demands.get((c.id, l), 0.0)
            for t in range(H):
                inv[(c.id, l, t)] = m.add_var(f"I[{c.id},{l},{t}]")
                if d0 > 0:
                    dvars[(c.id, l, t)] = m.add_var(f"D[{c.id},{l},{t}]")
                    dbar[(c.id, l, t)] = m.add_var(f"Dbar[{c.id},{l},{t}]", obj=problem.rho_hat)
    for c in problem.commodities:
        for l in locs:
            d0 = problem.demands.get((c.id, l), 0.0)
            s0 = problem.supplies.get((c.id, l), 0.0)
            for t in range(H):
                d_t = d0 if t == 0 else 0.0
                s_t = s0 if t == 0 else 0.0
                row = {inv[(c.id, l, t)]: 1.0}
                if t > 0:
                    row[inv[(c.id, l, t - 1)]] = -1.0
                for (cc, vid, rid, tt), idx in xvars.items():
                    if cc != c.id:
                        continue
                    r = routes[rid]
                    if r.origin == l and tt == t:
                        row[idx] = row.get(idx, 0.0) + 1.0
                    if r.destination == l and tt == t - tau[rid] - 1:
                        row[idx] = row.get(idx, 0.0) - 1.0
                if (c.id, l, t) in dbar:
                    row[dbar[(c.id, l, t)]] = row.get(dbar[(c.id, l, t)], 0.0) - 1.0
                    if t > 0:
                        row[dbar[(c.id, l, t - 1)]] = row.get(dbar[(c.id, l, t - 1)], 0.0) + 1.0
                # I_t - I_{t-1} + out - in - Dbar_t + Dbar_{t-1} = s_t - d_t
                m.add_constr(row, "=", s_t - d_t, f"cstock[{c.id},{l},{t}]")
                if (c.id, l, t) in dbar:
                    rec = {dbar[(c.id, l, t)]: 1.0, dvars[(c.id, l, t)]: 1.0}
                    if t > 0:
                        rec[dbar[(c.id, l, t - 1)]] = -1.0
                    m.add_constr(rec, "=", d_t, f"demand[{c.id},{l},{t}]")

    if problem.hard_demand:
        for c in problem.commodities:
            total = sum(d for (cc, l), d in problem.demands.items() if cc == c.id)
            row = {idx: 1.0 for (cc, *_), idx in xvars.items() if cc == c.id}
            m.add_constr(row, ">=", total, f"deliver_all[{c.id}]")

    for (vid, rid, t), nidx in nvars.items():
        v = next(vv for vv in problem.vehicles if vv.id == vid)
        wrow = {xvars[(c.id, vid, rid, t)]: com[c.id].weight for c in problem.commodities}
        wrow[nidx] = -v.weight_cap
        m.add_constr(wrow, "<=", 0.0, f"wcap[{vid},{rid},{t}]")
        vrow = {xvars[(c.id, vid, rid, t)]: com[c.id].volume for c in problem.commodities}
        vrow[nidx] = -v.volume_cap
        m.add_constr(vrow, "<=", 0.0, f"vcap[{vid},{rid},{t}]")

    for v in problem.vehicles:
        row = {idx: 1.0 for (vid, _, _), idx in nvars.items() if vid == v.id}
        if row:
            m.add_constr(row, "<=", v.count, f"one_trip[{v.id}]")

    if problem.depot_cap:
        for l, cap in sorted(problem.depot_cap.items()):
            for t in range(H):
                row = {idx: 1.0 for (vid, rid, tt), idx in nvars.items() if tt == t and routes[rid].origin == l}
                if row:
                    m.add_constr(row, "<=", cap, f"depot[{l},{t}]")

    avar = m.add_var("A", obj=theta)
    # with theta == 0 exposure is unpriced; it is computed after the solve instead
    if theta > 0:
        for e in events:
            row = {idx: -e.coefficient for (vid, rid, t), idx in nvars.items() if rid in e.members}
            row[avar] = 1.0
            m.add_constr(row, ">=", 0.0, f"exposure[{e.id}]")

    return BlueModel(m, problem, routes, tau, nvars, xvars, dvars, dbar, inv, avar, theta, events, kappa)


@dataclass
class RoutedPlan:
    trips: list[dict]
    link_loads: dict[LinkKey, float]
    exposure: float
    vehicle_cost: float
    unmet_penalty: float
    theta: float
    delivered: float
    total_demand: float
    unmet_final: float
    deliveries: list[tuple[float, float]]  # (minute, units met)
    problem_id: str = ""
    nodes: int = 0

    @property
    def objective(self) -> float:
        return self.theta * self.exposure + self.vehicle_cost + self.unmet_penalty

    @property
    def nominal_objective(self) -> float:
        return self.vehicle_cost + self.unmet_penalty

    def signature(self) -> tuple:
        return tuple((t["vehicle"], t["route"], t["period"], t["count"]) for t in self.trips)

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "objective": self.objective,
            "decomposition": {"exposure_term": self.theta * self.exposure, "vehicle_cost": self.vehicle_cost,
                              "unmet_penalty": self.unmet_penalty},
            "theta": self.theta, "exposure": self.exposure,
            "delivered": self.delivered, "total_demand": self.total_demand, "unmet_final": self.unmet_final,
            "link_loads": [{"from": a, "to": b, "trucks": n} for (a, b), n in sorted(self.link_loads.items())],
            "trips": self.trips,
            "deliveries": [{"minute": mnt, "units": u} for mnt, u in self.deliveries],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "RoutedPlan":
        dec = doc["decomposition"]
        return cls(
            trips=list(doc["trips"]),
            link_loads={(r["from"], r["to"]): float(r["trucks"]) for r in doc["link_loads"]},
            exposure=float(doc["exposure"]), vehicle_cost=float(dec["vehicle_cost"]),
            unmet_penalty=float(dec["unmet_penalty"]), theta=float(doc["theta"]),
            delivered=float(doc["delivered"]), total_demand=float(doc["total_demand"]),
            unmet_final=float(doc["unmet_final"]),
            deliveries=[(float(r["minute"]), float(r["units"])) for r in doc["deliveries"]],
            problem_id=doc.get("problem_id", ""),
        )

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def link_load_csv(self) -> str:
        lines = ["from,to,trucks"]
        for (a, b), n in sorted(self.link_loads.items()):
            lines.append(f"{a},{b},{_num(n)}")
        return "\r\n".join(lines) + "\r\n"


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _r(x: float) -> float:
    return 0.0 if abs(x) < 1e-9 else float(round(x, 9))


def solve_blue(bm: BlueModel, gap: float = 0.0) -> RoutedPlan:
    sol = solve_mip(bm.model, gap=gap)
    if sol.status != OPTIMAL:
        raise BlueInfeasibleError(f"Blue model {sol.status}")
    return extract_plan(bm, sol)


def exposure_of(bm: BlueModel, counts: Mapping[tuple[str, str, int], float]) -> float:
    """max over events of c_e * (trucks on the event's member routes)."""
    best = 0.0
    for e in bm.events:
        best = max(best, sum(e.coefficient * n for (vid, rid, t), n in counts.items() if rid in e.members))
    return best


def extract_plan(bm: BlueModel, sol: Solution) -> RoutedPlan:
    p = bm.problem
    counts = {key: round(sol[idx]) for key, idx in bm.nvars.items()}
    trips, loads = [], {}
    vehicle_cost = 0.0
    for (vid, rid, t), n in sorted(counts.items()):
        if n <= 0:
            continue
        r = bm.routes[rid]
        vehicle_cost += bm.kappa[(vid, rid, t)] * n
        cargo = {c.id: _r(sol[bm.xvars[(c.id, vid, rid, t)]]) for c in p.commodities}
        trips.append({"vehicle": vid, "route": rid, "nodes": list(r.nodes), "period": t, "count": n,
                      "arrival_minute": (t + bm.tau[rid]) * p.period_min, "cargo": cargo})
        for link in r.links:
            loads[link] = loads.get(link, 0) + n
    unmet_pen = math.fsum(p.rho_hat * sol[idx] for idx in bm.dbar.values())
    deliveries: dict[float, float] = {}
    delivered = 0.0
    for (c, l, t), idx in bm.dvars.items():
        u = sol[idx]
        if u > 1e-9:
            minute = (t - 1) * p.period_min
            deliveries[minute] = deliveries.get(minute, 0.0) + u
            delivered += u
    H = p.horizon
    unmet_final = math.fsum(sol[bm.dbar[(c, l, H - 1)]] for (c, l, t) in bm.dbar if t == H - 1)
    total_demand = math.fsum(p.demands.values())
    exposure = exposure_of(bm, counts) if bm.events else 0.0
    return RoutedPlan(
        trips=trips, link_loads=loads, exposure=_r(exposure), vehicle_cost=_r(vehicle_cost),
        unmet_penalty=_r(unmet_pen), theta=bm.theta, delivered=_r(delivered), total_demand=total_demand,
        unmet_final=_r(unmet_final), deliveries=[(mnt, _r(u)) for mnt, u in sorted(deliveries.items())],
        problem_id=p.fingerprint(), nodes=sol.nodes,
    )


def delivery_curve(plan: RoutedPlan) -> list[tuple[float, float]]:
    """Step points (minute, cumulative fraction of delivered units)."""
    total = math.fsum(u for _, u in plan.deliveries)
    if total <= 0:
        return []
    out, acc = [], 0.0
    for minute, u in sorted(plan.deliveries):
        acc += u
        out.append((minute, min(1.0, acc / total)))
    return out


def curve_value(curve: list[tuple[float, float]], minute: float) -> float:
    val = 0.0
    for m, f in curve:
        if m <= minute:
            val = f
        else:
            break
    return val


def time_to_fraction(curve: list[tuple[float, float]], frac: float) -> float:
    for m, f in curve:
        if f >= frac - 1e-12:
            return m
    return math.inf
