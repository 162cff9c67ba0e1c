"""Domain types, JSON parsing and validation for stormstage instances."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import jsonschema

INPUT_PROB_TOL = 1e-6
NORMALIZED_PROB_TOL = 1e-9


class InstanceError(ValueError):
    """Raised for schema violations, dangling references and bad probabilities."""


@dataclass(frozen=True)
class Location:
    id: str
    coords: tuple[float, float] = (0.0, 0.0)
    prestage_candidate: bool = False
    capacity_by_supply: Mapping[str, float] = field(default_factory=dict)
    destruction_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.destruction_prob <= 1.0:
            raise InstanceError(f"location {self.id}: destruction_prob out of range ({self.destruction_prob})")
        for k, u in self.capacity_by_supply.items():
            if u < 0:
                raise InstanceError(f"location {self.id}: negative capacity for {k}")


@dataclass(frozen=True)
class SupplyType:
    id: str
    alpha: float = 0.0
    time_weight: float = 1.0
    demand_weight: float = 1.0
    lead_time: float = 1.0
    delay_buffer: float = 0.0
    unit_weight: float = 1.0
    unit_volume: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "time_weight", "demand_weight", "delay_buffer", "unit_weight", "unit_volume"):
            if getattr(self, name) < 0:
                raise InstanceError(f"supply {self.id}: {name} must be nonnegative")
        if self.lead_time <= 0:
            raise InstanceError(f"supply {self.id}: lead_time must be positive")


@dataclass(frozen=True)
class OutcomeDemand:
    entries: Mapping[tuple[str, str], float]
    destroyed: frozenset[str] = frozenset()


@dataclass(frozen=True)
class DemandTable:
    """Base demand d_jk plus optional full-replacement tables per outcome."""

    entries: Mapping[tuple[str, str], float]
    outcomes: Mapping[str, OutcomeDemand] = field(default_factory=dict)

    def for_outcome(self, outcome: str | None) -> OutcomeDemand:
        if outcome is None:
            return OutcomeDemand(self.entries)
        if outcome in self.outcomes:
            return self.outcomes[outcome]
        return OutcomeDemand(self.entries)


@dataclass(frozen=True)
class ModeMatrix:
    travel_time: Mapping[tuple[str, str, str], float]

    @property
    def modes(self) -> list[str]:
        return sorted({m for (_, _, m) in self.travel_time})


@dataclass(frozen=True)
class ForecastTree:
    outcomes: tuple[str, ...]
    scenarios: tuple[str, ...]
    intermediate_locations: tuple[str, ...]
    dispatch_times: tuple[float, ...]
    outcome_weights: Mapping[tuple[str, str, str], float]
    location_weights: Mapping[tuple[str, float], float]
    planning_outcome: str | None = None

    @property
    def rows(self) -> list[tuple[str, str]]:
        """(location, scenario) pairs that carry an outcome distribution."""
        seen = {(l, s) for (_, l, s) in self.outcome_weights}
        return [(l, s) for l in self.intermediate_locations for s in self.scenarios if (l, s) in seen]

    def row_sums(self) -> dict[tuple[str, str], float]:
        sums: dict[tuple[str, str], float] = {}
        for (o, l, s), p in self.outcome_weights.items():
            sums[(l, s)] = sums.get((l, s), 0.0) + p
        return sums

    def time_sums(self) -> dict[float, float]:
        sums = {t: 0.0 for t in self.dispatch_times}
        for (l, t), p in self.location_weights.items():
            sums[t] = sums.get(t, 0.0) + p
        return sums

    def outcome_probability(self, t: float) -> dict[str, float]:
        """Marginal weight of each outcome at dispatch time ``t``."""
        out = {o: 0.0 for o in self.outcomes}
        for (o, l, s), p in self.outcome_weights.items():
            out[o] += self.location_weights.get((l, t), 0.0) * p
        return out

    def most_likely_outcome(self, t: float) -> str:
        probs = self.outcome_probability(t)
        return max(self.outcomes, key=lambda o: (probs[o], -self.outcomes.index(o)))


@dataclass(frozen=True)
class ProblemInstance:
    locations: tuple[Location, ...]
    supply_types: tuple[SupplyType, ...]
    demand_table: DemandTable
    mode_matrix: ModeMatrix
    forecast_tree: ForecastTree | None = None
    unmet_penalty: float | None = None
    name: str = "instance"
    last_mile: Mapping[str, Any] | None = None

    def location(self, lid: str) -> Location:
        for loc in self.locations:
            if loc.id == lid:
                return loc
        raise KeyError(lid)

    def supply(self, kid: str) -> SupplyType:
        for k in self.supply_types:
            if k.id == kid:
                return k
        raise KeyError(kid)

    @property
    def prestage_sites(self) -> list[Location]:
        return [l for l in self.locations if l.prestage_candidate]

    @property
    def planning_outcome(self) -> str | None:
        ft = self.forecast_tree
        if ft is None:
            return None
        return ft.planning_outcome or ft.outcomes[0]

    def effective_unmet_penalty(self) -> float:
        """rho: explicit value, else 10 x (max travel time + max alpha*p)."""
        if self.unmet_penalty is not None:
            return float(self.unmet_penalty)
        max_tau = max(self.mode_matrix.travel_time.values(), default=0.0)
        max_risk = max((k.alpha * l.destruction_prob for k in self.supply_types for l in self.locations),
                       default=0.0)
        return 10.0 * (max_tau + max_risk) or 1.0


def normalize_weights(raw: Mapping[Any, float]) -> dict[Any, float]:
    """Scale nonnegative weights so they sum to one."""
    if any(v < 0 or math.isnan(v) for v in raw.values()):
        raise InstanceError("weights must be nonnegative")
    total = math.fsum(raw.values())
    if total <= 0:
        raise InstanceError("cannot normalize: all weights are zero")
    return {k: v / total for k, v in raw.items()}


_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_id = {"type": ["string", "integer"]}

INSTANCE_SCHEMA: dict = {
    "type": "object",
    "required": ["locations", "supply_types", "demands", "modes"],
    "properties": {
        "name": {"type": "string"},
        "locations": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["id"],
            "properties": {
                "id": _id,
                "coords": {"type": "object", "properties": {"lat": _num, "lon": _num}},
                "prestage_candidate": {"type": "boolean"},
                "capacity_by_supply": {"type": "object", "additionalProperties": _nonneg},
                "destruction_prob": _num,
            }}},
        "supply_types": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["id"],
            "properties": {"id": _id, "alpha": _nonneg, "time_weight": _nonneg, "demand_weight": _nonneg,
                           "lead_time": _num, "delay_buffer": _nonneg, "unit_weight": _nonneg,
                           "unit_volume": _nonneg}}},
        "demands": {"type": "object", "required": ["base"], "properties": {
            "base": {"$ref": "#/$defs/entries"},
            "outcomes": {"type": "object", "additionalProperties": {
                "type": "object", "required": ["entries"],
                "properties": {"entries": {"$ref": "#/$defs/entries"},
                               "destroyed": {"type": "array", "items": _id}}}}}},
        "modes": {"type": "array", "items": {
            "type": "object", "required": ["from", "to", "mode", "travel_time"],
            "properties": {"from": _id, "to": _id, "mode": _id,
                           "travel_time": {"type": "number", "exclusiveMinimum": 0}}}},
        "forecast": {"type": "object",
                     "required": ["outcomes", "scenarios", "intermediate_locations", "dispatch_times",
                                  "outcome_weights", "location_weights"],
                     "properties": {
                         "outcomes": {"type": "array", "minItems": 1, "items": _id},
                         "scenarios": {"type": "array", "minItems": 1, "items": _id},
                         "intermediate_locations": {"type": "array", "minItems": 1, "items": _id},
                         "dispatch_times": {"type": "array", "minItems": 1, "items": _num},
                         "planning_outcome": _id,
                         "outcome_weights": {"type": "array", "items": {
                             "type": "object", "required": ["outcome", "location", "scenario", "p"],
                             "properties": {"outcome": _id, "location": _id, "scenario": _id, "p": _nonneg}}},
                         "location_weights": {"type": "array", "items": {
                             "type": "object", "required": ["location", "time", "p"],
                             "properties": {"location": _id, "time": _num, "p": _nonneg}}}}},
        "penalties": {"type": "object", "properties": {"unmet": {"type": ["number", "null"], "minimum": 0}}},
        "last_mile": {"type": "object"},
    },
    "$defs": {"entries": {"type": "array", "items": {
        "type": "object", "required": ["location", "supply", "units"],
        "properties": {"location": _id, "supply": _id, "units": _nonneg}}}},
}


def _fail(msg: str):
    raise InstanceError(msg)


def _entries(rows: list[dict]) -> dict[tuple[str, str], float]:
    out: dict[tuple[str, str], float] = {}
    for r in rows:
        key = (str(r["location"]), str(r["supply"]))
        out[key] = out.get(key, 0.0) + float(r["units"])
    return out


def instance_from_dict(doc: Mapping[str, Any], normalize: bool = False) -> ProblemInstance:
    """Validate ``doc`` against the instance schema and build the domain objects."""
    try:
        jsonschema.validate(doc, INSTANCE_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InstanceError(f"schema violation at {where}: {exc.message}") from None

    locations = []
    for row in doc["locations"]:
        coords = row.get("coords") or {}
        locations.append(Location(
            id=str(row["id"]),
            coords=(float(coords.get("lat", 0.0)), float(coords.get("lon", 0.0))),
            prestage_candidate=bool(row.get("prestage_candidate", False)),
            capacity_by_supply={str(k): float(v) for k, v in row.get("capacity_by_supply", {}).items()},
            destruction_prob=float(row.get("destruction_prob", 0.0)),
        ))
    supplies = [SupplyType(
        id=str(r["id"]), alpha=float(r.get("alpha", 0.0)), time_weight=float(r.get("time_weight", 1.0)),
        demand_weight=float(r.get("demand_weight", 1.0)), lead_time=float(r.get("lead_time", 1.0)),
        delay_buffer=float(r.get("delay_buffer", 0.0)), unit_weight=float(r.get("unit_weight", 1.0)),
        unit_volume=float(r.get("unit_volume", 1.0))) for r in doc["supply_types"]]

    loc_ids = [l.id for l in locations]
    sup_ids = [k.id for k in supplies]
    for ids, what in ((loc_ids, "location"), (sup_ids, "supply type")):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            _fail(f"duplicate {what} id(s): {', '.join(dup)}")
    loc_set, sup_set = set(loc_ids), set(sup_ids)
    for l in locations:
        for k in l.capacity_by_supply:
            if k not in sup_set:
                _fail(f"location {l.id}: capacity references unknown supply type {k!r}")

    def check_entries(entries, where):
        for (j, k) in entries:
            if j not in loc_set:
                _fail(f"{where}: unknown location {j!r}")
            if k not in sup_set:
                _fail(f"{where}: unknown supply type {k!r}")

    base = _entries(doc["demands"]["base"])
    check_entries(base, "demands/base")
    overrides = {}
    for o, spec in doc["demands"].get("outcomes", {}).items():
        ent = _entries(spec["entries"])
        check_entries(ent, f"demands/outcomes/{o}")
        destroyed = frozenset(str(x) for x in spec.get("destroyed", []))
        for d in destroyed:
            if d not in loc_set:
                _fail(f"demands/outcomes/{o}: destroyed site {d!r} is not a known location")
        overrides[str(o)] = OutcomeDemand(ent, destroyed)

    travel = {}
    for r in doc["modes"]:
        i, j, m = str(r["from"]), str(r["to"]), str(r["mode"])
        for x in (i, j):
            if x not in loc_set:
                _fail(f"modes: unknown location {x!r}")
        if (i, j, m) in travel:
            _fail(f"modes: duplicate arc {i}->{j} ({m})")
        travel[(i, j, m)] = float(r["travel_time"])

    tree = None
    if "forecast" in doc:
        tree = _parse_forecast(doc["forecast"], normalize)
        for o in overrides:
            if o not in tree.outcomes:
                _fail(f"demands/outcomes: override for unknown outcome {o!r}")

    penalty = (doc.get("penalties") or {}).get("unmet")
    return ProblemInstance(
        locations=tuple(locations), supply_types=tuple(supplies),
        demand_table=DemandTable(base, overrides), mode_matrix=ModeMatrix(travel),
        forecast_tree=tree, unmet_penalty=None if penalty is None else float(penalty),
        name=str(doc.get("name", "instance")), last_mile=doc.get("last_mile"),
    )


def _parse_forecast(f: Mapping[str, Any], normalize: bool) -> ForecastTree:
    outcomes = tuple(str(o) for o in f["outcomes"])
    scenarios = tuple(str(s) for s in f["scenarios"])
    locs = tuple(str(l) for l in f["intermediate_locations"])
    times = tuple(f["dispatch_times"])
    if len(set(times)) != len(times):
        _fail("forecast: duplicate dispatch times")
    times = tuple(sorted(times, reverse=True))

    ow: dict[tuple[str, str, str], float] = {}
    for r in f["outcome_weights"]:
        key = (str(r["outcome"]), str(r["location"]), str(r["scenario"]))
        if key[0] not in outcomes or key[1] not in locs or key[2] not in scenarios:
            _fail(f"forecast/outcome_weights: dangling reference {key}")
        ow[key] = float(r["p"])
    lw: dict[tuple[str, float], float] = {}
    for r in f["location_weights"]:
        key = (str(r["location"]), r["time"])
        if key[0] not in locs or key[1] not in times:
            _fail(f"forecast/location_weights: dangling reference {key}")
        lw[key] = float(r["p"])

    planning = f.get("planning_outcome")
    if planning is not None and str(planning) not in outcomes:
        _fail(f"forecast: planning_outcome {planning!r} is not an outcome")

    tree = ForecastTree(outcomes, scenarios, locs, times, ow, lw,
                        None if planning is None else str(planning))
    if normalize:
        tree = normalize_tree(tree)
    check_tree(tree, NORMALIZED_PROB_TOL if normalize else INPUT_PROB_TOL)
    return tree


def normalize_tree(tree: ForecastTree) -> ForecastTree:
    ow = {}
    for (l, s) in tree.rows:
        row = {o: tree.outcome_weights[(o, l, s)] for o in tree.outcomes
               if (o, l, s) in tree.outcome_weights}
        for o, p in normalize_weights(row).items():
            ow[(o, l, s)] = p
    lw = {}
    for t in tree.dispatch_times:
        col = {l: tree.location_weights[(l, t)] for l in tree.intermediate_locations
               if (l, t) in tree.location_weights}
        if not col:
            _fail(f"forecast: no location weights for dispatch time {t}")
        for l, p in normalize_weights(col).items():
            lw[(l, t)] = p
    return ForecastTree(tree.outcomes, tree.scenarios, tree.intermediate_locations, tree.dispatch_times,
                        ow, lw, tree.planning_outcome)


def check_tree(tree: ForecastTree, tol: float) -> None:
    for (l, s), total in tree.row_sums().items():
        if abs(total - 1.0) > tol:
            _fail(f"forecast: outcome weights for location {l}, scenario {s} sum to {total!r}, not 1 "
                  f"(pass normalize to rescale)")
    for t, total in tree.time_sums().items():
        if abs(total - 1.0) > tol:
            _fail(f"forecast: location weights at dispatch time {t} sum to {total!r}, not 1 "
                  f"(pass normalize to rescale)")


def parse_instance(path: str | Path, normalize: bool = False) -> ProblemInstance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: not valid JSON ({exc})") from None
    return instance_from_dict(doc, normalize=normalize)


def instance_to_dict(inst: ProblemInstance) -> dict[str, Any]:
    def entries(e):
        return [{"location": j, "supply": k, "units": u} for (j, k), u in sorted(e.items())]

    doc: dict[str, Any] = {
        "name": inst.name,
        "locations": [{
            "id": l.id, "coords": {"lat": l.coords[0], "lon": l.coords[1]},
            "prestage_candidate": l.prestage_candidate,
            "capacity_by_supply": dict(sorted(l.capacity_by_supply.items())),
            "destruction_prob": l.destruction_prob} for l in inst.locations],
        "supply_types": [{
            "id": k.id, "alpha": k.alpha, "time_weight": k.time_weight, "demand_weight": k.demand_weight,
            "lead_time": k.lead_time, "delay_buffer": k.delay_buffer, "unit_weight": k.unit_weight,
            "unit_volume": k.unit_volume} for k in inst.supply_types],
        "demands": {
            "base": entries(inst.demand_table.entries),
            "outcomes": {o: {"entries": entries(od.entries), "destroyed": sorted(od.destroyed)}
                         for o, od in inst.demand_table.outcomes.items()},
        },
        "modes": [{"from": i, "to": j, "mode": m, "travel_time": t}
                  for (i, j, m), t in sorted(inst.mode_matrix.travel_time.items())],
        "penalties": {"unmet": inst.unmet_penalty},
    }
    ft = inst.forecast_tree
    if ft is not None:
        doc["forecast"] = {
            "outcomes": list(ft.outcomes), "scenarios": list(ft.scenarios),
            "intermediate_locations": list(ft.intermediate_locations),
            "dispatch_times": list(ft.dispatch_times),
            "outcome_weights": [{"outcome": o, "location": l, "scenario": s, "p": p}
                                for (o, l, s), p in ft.outcome_weights.items()],
            "location_weights": [{"location": l, "time": t, "p": p}
                                 for (l, t), p in ft.location_weights.items()],
        }
        if ft.planning_outcome is not None:
            doc["forecast"]["planning_outcome"] = ft.planning_outcome
    if inst.last_mile is not None:
        doc["last_mile"] = inst.last_mile
    return doc


def write_instance(inst: ProblemInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=2) + "\n", encoding="utf-8")
