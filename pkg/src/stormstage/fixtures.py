"""Shipped instance generators: noru-like, two-corridor, single-path and seeded random.

The noru-like outcome-weight rows were produced by scripts/calibrate_noru.py
and are frozen here at full precision.
"""

from __future__ import annotations

import numpy as np

KINDS = ("noru-like", "two-corridor", "single-path", "random")

NORU_TIMES = (49, 37, 25, 13, 1)
NORU_SCENARIO = {49: "s_long", 37: "s_long", 25: "s_medium", 13: "s_medium", 1: "s_short"}
# outcome -> (closing hrs from the pre-stage site, demand units); stock is 100 units of water
NORU_OUTCOMES = {"o1": (60.0, 100.0), "o2": (70.0, 250.0), "o3": (80.0, 125.0), "o4": (120.0, 200.0),
                 "o5": (140.0, 125.0)}
NORU_ROWS = {
    49: {"o1": 0.1423728813559322, "o2": 0.14237288135593215, "o3": 0.14237288135593212,
         "o4": 0.205084745762712, "o5": 0.36779661016949144},
    37: {"o1": 0.2023255813953489, "o2": 0.172093023255814, "o3": 0.17209302325581394,
         "o4": 0.17209302325581396, "o5": 0.2813953488372092},
    25: {"o1": 0.3755833333333333, "o2": 0.15716666666666673, "o3": 0.38558333333333333,
         "o4": 0.040833333333333284, "o5": 0.040833333333333284},
    13: {"o1": 0.6620689655172414, "o2": 0.16206896551724134, "o3": 0.05862068965517245,
         "o4": 0.058620689655172434, "o5": 0.05862068965517243},
    1: {"o1": 0.8034482758620689, "o2": 0.10344827586206895, "o3": 0.031034482758620707,
        "o4": 0.031034482758620693, "o5": 0.031034482758620696},
}

# synthetic minutes; central expressway plus western and eastern alternatives
NORU_ROADS = [
    ("Manila", "Bocaue", 40), ("Bocaue", "Malolos", 30), ("Malolos", "SanFernando", 40),
    ("SanFernando", "Angeles", 25), ("Angeles", "Tarlac", 40),
    ("Manila", "Lubao", 110), ("Lubao", "SanFernando", 30), ("Lubao", "Floridablanca", 20),
    ("Floridablanca", "Angeles", 35),
    ("Manila", "QuezonCity", 25), ("QuezonCity", "Norzagaray", 50), ("Norzagaray", "Baliwag", 40),
    ("Baliwag", "SanMiguel", 30), ("SanMiguel", "Cabanatuan", 45), ("Cabanatuan", "Gabaldon", 70),
    ("Bocaue", "Baliwag", 35), ("Baliwag", "Malolos", 35), ("SanMiguel", "Tarlac", 60),
    ("QuezonCity", "Bocaue", 30),
]
NORU_CORRIDORS = {
    "central": [["Manila", "Bocaue"], ["Bocaue", "Malolos"], ["Malolos", "SanFernando"],
                ["SanFernando", "Angeles"]],
}
NORU_LAST_MILE_DEMAND = [
    ("water", "Angeles", 40), ("shelter", "Angeles", 10), ("water", "SanFernando", 40),
    ("shelter", "SanFernando", 10), ("water", "Malolos", 20), ("water", "SanMiguel", 20),
    ("shelter", "SanMiguel", 5), ("water", "Tarlac", 20), ("water", "Cabanatuan", 20),
    ("water", "Gabaldon", 20), ("shelter", "Gabaldon", 10),
]


def _roads(rows):
    out = []
    for a, b, c in rows:
        out.append({"from": a, "to": b, "cost_min": float(c)})
    return out


def _bidirectional(rows):
    return rows + [(b, a, c) for a, b, c in rows]


def noru_last_mile() -> dict:
    demand = [{"commodity": c, "location": l, "units": float(u)} for c, l, u in NORU_LAST_MILE_DEMAND]
    return {
        "name": "noru_last_mile",
        "links": _roads(_bidirectional(NORU_ROADS)),
        "commodities": [{"id": "water", "weight": 1.0, "volume": 1.0},
                        {"id": "shelter", "weight": 2.0, "volume": 3.0}],
        "vehicles": [
            {"id": "manila_trucks", "location": "Manila", "count": 16, "weight_cap": 20.0, "volume_cap": 25.0},
        ],
        "supplies": [{"commodity": "water", "location": "Manila", "units": 260.0},
                     {"commodity": "shelter", "location": "Manila", "units": 60.0}],
        "demands": {"o3": demand, "default": demand},
        "rho_hat": 5.0, "period_min": 10.0, "horizon": 40, "hard_demand": True,
        "theta": 200.0, "iterations": 3,
        "corridors": NORU_CORRIDORS,
        "red": {"epsilon": 0.1, "epsilon_hat": 0.1, "total": 2.0, "per_link": 1.0},
    }


def noru_like() -> dict:
    """Pre-stage site A holds water for the planning outcome; each outcome is a
    demand node at a different distance with a different demand size."""
    locs = [{"id": "A", "prestage_candidate": True, "capacity_by_supply": {"water": 100.0, "shelter": 50.0},
             "coords": {"lat": 14.6, "lon": 121.0}}]
    demands = {}
    modes = []
    for o, (hrs, units) in NORU_OUTCOMES.items():
        node = f"J_{o}"
        locs.append({"id": node})
        modes.append({"from": "A", "to": node, "mode": "truck", "travel_time": hrs})
        demands[o] = {"entries": [{"location": node, "supply": "water", "units": units},
                                  {"location": node, "supply": "shelter", "units": units / 2}],
                      "destroyed": []}
    base = demands["o1"]["entries"]
    tree_locs = [f"L{t}" for t in NORU_TIMES]
    ow = [{"outcome": o, "location": f"L{t}", "scenario": NORU_SCENARIO[t], "p": p}
          for t in NORU_TIMES for o, p in NORU_ROWS[t].items()]
    lw = [{"location": f"L{t}", "time": t, "p": 1.0} for t in NORU_TIMES]
    return {
        "name": "noru_like",
        "locations": locs,
        "supply_types": [
            {"id": "water", "alpha": 1.0, "time_weight": 1.0, "demand_weight": 1.0, "lead_time": 24.0,
             "delay_buffer": 0.0},
            {"id": "shelter", "alpha": 1.0, "time_weight": 1.0, "demand_weight": 1.0, "lead_time": 12.0,
             "delay_buffer": 0.0, "unit_weight": 2.0, "unit_volume": 3.0},
        ],
        "demands": {"base": base, "outcomes": demands},
        "modes": modes,
        "forecast": {"outcomes": list(NORU_OUTCOMES), "scenarios": ["s_long", "s_medium", "s_short"],
                     "intermediate_locations": tree_locs, "dispatch_times": list(NORU_TIMES),
                     "outcome_weights": ow, "location_weights": lw, "planning_outcome": "o1"},
        "penalties": {"unmet": None},
        "last_mile": noru_last_mile(),
    }


def _tiny_p1(name: str) -> dict:
    return {
        "name": name,
        "locations": [{"id": "S", "prestage_candidate": True, "capacity_by_supply": {"water": 40.0}},
                      {"id": "T"}],
        "supply_types": [{"id": "water", "lead_time": 24.0}],
        "demands": {"base": [{"location": "T", "supply": "water", "units": 40.0}]},
        "modes": [{"from": "S", "to": "T", "mode": "truck", "travel_time": 1.0}],
        "penalties": {"unmet": None},
    }


def two_corridor(trucks: int = 4) -> dict:
    """Central corridor S-a-b-T (30 min) and a parallel detour S-c-d-T (36 min)."""
    roads = [("S", "a", 10), ("a", "b", 10), ("b", "T", 10), ("S", "c", 12), ("c", "d", 12), ("d", "T", 12)]
    doc = _tiny_p1("two_corridor")
    doc["last_mile"] = {
        "name": "two_corridor",
        "links": _roads(roads),
        "commodities": [{"id": "water", "weight": 1.0, "volume": 1.0}],
        "vehicles": [{"id": f"truck{i}", "location": "S", "count": 1, "weight_cap": 10.0, "volume_cap": 10.0}
                     for i in range(1, trucks + 1)],
        "supplies": [{"commodity": "water", "location": "S", "units": 10.0 * trucks}],
        "demands": [{"commodity": "water", "location": "T", "units": 10.0 * trucks}],
        "rho_hat": 5.0, "period_min": 10.0, "horizon": 8, "hard_demand": True,
        "theta": 100.0, "iterations": 3,
        "corridors": {"central": [["S", "a"], ["a", "b"], ["b", "T"]], "detour": [["S", "c"], ["c", "d"], ["d", "T"]]},
        "red": {"epsilon": 0.1, "epsilon_hat": 0.1, "total": 2.0, "per_link": 1.0},
    }
    return doc


def single_path(trucks: int = 4) -> dict:
    doc = _tiny_p1("single_path")
    doc["last_mile"] = {
        "name": "single_path",
        "links": _roads([("S", "a", 10), ("a", "T", 10)]),
        "commodities": [{"id": "water", "weight": 1.0, "volume": 1.0}],
        "vehicles": [{"id": f"truck{i}", "location": "S", "count": 1, "weight_cap": 10.0, "volume_cap": 10.0}
                     for i in range(1, trucks + 1)],
        "supplies": [{"commodity": "water", "location": "S", "units": 10.0 * trucks}],
        "demands": [{"commodity": "water", "location": "T", "units": 10.0 * trucks}],
        "rho_hat": 5.0, "period_min": 10.0, "horizon": 6, "hard_demand": True,
        "theta": 100.0, "iterations": 3,
        "corridors": {"only": [["S", "a"], ["a", "T"]]},
        "red": {"epsilon": 0.1, "epsilon_hat": 0.1, "total": 2.0, "per_link": 1.0},
    }
    return doc


def random_instance(seed: int) -> dict:
    """Small random instance with a forecast tree and a grid road network."""
    rng = np.random.default_rng(seed)
    n_sites = int(rng.integers(1, 4))
    n_dem = int(rng.integers(1, 4))
    supplies = ["water", "food"][: int(rng.integers(1, 3))]
    modes = ["truck", "barge"][: int(rng.integers(1, 3))]
    outcomes = [f"o{i}" for i in range(1, int(rng.integers(2, 4)) + 1)]
    sites = [f"P{i}" for i in range(n_sites)]
    nodes = [f"D{j}" for j in range(n_dem)]
    r2 = lambda x: float(round(float(x), 2))
    locs = [{"id": s, "prestage_candidate": True, "destruction_prob": r2(rng.uniform(0, 0.3)),
             "capacity_by_supply": {k: r2(rng.uniform(20, 80)) for k in supplies}} for s in sites]
    locs += [{"id": j} for j in nodes]
    arcs = [{"from": s, "to": j, "mode": m, "travel_time": r2(rng.uniform(1, 30))}
            for s in sites for j in nodes for m in modes]

    def table():
        return [{"location": j, "supply": k, "units": r2(rng.uniform(5, 40))} for j in nodes for k in supplies]

    out_tables = {}
    for o in outcomes:
        destroyed = [s for s in sites if rng.uniform() < 0.2]
        out_tables[o] = {"entries": table(), "destroyed": destroyed}
    times = [36, 24, 12]
    tlocs = ["L1", "L2"]
    scen = ["s1", "s2"]
    ow = []
    for l in tlocs:
        for s in scen:
            w = rng.dirichlet(np.ones(len(outcomes)))
            w[-1] = 1.0 - w[:-1].sum()
            ow += [{"outcome": o, "location": l, "scenario": s, "p": float(p)} for o, p in zip(outcomes, w)]
    lw = []
    for t in times:
        w = rng.dirichlet(np.ones(len(tlocs)))
        w[-1] = 1.0 - w[:-1].sum()
        lw += [{"location": l, "time": t, "p": float(p)} for l, p in zip(tlocs, w)]
    # 3x3 grid road network, depot at corner g00
    grid = []
    for r in range(3):
        for c in range(3):
            if c < 2:
                grid.append((f"g{r}{c}", f"g{r}{c + 1}", int(rng.integers(5, 25))))
            if r < 2:
                grid.append((f"g{r}{c}", f"g{r + 1}{c}", int(rng.integers(5, 25))))
    dests = ["g22", "g12"]
    lm = {
        "name": f"random_{seed}_last_mile",
        "links": _roads(_bidirectional(grid)),
        "commodities": [{"id": k, "weight": 1.0, "volume": 1.0} for k in supplies],
        "vehicles": [{"id": "trucks", "location": "g00", "count": 3, "weight_cap": 20.0, "volume_cap": 20.0}],
        "supplies": [{"commodity": k, "location": "g00", "units": 60.0} for k in supplies],
        "demands": [{"commodity": k, "location": d, "units": float(rng.integers(5, 15))}
                    for k in supplies for d in dests],
        "rho_hat": 5.0, "period_min": 10.0, "horizon": 14, "theta": 50.0, "iterations": 2,
        "corridors": {},
    }
    return {
        "name": f"random_{seed}",
        "locations": locs,
        "supply_types": [{"id": k, "alpha": r2(rng.uniform(0, 20)), "lead_time": 24.0} for k in supplies],
        "demands": {"base": out_tables[outcomes[0]]["entries"], "outcomes": out_tables},
        "modes": arcs,
        "forecast": {"outcomes": outcomes, "scenarios": scen, "intermediate_locations": tlocs,
                     "dispatch_times": times, "outcome_weights": ow, "location_weights": lw},
        "penalties": {"unmet": None},
        "last_mile": lm,
    }


def make(kind: str, seed: int = 0) -> dict:
    if kind == "noru-like":
        return noru_like()
    if kind == "two-corridor":
        return two_corridor()
    if kind == "single-path":
        return single_path()
    if kind == "random":
        return random_instance(seed)
    raise ValueError(f"unknown fixture kind {kind!r}; choose from {', '.join(KINDS)}")
