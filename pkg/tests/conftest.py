import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stormstage import fixtures
from stormstage.blue_plan import Event, problem_from_dict
from stormstage.route_gen import Route, initial_pool
from stormstage.data_model import instance_from_dict

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_p1_doc(rng: np.random.Generator, max_sites=4, max_dem=4, max_sup=2, max_modes=2) -> dict:
    """Integer-valued pre-staging instance so flow oracles stay exact."""
    sites = [f"S{i}" for i in range(int(rng.integers(1, max_sites + 1)))]
    dems = [f"J{j}" for j in range(int(rng.integers(1, max_dem + 1)))]
    sups = [f"k{k}" for k in range(int(rng.integers(1, max_sup + 1)))]
    modes = [f"m{m}" for m in range(int(rng.integers(1, max_modes + 1)))]
    locs = [{"id": s, "prestage_candidate": True, "destruction_prob": float(rng.integers(0, 5)) / 10,
             "capacity_by_supply": {k: float(rng.integers(0, 30)) for k in sups}} for s in sites]
    locs += [{"id": j} for j in dems]
    arcs = []
    for s in sites:
        for j in dems:
            for m in modes:
                if rng.uniform() < 0.8:
                    arcs.append({"from": s, "to": j, "mode": m, "travel_time": float(rng.integers(1, 40))})
    base = [{"location": j, "supply": k, "units": float(rng.integers(0, 25))} for j in dems for k in sups]
    return {
        "locations": locs,
        "supply_types": [{"id": k, "alpha": float(rng.integers(0, 20))} for k in sups],
        "demands": {"base": base},
        "modes": arcs,
        "penalties": {"unmet": float(rng.integers(50, 200)) if rng.uniform() < 0.5 else None},
    }


def random_blue_case(rng: np.random.Generator, max_int: int = 10):
    """Tiny last-mile instance with at most ``max_int`` departure variables, plus events and theta."""
    while True:
        n_dest = int(rng.integers(1, 3))
        dests = [f"T{i}" for i in range(n_dest)]
        links = []
        for d in dests:
            for mid in ("a", "b"):
                links.append({"from": "S", "to": f"{mid}{d}", "cost_min": float(rng.integers(5, 25))})
                links.append({"from": f"{mid}{d}", "to": d, "cost_min": float(rng.integers(5, 25))})
        n_trucks = int(rng.integers(1, 4))
        window = int(rng.integers(1, 3))
        n_int = n_trucks * 2 * n_dest * window
        if n_int <= max_int:
            break
    com = [{"id": "water", "weight": 1.0, "volume": 1.0}]
    if rng.uniform() < 0.5:
        com.append({"id": "tents", "weight": 2.0, "volume": 3.0})
    cap = float(rng.integers(5, 15))
    doc = {
        "name": "rand_blue",
        "links": links,
        "commodities": com,
        "vehicles": [{"id": f"v{i}", "location": "S", "count": 1, "weight_cap": cap, "volume_cap": cap + 2,
                      "turnaround": int(rng.integers(0, 2)), "cost_per_minute": float(rng.integers(1, 3))}
                     for i in range(n_trucks)],
        "supplies": [{"commodity": c["id"], "location": "S", "units": 100.0} for c in com],
        "demands": [{"commodity": c["id"], "location": d, "units": float(rng.integers(0, 10))}
                    for c in com for d in dests],
        "rho_hat": float(rng.integers(1, 20)),
        "period_min": 10.0,
        "horizon": int(rng.integers(5, 9)),
        "departure_window": window,
    }
    prob = problem_from_dict(doc)
    pool = initial_pool(prob.network, prob.od_pairs)
    for d in dests:
        for mid in ("a", "b"):
            pool.add(Route("x", "S", d, ("S", f"{mid}{d}", d)))
    events = []
    for i, r in enumerate(pool.all_routes()):
        if rng.uniform() < 0.5:
            events.append(Event(f"e{i}", (r.id,), float(rng.integers(1, 4)) / 2))
    theta = float(rng.choice([0.0, 5.0, 50.0]))
    return prob, pool, events, theta


@pytest.fixture(scope="session")
def noru_doc():
    return fixtures.noru_like()


@pytest.fixture(scope="session")
def noru_instance(noru_doc):
    return instance_from_dict(noru_doc)


@pytest.fixture
def two_corridor_problem():
    return problem_from_dict(fixtures.two_corridor()["last_mile"])


@pytest.fixture
def single_path_problem():
    return problem_from_dict(fixtures.single_path()["last_mile"])
