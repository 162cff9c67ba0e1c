import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import all_simple_path_costs
from stormstage.route_gen import (RoadNetwork, Route, RoutePool, UnreachableError, extend_pool, initial_pool,
                                  shortest_route)


def net_of(pairs):
    return RoadNetwork.from_links([{"from": a, "to": b, "cost_min": c} for a, b, c in pairs])


def corridor_net():
    return net_of([("S", "a", 10), ("a", "b", 10), ("b", "T", 10), ("S", "c", 12), ("c", "d", 12), ("d", "T", 12)])


def test_shortest_and_tie_break():
    net = net_of([("S", "x", 1), ("x", "T", 1), ("S", "a", 1), ("a", "T", 1), ("S", "T", 5)])
    r = shortest_route(net, "S", "T")
    assert r.nodes == ("S", "a", "T")
    assert r.nominal_length(net) == 2


def test_unreachable_and_bad_endpoints():
    net = net_of([("S", "a", 1), ("b", "T", 1)])
    with pytest.raises(UnreachableError):
        shortest_route(net, "S", "T")
    with pytest.raises(UnreachableError):
        shortest_route(net, "S", "nowhere")
    with pytest.raises(ValueError):
        shortest_route(net, "S", "S")


def test_network_validation():
    with pytest.raises(ValueError):
        net_of([("a", "b", 1), ("a", "b", 2)])
    with pytest.raises(ValueError):
        net_of([("a", "b", 0)])


def test_penalty_shifts_route():
    net = corridor_net()
    net.inject({("a", "b"): 0.5})
    pool = initial_pool(net, [("S", "T")])
    assert pool.all_routes()[0].nodes == ("S", "a", "b", "T")
    # +3 on the 30 min corridor keeps it cheaper than 36
    assert extend_pool(pool, net, [("S", "T")], theta=6) == []
    added = extend_pool(pool, net, [("S", "T")], theta=20)
    assert [r.nodes for r in added] == [("S", "c", "d", "T")]
    assert pool.size() == 2


def test_inject_keeps_maximum():
    net = corridor_net()
    net.inject({("a", "b"): 0.5})
    net.inject({("a", "b"): 0.2, ("zz", "yy"): 1.0})
    assert net.links[("a", "b")].impact == 0.5
    with pytest.raises(ValueError):
        net.inject({("a", "b"): -1})
    net.reset_impacts()
    assert net.links[("a", "b")].impact == 0.0


def test_pool_dedupe_and_cap():
    pool = RoutePool(cap=2)
    nodes = [("S", "a", "T"), ("S", "a", "T"), ("S", "b", "T"), ("S", "c", "T")]
    results = [pool.add(Route("x", "S", "T", n)) for n in nodes]
    assert results == [True, False, True, False]
    assert pool.cap_hits == [("S", "T")]
    assert [r.id for r in pool.all_routes()] == ["S->T#0", "S->T#1"]


def test_unreachable_pair_warns():
    pool = initial_pool(net_of([("S", "a", 1)]), [("S", "a"), ("a", "S")])
    assert pool.size() == 1 and len(pool.warnings) == 1


def random_network(rng, n=20):
    links = {}
    names = [f"n{i:02d}" for i in range(n)]
    for i in range(n):
        for j in rng.choice(n, size=3, replace=False):
            if i != j:
                links[(names[i], names[int(j)])] = float(rng.integers(1, 20))
    return names, links


@given(st.integers(0, 10**6))
def test_dijkstra_against_networkx_and_dfs(seed):
    import networkx as nx
    rng = np.random.default_rng(seed)
    names, links = random_network(rng)
    net = RoadNetwork.from_links([{"from": a, "to": b, "cost_min": c} for (a, b), c in links.items()])
    g = nx.DiGraph()
    g.add_weighted_edges_from((a, b, c) for (a, b), c in links.items())
    o, d = names[0], names[int(rng.integers(1, len(names)))]
    if d not in g or not nx.has_path(g, o, d):
        with pytest.raises(UnreachableError):
            shortest_route(net, o, d)
        return
    r = shortest_route(net, o, d)
    assert r.nominal_length(net) == pytest.approx(nx.dijkstra_path_length(g, o, d))
    assert len(set(r.nodes)) == len(r.nodes)
    paths = all_simple_path_costs(links, o, d, max_hops=len(names))
    best = paths[0][0]
    ties = sorted(p for c, p in paths if c == best)
    assert r.nodes == ties[0]


@given(st.integers(0, 10**6), st.floats(0, 50))
def test_penalized_length_bounds(seed, theta):
    rng = np.random.default_rng(seed)
    names, links = random_network(rng)
    net = RoadNetwork.from_links([{"from": a, "to": b, "cost_min": c} for (a, b), c in links.items()])
    net.inject({k: float(rng.uniform()) for k in list(links)[::3]})
    try:
        nominal = shortest_route(net, names[0], names[5])
    except UnreachableError:
        return
    pen = shortest_route(net, names[0], names[5], "penalized", theta)
    assert pen.current_length(net, theta) <= nominal.current_length(net, theta) + 1e-9
    assert pen.nominal_length(net) >= nominal.nominal_length(net) - 1e-9
