"""Road network and candidate-route pool built from penalized shortest paths."""

from __future__ import annotations

import heapq
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

log = logging.getLogger(__name__)

DEFAULT_POOL_CAP = 8


class UnreachableError(ValueError):
    pass


@dataclass
class Link:
    cost: float
    impact: float = 0.0  # Red's cost increase Z, accumulated by max


@dataclass
class RoadNetwork:
    links: dict[tuple[str, str], Link] = field(default_factory=dict)

    @classmethod
    def from_links(cls, rows: Iterable[Mapping]) -> "RoadNetwork":
        net = cls()
        for r in rows:
            key = (str(r["from"]), str(r["to"]))
            if key in net.links:
                raise ValueError(f"parallel link {key[0]}->{key[1]} not allowed")
            cost = float(r["cost_min"])
            if cost <= 0:
                raise ValueError(f"link {key[0]}->{key[1]}: cost must be positive")
            net.links[key] = Link(cost)
        return net

    @classmethod
    def read(cls, path: str | Path) -> "RoadNetwork":
        return cls.from_links(json.loads(Path(path).read_text())["links"])

    def to_dict(self) -> dict:
        return {"links": [{"from": a, "to": b, "cost_min": l.cost} for (a, b), l in sorted(self.links.items())]}

    @property
    def nodes(self) -> list[str]:
        return sorted({n for key in self.links for n in key})

    def successors(self, node: str) -> list[str]:
        return sorted(b for (a, b) in self.links if a == node)

    def link_cost(self, key: tuple[str, str], theta: float = 0.0, penalized: bool = False) -> float:
        l = self.links[key]
        return l.cost + theta * l.impact if penalized else l.cost

    def inject(self, impacts: Mapping[tuple[str, str], float]) -> None:
        """Raise link impacts to ``max(current, new)``."""
        for key, z in impacts.items():
            if z < 0:
                raise ValueError("impact must be nonnegative")
            if key in self.links:
                self.links[key].impact = max(self.links[key].impact, z)

    def reset_impacts(self) -> None:
        for l in self.links.values():
            l.impact = 0.0


@dataclass(frozen=True)
class Route:
    id: str
    origin: str
    destination: str
    nodes: tuple[str, ...]

    @property
    def links(self) -> tuple[tuple[str, str], ...]:
        return tuple(zip(self.nodes[:-1], self.nodes[1:]))

    def nominal_length(self, net: RoadNetwork) -> float:
        return sum(net.links[k].cost for k in self.links)

    def current_length(self, net: RoadNetwork, theta: float) -> float:
        return sum(net.link_cost(k, theta, penalized=True) for k in self.links)

    def to_dict(self, net: RoadNetwork | None = None, theta: float = 0.0) -> dict:
        d = {"id": self.id, "origin": self.origin, "destination": self.destination, "nodes": list(self.nodes)}
        if net is not None:
            d["nominal_length"] = self.nominal_length(net)
            d["current_length"] = self.current_length(net, theta)
        return d


def shortest_route(net: RoadNetwork, origin: str, dest: str, cost: str = "nominal",
                   theta: float = 0.0, route_id: str | None = None) -> Route:
    """Minimum-cost simple path; equal costs resolve to the lexicographically smallest node sequence."""
    if origin == dest:
        raise ValueError("origin and destination must differ")
    nodes = set(net.nodes)
    if origin not in nodes or dest not in nodes:
        raise UnreachableError(f"{origin}->{dest}: endpoint not in network")
    penalized = cost == "penalized"
    if cost not in ("nominal", "penalized"):
        raise ValueError(f"unknown cost {cost!r}")
    succ: dict[str, list[tuple[str, float]]] = {}
    for (a, b) in net.links:
        succ.setdefault(a, []).append((b, net.link_cost((a, b), theta, penalized)))
    # label = (rounded distance, path); both parts order the heap
    heap = [(0.0, (origin,))]
    settled: set[str] = set()
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node in settled:
            continue
        settled.add(node)
        if node == dest:
            return Route(route_id or f"{origin}->{dest}", origin, dest, path)
        for nxt, c in succ.get(node, ()):
            if nxt not in settled:
                heapq.heappush(heap, (round(dist + c, 9), path + (nxt,)))
    raise UnreachableError(f"{dest} unreachable from {origin}")


@dataclass
class RoutePool:
    cap: int = DEFAULT_POOL_CAP
    routes: dict[tuple[str, str], list[Route]] = field(default_factory=dict)
    cap_hits: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def add(self, route: Route) -> bool:
        od = (route.origin, route.destination)
        existing = self.routes.setdefault(od, [])
        if any(r.nodes == route.nodes for r in existing):
            return False
        if len(existing) >= self.cap:
            self.cap_hits.append(od)
            log.info("route pool cap %d reached for %s->%s", self.cap, *od)
            return False
        existing.append(Route(f"{od[0]}->{od[1]}#{len(existing)}", od[0], od[1], route.nodes))
        return True

    def all_routes(self) -> list[Route]:
        return [r for od in sorted(self.routes) for r in self.routes[od]]

    def size(self) -> int:
        return sum(len(v) for v in self.routes.values())

    def by_id(self) -> dict[str, Route]:
        return {r.id: r for r in self.all_routes()}

    def to_dict(self, net: RoadNetwork | None = None, theta: float = 0.0) -> dict:
        return {"routes": [r.to_dict(net, theta) for r in self.all_routes()],
                "cap": self.cap, "cap_hits": [list(od) for od in self.cap_hits]}


def initial_pool(net: RoadNetwork, pairs: Iterable[tuple[str, str]], cap: int = DEFAULT_POOL_CAP) -> RoutePool:
    pool = RoutePool(cap=cap)
    for o, d in pairs:
        try:
            pool.add(shortest_route(net, o, d, "nominal"))
        except UnreachableError as exc:
            pool.warnings.append(str(exc))
    return pool


def extend_pool(pool: RoutePool, net: RoadNetwork, pairs: Iterable[tuple[str, str]],
                theta: float) -> list[Route]:
    """Add each pair's penalized shortest path when it is new; returns the routes added."""
    added = []
    for o, d in pairs:
        try:
            r = shortest_route(net, o, d, "penalized", theta)
        except UnreachableError as exc:
            pool.warnings.append(str(exc))
            continue
        if pool.add(r):
            added.append(pool.routes[(o, d)][-1])
    return added
