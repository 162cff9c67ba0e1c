"""Red's disruption-effort problem.

    max  sum_l n_l (e^{W_l} - 1) + eps * sum_l log(b_l - W_l) + eps_hat * log(beta - sum_l W_l)
    s.t. 0 <= W_l <= 1

over links carrying positive Blue flow. The exponential term is convex and
the barriers are concave, so the objective is not concave in general:
along each coordinate the derivative changes sign at most twice. The
solver exploits that: every coordinate update is an exact 1-D global
maximization, coordinate ascent runs from several starts, and the best
point is polished with Newton steps on the free coordinates.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.optimize import brentq

log = logging.getLogger(__name__)

LinkKey = tuple[str, str]
INTERIOR_MARGIN = 1e-9


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class RedBudget:
    epsilon: float = 0.1
    epsilon_hat: float = 0.1
    total: float = 2.0
    per_link: float | Mapping[LinkKey, float] = 1.0

    def link_budget(self, key: LinkKey) -> float:
        if isinstance(self.per_link, Mapping):
            return float(self.per_link[key])
        return float(self.per_link)

    def validate(self, links: list[LinkKey]) -> None:
        if self.epsilon <= 0 or self.epsilon_hat <= 0 or self.total <= 0:
            raise BudgetError("epsilon, epsilon_hat and total budget must be strictly positive")
        bs = [self.link_budget(k) for k in links]
        if any(b <= 0 for b in bs):
            raise BudgetError("per-link budgets must be strictly positive")
        if links and self.total > sum(bs):
            warnings.warn("total budget exceeds the sum of per-link budgets; it may never bind",
                          stacklevel=3)


@dataclass
class DisruptionProfile:
    effort: dict[LinkKey, float] = field(default_factory=dict)
    cost_increase: dict[LinkKey, float] = field(default_factory=dict)
    objective: float = 0.0
    kkt_residual: float = 0.0

    def heavy_links(self, z_min: float = 0.05) -> dict[LinkKey, float]:
        return {k: z for k, z in sorted(self.cost_increase.items()) if z > z_min}

    def to_dict(self) -> dict:
        return {"objective": self.objective, "kkt_residual": self.kkt_residual,
                "links": [{"from": a, "to": b, "W": self.effort[(a, b)], "Z": self.cost_increase[(a, b)]}
                          for (a, b) in sorted(self.effort)]}

    def top_table(self, n: int = 10) -> str:
        rows = sorted(self.effort, key=lambda k: (-self.cost_increase[k], k))[:n]
        lines = [f"{'link':<32} {'W':>10} {'Z':>10}"]
        for k in rows:
            lines.append(f"{k[0] + '->' + k[1]:<32} {self.effort[k]:>10.6f} {self.cost_increase[k]:>10.6f}")
        return "\n".join(lines)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def effort_to_impact(effort: Mapping[LinkKey, float]) -> dict[LinkKey, float]:
    """Z = e^W - 1 per link; W must lie in [0, 1]."""
    out = {}
    for k, w in effort.items():
        if not 0.0 <= w <= 1.0:
            raise ValueError(f"effort {w} on {k} outside [0, 1]")
        out[k] = math.expm1(w)
    return out


class _RedProblem:
    def __init__(self, n: np.ndarray, b: np.ndarray, beta: float, eps: float, eps_hat: float):
        self.n, self.b, self.beta, self.eps, self.eps_hat = n, b, beta, eps, eps_hat
        self.cap = np.minimum(1.0, b)
        self.cap_closed = b > 1.0  # W = 1 attainable only when the per-link barrier sits beyond it

    def value(self, w: np.ndarray) -> float:
        slack_b = self.b - w
        slack_t = self.beta - w.sum()
        if np.any(slack_b <= 0) or slack_t <= 0 or np.any(w < 0) or np.any(w > 1):
            return -math.inf
        return float(np.sum(self.n * np.expm1(w)) + self.eps * np.sum(np.log(slack_b))
                     + self.eps_hat * math.log(slack_t))

    def grad(self, w: np.ndarray) -> np.ndarray:
        return self.n * np.exp(w) - self.eps / (self.b - w) - self.eps_hat / (self.beta - w.sum())

    def hess(self, w: np.ndarray) -> np.ndarray:
        d = self.n * np.exp(w) - self.eps / (self.b - w) ** 2
        return np.diag(d) - self.eps_hat / (self.beta - w.sum()) ** 2

    def kkt(self, w: np.ndarray) -> float:
        g = self.grad(w)
        worst = 0.0
        for i in range(w.size):
            if w[i] <= 0.0:
                worst = max(worst, g[i])
            elif self.cap_closed[i] and w[i] >= 1.0:
                worst = max(worst, -g[i])
            else:
                worst = max(worst, abs(g[i]))
        return worst

    def best_coordinate(self, i: int, rest: float) -> float:
        """Exact global maximizer of the objective along coordinate ``i``."""
        n, b, eps, eh = self.n[i], self.b[i], self.eps, self.eps_hat
        R = self.beta - rest
        U = min(b, R)
        closed = self.cap_closed[i] and R > 1.0
        if n <= 0 or U <= 0:
            return 0.0

        def phi(w):
            return n * math.expm1(w) + eps * math.log(b - w) + eh * math.log(R - w)

        # the derivative is positive exactly where q < 0; q is convex on [0, U)
        def q(w):
            return math.log(eps / (b - w) + eh / (R - w)) - w - math.log(n)

        def dq(w):
            g = eps / (b - w) + eh / (R - w)
            return (eps / (b - w) ** 2 + eh / (R - w) ** 2) / g - 1.0

        def near_u(f):
            # a point close to U where f > 0
            gap = U * 0.5
            while f(U - gap) <= 0:
                gap *= 0.5
                if gap < U * 1e-18:
                    break
            return U - gap

        if dq(0.0) >= 0:
            wm = 0.0
        else:
            wm = brentq(dq, 0.0, near_u(dq), xtol=1e-16, rtol=1e-15, maxiter=500)

        cands = [0.0]
        if closed and wm >= 1.0:
            if q(1.0) < 0:
                cands.append(1.0)
        elif q(wm) < 0:
            r2 = brentq(q, wm, near_u(q), xtol=1e-16, rtol=1e-15, maxiter=500)
            if closed and r2 >= 1.0:
                cands.append(1.0)
            else:
                cands.append(min(r2, U * (1 - 1e-15)))
        vals = [phi(w) for w in cands]
        best = max(vals)
        return min(w for w, v in zip(cands, vals) if v >= best)

    def coordinate_ascent(self, w: np.ndarray, order: list[int], sweeps: int = 60,
                          tol: float = 1e-7) -> np.ndarray:
        """Cyclic exact coordinate maximization; Newton polishing finishes the last digits."""
        w = w.copy()
        cur = self.value(w)
        for _ in range(sweeps):
            moved = 0.0
            for i in order:
                new = self.best_coordinate(i, w.sum() - w[i])
                old = w[i]
                w[i] = new
                v = self.value(w)
                if v >= cur:
                    moved = max(moved, abs(new - old))
                    cur = v
                else:
                    w[i] = old
            if moved < tol:
                break
        return w

    def polish(self, w: np.ndarray, iters: int = 60) -> np.ndarray:
        """Newton steps on coordinates strictly inside their box."""
        w = w.copy()
        for _ in range(iters):
            free = np.array([0.0 < w[i] and not (self.cap_closed[i] and w[i] >= 1.0) for i in range(w.size)])
            if not free.any():
                break
            g = self.grad(w)[free]
            if np.max(np.abs(g)) < 1e-13 or self.kkt(w) < 1e-12:
                break
            H = self.hess(w)[np.ix_(free, free)]
            try:
                step = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                break
            f0 = self.value(w)
            t = 1.0
            accepted = False
            while t > 1e-12:
                trial = w.copy()
                trial[free] = trial[free] + t * step
                if (np.all(trial >= 0) and np.all(trial <= 1) and np.all(self.b - trial > 0)
                        and self.beta - trial.sum() > 0 and self.value(trial) >= f0 - 1e-14 * max(1, abs(f0))):
                    w = trial
                    accepted = True
                    break
                t *= 0.5
            if not accepted or np.max(np.abs(t * step)) < 1e-15:
                break
        return w


def solve_red(flows: Mapping[LinkKey, float], budget: RedBudget) -> DisruptionProfile:
    """Allocate Red's effort over links with positive flow."""
    links = sorted(k for k, v in flows.items() if v > 0)
    budget.validate(links)
    if not links:
        return DisruptionProfile()
    n = np.array([float(flows[k]) for k in links])
    b = np.array([budget.link_budget(k) for k in links])
    prob = _RedProblem(n, b, float(budget.total), float(budget.epsilon), float(budget.epsilon_hat))

    m = len(links)
    by_flow = sorted(range(m), key=lambda i: (-n[i], i))
    interior = np.minimum(np.minimum(0.5, b / 2.0), budget.total / (2.0 * m))
    starts = [(interior, by_flow), (np.zeros(m), by_flow), (np.zeros(m), list(reversed(by_flow)))]
    for i in by_flow[:5]:
        w0 = np.zeros(m)
        w0[i] = prob.best_coordinate(i, 0.0)
        starts.append((w0, by_flow))

    best_w, best_v = None, -math.inf
    for w0, order in starts:
        w = prob.polish(prob.coordinate_ascent(w0, order))
        if prob.kkt(w) > 1e-10:
            w = prob.polish(prob.coordinate_ascent(w, order))
        v = prob.value(w)
        if v > best_v + 1e-14:
            best_w, best_v = w, v
    w = best_w
    if np.any(b - w < INTERIOR_MARGIN) or budget.total - w.sum() < INTERIOR_MARGIN:
        log.warning("Red solution within %.0e of a barrier", INTERIOR_MARGIN)
    effort = {k: float(x) for k, x in zip(links, w)}
    return DisruptionProfile(effort, effort_to_impact(effort), best_v, prob.kkt(w))


def red_objective(flows: Mapping[LinkKey, float], budget: RedBudget, effort: Mapping[LinkKey, float]) -> float:
    links = sorted(k for k, v in flows.items() if v > 0)
    prob = _RedProblem(np.array([float(flows[k]) for k in links]),
                       np.array([budget.link_budget(k) for k in links]),
                       float(budget.total), float(budget.epsilon), float(budget.epsilon_hat))
    return prob.value(np.array([effort.get(k, 0.0) for k in links]))
