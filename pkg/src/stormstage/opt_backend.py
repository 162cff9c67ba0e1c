"""Exact LP / MILP engine for desk-scale models.

LP relaxations are solved with HiGHS (through ``scipy.optimize.linprog``);
integrality is handled by a small deterministic branch-and-bound:
best-bound node selection, branching on the most fractional variable,
ties broken by the lowest variable index.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

log = logging.getLogger(__name__)

DESK_SCALE_LIMIT = 5000
FEAS_TOL = 1e-7
INT_TOL = 1e-7

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class ModelError(ValueError):
    """Malformed model (bad reference, inverted bounds, too large)."""


class SolverError(RuntimeError):
    """The underlying LP engine failed for a reason other than infeasibility."""


class NodeLimitError(RuntimeError):
    def __init__(self, message: str, incumbent: "Solution | None"):
        super().__init__(message)
        self.incumbent = incumbent


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    integer: bool = False


@dataclass
class Constraint:
    coeffs: dict[int, float]
    sense: str  # "<=", ">=", "="
    rhs: float
    name: str = ""


@dataclass
class LinearModel:
    """Minimization model over named variables.

    Variables are referenced by the integer index returned from
    :meth:`add_var`; names only matter for reporting and LP dumps.
    """

    name: str = "model"
    variables: list[Variable] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    obj_constant: float = 0.0
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                integer: bool = False, obj: float = 0.0) -> int:
        if name in self._index:
            raise ModelError(f"duplicate variable {name!r}")
        if lb > ub:
            raise ModelError(f"variable {name!r}: lower bound {lb} > upper bound {ub}")
        idx = len(self.variables)
        self.variables.append(Variable(name, float(lb), float(ub), integer))
        self._index[name] = idx
        if obj:
            self.objective[idx] = self.objective.get(idx, 0.0) + float(obj)
        return idx

    def var(self, name: str) -> int:
        return self._index[name]

    def add_constr(self, coeffs: dict[int, float], sense: str, rhs: float, name: str = "") -> int:
        if sense not in ("<=", ">=", "="):
            raise ModelError(f"unknown relation {sense!r}")
        row = {int(k): float(v) for k, v in coeffs.items() if v != 0.0}
        self.constraints.append(Constraint(row, sense, float(rhs), name))
        return len(self.constraints) - 1

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def has_integers(self) -> bool:
        return any(v.integer for v in self.variables)

    def validate(self) -> None:
        n = self.n_vars
        if n > DESK_SCALE_LIMIT:
            raise ModelError(f"instance exceeds desk scale ({n} > {DESK_SCALE_LIMIT} variables)")
        for k in self.objective:
            if not 0 <= k < n:
                raise ModelError(f"objective references undeclared variable {k}")
        for c in self.constraints:
            for k in c.coeffs:
                if not 0 <= k < n:
                    raise ModelError(f"constraint {c.name or '?'} references undeclared variable {k}")
        for v in self.variables:
            if v.lb > v.ub:
                raise ModelError(f"variable {v.name!r}: lower bound > upper bound")

    def evaluate(self, x) -> float:
        return self.obj_constant + sum(c * x[k] for k, c in self.objective.items())

    def max_violation(self, x) -> float:
        """Largest absolute constraint or bound violation of ``x``."""
        worst = 0.0
        for c in self.constraints:
            lhs = sum(a * x[k] for k, a in c.coeffs.items())
            if c.sense == "<=":
                worst = max(worst, lhs - c.rhs)
            elif c.sense == ">=":
                worst = max(worst, c.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - c.rhs))
        for k, v in enumerate(self.variables):
            worst = max(worst, v.lb - x[k], x[k] - v.ub)
        return worst

    def write_lp(self, path: str | Path) -> None:
        """Dump the model in CPLEX LP text format (debug aid)."""
        def term(coef: float, k: int) -> str:
            sign = "-" if coef < 0 else "+"
            return f"{sign} {abs(coef):.12g} x{k}"

        lines = [f"\\ {self.name}", "Minimize", " obj: " + (" ".join(
            term(c, k) for k, c in sorted(self.objective.items())) or "0 x0"), "Subject To"]
        for i, c in enumerate(self.constraints):
            op = {"<=": "<=", ">=": ">=", "=": "="}[c.sense]
            body = " ".join(term(a, k) for k, a in sorted(c.coeffs.items())) or "0 x0"
            lines.append(f" c{i}: {body} {op} {c.rhs:.12g}")
        lines.append("Bounds")
        for k, v in enumerate(self.variables):
            lo = "-inf" if v.lb == -math.inf else f"{v.lb:.12g}"
            hi = "+inf" if v.ub == math.inf else f"{v.ub:.12g}"
            lines.append(f" {lo} <= x{k} <= {hi}")
        ints = [f"x{k}" for k, v in enumerate(self.variables) if v.integer]
        if ints:
            lines.append("General")
            lines.append(" " + " ".join(ints))
        lines.append("End")
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class Solution:
    status: str
    x: np.ndarray | None = None
    objective_value: float = math.nan
    nodes: int = 0
    names: list[str] = field(default_factory=list, repr=False)

    @property
    def values(self) -> dict[str, float]:
        if self.x is None:
            return {}
        return dict(zip(self.names, self.x.tolist()))

    def __getitem__(self, idx: int) -> float:
        return float(self.x[idx])


def _matrices(model: LinearModel):
    n = model.n_vars
    c = np.zeros(n)
    for k, v in model.objective.items():
        c[k] += v
    ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
    for con in model.constraints:
        if con.sense == "<=":
            ub_rows.append(con.coeffs)
            ub_rhs.append(con.rhs)
        elif con.sense == ">=":
            ub_rows.append({k: -a for k, a in con.coeffs.items()})
            ub_rhs.append(-con.rhs)
        else:
            eq_rows.append(con.coeffs)
            eq_rhs.append(con.rhs)

    def to_csr(rows):
        if not rows:
            return None
        data, ri, ci = [], [], []
        for r, row in enumerate(rows):
            for k, a in row.items():
                ri.append(r)
                ci.append(k)
                data.append(a)
        return sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), n))

    return c, to_csr(ub_rows), np.array(ub_rhs), to_csr(eq_rows), np.array(eq_rhs)


class _Relaxation:
    """Cached matrices so branch-and-bound only swaps bounds between nodes."""

    def __init__(self, model: LinearModel):
        self.model = model
        self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq = _matrices(model)
        self.lb = np.array([v.lb for v in model.variables], dtype=float)
        self.ub = np.array([v.ub for v in model.variables], dtype=float)

    def solve(self, lb: np.ndarray, ub: np.ndarray) -> Solution:
        if self.model.n_vars == 0:
            return Solution(OPTIMAL, np.zeros(0), self.model.obj_constant)
        bounds = np.column_stack([np.where(np.isinf(lb), -np.inf, lb),
                                  np.where(np.isinf(ub), np.inf, ub)])
        res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub if self.A_ub is not None else None,
                      A_eq=self.A_eq, b_eq=self.b_eq if self.A_eq is not None else None,
                      bounds=bounds, method="highs",
                      options={"primal_feasibility_tolerance": 1e-9,
                               "dual_feasibility_tolerance": 1e-9})
        if res.status == 0:
            return Solution(OPTIMAL, np.asarray(res.x, dtype=float),
                            float(res.fun) + self.model.obj_constant)
        if res.status == 2:
            return Solution(INFEASIBLE)
        if res.status == 3:
            return Solution(UNBOUNDED)
        raise SolverError(f"LP engine failed: {res.message}")


def solve_lp(model: LinearModel) -> Solution:
    """Solve a purely continuous model.

    Infeasible / unbounded models come back as a status, not an exception.
    """
    model.validate()
    if model.has_integers:
        raise ModelError("solve_lp called on a model with integer variables; use solve_mip")
    relax = _Relaxation(model)
    sol = relax.solve(relax.lb, relax.ub)
    sol.names = [v.name for v in model.variables]
    return sol


def _most_fractional(x: np.ndarray, int_idx: np.ndarray) -> int | None:
    if int_idx.size == 0:
        return None
    vals = x[int_idx]
    frac = np.abs(vals - np.round(vals))
    if frac.max() <= INT_TOL:
        return None
    # distance from 0.5; argmin returns the lowest index among ties
    score = np.abs((vals - np.floor(vals)) - 0.5)
    score[frac <= INT_TOL] = np.inf
    return int(int_idx[int(np.argmin(score))])


def solve_mip(model: LinearModel, gap: float = 0.0, node_limit: int = 200_000) -> Solution:
    """Branch-and-bound over HiGHS LP relaxations.

    ``gap`` is the relative optimality tolerance; 0 means exact (up to
    1e-9 absolute on the objective). Raises :class:`NodeLimitError`
    carrying the incumbent when ``node_limit`` relaxations are exhausted.
    """
    model.validate()
    relax = _Relaxation(model)
    names = [v.name for v in model.variables]
    int_idx = np.array([k for k, v in enumerate(model.variables) if v.integer], dtype=int)

    root = relax.solve(relax.lb, relax.ub)
    if root.status != OPTIMAL:
        root.names = names
        return root

    incumbent: Solution | None = None
    counter = 0
    heap = [(root.objective_value, counter, relax.lb.copy(), relax.ub.copy(), root)]
    nodes = 0

    def prune_bound() -> float:
        if incumbent is None:
            return math.inf
        slack = max(1e-9, gap * abs(incumbent.objective_value))
        return incumbent.objective_value - slack

    while heap:
        bound, _, lb, ub, sol = heapq.heappop(heap)
        if bound >= prune_bound():
            continue
        branch = _most_fractional(sol.x, int_idx)
        if branch is None:
            x = sol.x.copy()
            x[int_idx] = np.round(x[int_idx])
            incumbent = Solution(OPTIMAL, x, model.evaluate(x), names=names)
            continue
        if nodes >= node_limit:
            if incumbent is not None:
                incumbent.nodes = nodes
            raise NodeLimitError(f"node limit {node_limit} reached", incumbent)
        nodes += 1
        val = sol.x[branch]
        for side in (0, 1):
            clb, cub = lb.copy(), ub.copy()
            if side == 0:
                cub[branch] = math.floor(val)
            else:
                clb[branch] = math.ceil(val)
            if clb[branch] > cub[branch]:
                continue
            child = relax.solve(clb, cub)
            if child.status == UNBOUNDED:
                return Solution(UNBOUNDED, names=names, nodes=nodes)
            if child.status != OPTIMAL or child.objective_value >= prune_bound():
                continue
            counter += 1
            heapq.heappush(heap, (child.objective_value, counter, clb, cub, child))

    if incumbent is None:
        return Solution(INFEASIBLE, names=names, nodes=nodes)
    incumbent.nodes = nodes
    log.debug("branch-and-bound on %s: %d nodes, objective %.9g", model.name, nodes,
              incumbent.objective_value)
    return incumbent


def solve(model: LinearModel, gap: float = 0.0) -> Solution:
    return solve_mip(model, gap) if model.has_integers else solve_lp(model)
