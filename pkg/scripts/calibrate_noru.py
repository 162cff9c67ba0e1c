"""Solve for outcome-weight rows that reproduce the target dispatch table.

Each intermediate location carries one scenario row. Location weights are
diagonal (the storm position at t is known), so every row must hit one
(expected closing, expected unmet) target as a convex combination of the
outcome points. Among feasible rows we take the one that maximizes the
smallest weight, which keeps every outcome plausible.

Run:  python3 scripts/calibrate_noru.py
"""

import numpy as np
from scipy.optimize import linprog

# outcome -> (closing hrs, unmet %)
POINTS = {"o1": (60.0, 0.0), "o2": (70.0, 60.0), "o3": (80.0, 20.0), "o4": (120.0, 50.0), "o5": (140.0, 20.0)}
TARGETS = {49: (106.0, 29.0), 37: (98.0, 28.0), 25: (75.0, 20.0), 13: (71.0, 15.0), 1: (66.0, 9.0)}
FAVOURED = {25: "o3"}  # most likely outcome at that dispatch time
MARGIN = 0.01


def solve_row(target, favoured=None):
    outs = list(POINTS)
    n = len(outs)
    # variables: p_1..p_n, m ; maximize m
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_eq = [np.r_[np.ones(n), 0.0],
            np.r_[[POINTS[o][0] for o in outs], 0.0],
            np.r_[[POINTS[o][1] for o in outs], 0.0]]
    b_eq = [1.0, target[0], target[1]]
    A_ub, b_ub = [], []
    for i in range(n):
        row = np.zeros(n + 1)
        row[i], row[-1] = -1.0, 1.0  # m <= p_i
        A_ub.append(row)
        b_ub.append(0.0)
    if favoured:
        f = outs.index(favoured)
        for i in range(n):
            if i != f:
                row = np.zeros(n + 1)
                row[i], row[f] = 1.0, -1.0  # p_i + margin <= p_f
                A_ub.append(row)
                b_ub.append(-MARGIN)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, 1)] * n + [(None, None)], method="highs")
    if res.status != 0:
        raise SystemExit(f"target {target} infeasible: {res.message}")
    p = np.clip(res.x[:n], 0.0, None)
    # absorb rounding into the largest weight so the row sums to 1 exactly in floating point
    p[np.argmax(p)] += 1.0 - p.sum()
    return dict(zip(outs, p.tolist()))


def main():
    print("OUTCOME_ROWS = {")
    for t, target in TARGETS.items():
        row = solve_row(target, FAVOURED.get(t))
        e = sum(row[o] * POINTS[o][0] for o in row)
        d = sum(row[o] * POINTS[o][1] for o in row)
        print(f"    {t}: {row!r},  # e={e:.9f} d={d:.9f}")
    print("}")


if __name__ == "__main__":
    main()
