"""Baseline vs robust last-mile plans on the noru-like road network.

Prints concentration metrics, the delivery curves side by side and,
with --sweep, the price of robustness over a range of exposure weights.

Run:  python3 scripts/robust_noru.py [--theta 200] [--iters 3] [--sweep]
"""

import argparse

from stormstage import fixtures
from stormstage.blue_plan import curve_value, delivery_curve, problem_from_dict
from stormstage.robust_loop import LoopConfig, compare_plans, run_loop


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--theta", type=float, default=200.0)
    ap.add_argument("--iters", type=int, default=3)
    ap.add_argument("--outcome", default="o3")
    ap.add_argument("--sweep", action="store_true")
    args = ap.parse_args()

    problem = problem_from_dict(fixtures.noru_like()["last_mile"], args.outcome)
    res = run_loop(problem, LoopConfig(theta=args.theta, iterations=args.iters))
    cmp = compare_plans(res.baseline, res.final, problem.corridors)
    print(f"{'metric':<18} {'baseline':>9} {'robust':>9} {'change':>7}")
    for name, row in cmp["metrics"].items():
        print(f"{name:<18} {row['baseline']:>9g} {row['robust']:>9g} {row['change_pct']:>6d}%")
    print(f"price of robustness {cmp['price_of_robustness']:g}; t90 {cmp['t90']['baseline']} -> "
          f"{cmp['t90']['robust']} min")

    a, b = delivery_curve(res.baseline), delivery_curve(res.final)
    print(f"\n{'minute':>6} {'baseline':>9} {'robust':>9}")
    for m in sorted({m for m, _ in a + b}):
        print(f"{m:>6g} {curve_value(a, m):>9.3f} {curve_value(b, m):>9.3f}")

    if args.sweep:
        print(f"\n{'theta':>6} {'price':>8} {'peak':>5}")
        for theta in (0, 25, 50, 100, 200, 400):
            r = run_loop(problem, LoopConfig(theta=theta, iterations=args.iters))
            c = compare_plans(r.baseline, r.final, problem.corridors)
            print(f"{theta:>6g} {c['price_of_robustness']:>8g} {c['metrics']['peak']['robust']:>5g}")


if __name__ == "__main__":
    main()
