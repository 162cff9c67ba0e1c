"""Print the dispatch-time table and Pareto flags for the noru-like fixture.

Run:  python3 scripts/dispatch_table.py
"""

from stormstage import fixtures
from stormstage.data_model import instance_from_dict
from stormstage.dispatch_timing import pareto_points, select_dispatch
from stormstage.prestage import solve_prestage
from stormstage.scenario_eval import dispatch_expectations, evaluate_grid, location_expectations


def main():
    inst = instance_from_dict(fixtures.noru_like())
    plan = solve_prestage(inst)
    tree = inst.forecast_tree
    de = dispatch_expectations(location_expectations(evaluate_grid(plan, inst), tree), tree)
    dec = select_dispatch(de, inst.supply_types)
    for sup in inst.supply_types:
        k = sup.id
        print(f"\n{k} (lead {sup.lead_time:g} h, buffer {sup.delay_buffer:g} h)")
        print(f"{'t':>4} {'closing':>8} {'late':>5} {'unmet%':>7} {'penalty':>8} {'score':>7}  pareto")
        for (t, r), p in zip(dec.rows_for(k), pareto_points(dec, k)):
            mark = "*" if t == dec.chosen_time[k] else " "
            print(f"{t:>4g} {r.exp_closing:>8.2f} {r.lateness:>5g} {r.unmet:>7.2f} {r.time_penalty:>8.2f} "
                  f"{r.composite:>7.2f}{mark} {'dominated' if p.dominated else 'front'}")


if __name__ == "__main__":
    main()
