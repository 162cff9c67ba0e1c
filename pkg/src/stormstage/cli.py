"""stormstage command line.

Exit codes: 0 success, 1 infeasible, 2 input error, 3 internal error.
Set STORMSTAGE_LOG=DEBUG|INFO|WARNING for log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import fixtures
from .blue_plan import BlueInfeasibleError, LastMileProblem, RoutedPlan, StructuralInfeasibility, problem_from_dict
from .data_model import InstanceError, ProblemInstance, parse_instance
from .dispatch_timing import select_dispatch, supplies_from_perf, write_timing
from .prestage import InfeasiblePlanError, PrestagePlan, solve_prestage
from .robust_loop import LoopConfig, compare_plans, comparison_csv, concentration_report, run_loop, write_json
from .scenario_eval import (dispatch_expectations, dispatch_from_dict, evaluate_grid, location_expectations,
                            perf_to_dict, write_perf)

log = logging.getLogger("stormstage")

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
DEFAULT_THETA = 500.0


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage, self.cause = stage, cause


def _digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Manifest:
    def __init__(self, subcommand: str, args: argparse.Namespace):
        self.subcommand = subcommand
        cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "manifest")}
        self.config = cfg
        self.config_hash = hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()
        self.inputs: dict[str, str] = {}
        self.artifacts: list[str] = []
        self.stages: dict[str, float] = {}
        self.started = datetime.now(timezone.utc).isoformat()
        self.status = "running"

    def input(self, path: str | Path) -> Path:
        self.inputs[str(path)] = _digest(path)
        return Path(path)

    def artifact(self, path: str | Path) -> Path:
        self.artifacts.append(str(path))
        return Path(path)

    def stage(self, name: str):
        return _StageTimer(self, name)

    def write(self, path: str | Path) -> None:
        doc = {"subcommand": self.subcommand, "config": self.config, "config_hash": self.config_hash,
               "inputs": self.inputs, "artifacts": self.artifacts, "stages_seconds": self.stages,
               "status": self.status, "started_at": self.started}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


class _StageTimer:
    def __init__(self, manifest: Manifest, name: str):
        self.m, self.name = manifest, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        self.m.stages[self.name] = round(time.perf_counter() - self.t0, 6)
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def _load_instance(m: Manifest, path: str, normalize: bool = False) -> ProblemInstance:
    return parse_instance(m.input(path), normalize=normalize)


def _last_mile(inst: ProblemInstance, outcome: str | None) -> LastMileProblem:
    if inst.last_mile is None:
        raise InstanceError("instance has no last_mile block; robust planning needs a road network")
    return problem_from_dict(inst.last_mile, outcome)


def _loop_config(inst: ProblemInstance, args) -> LoopConfig:
    block = inst.last_mile or {}
    theta = args.theta if args.theta is not None else float(block.get("theta", DEFAULT_THETA))
    iters = args.iters if args.iters is not None else int(block.get("iterations", 3))
    return LoopConfig(theta=theta, iterations=iters, z_min=args.z_min, stop_rule=args.stop_rule)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), newline="")


def _parse_sweep(spec: str) -> list[float]:
    name, _, rng = spec.partition("=")
    if name != "theta" or rng.count(":") != 2:
        raise ValueError(f"sweep must look like theta=START:STOP:STEP, got {spec!r}")
    start, stop, step = (float(x) for x in rng.split(":"))
    if step <= 0 or stop < start:
        raise ValueError("sweep needs step > 0 and STOP >= START")
    n = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 9) for i in range(n)]


# ---------------------------------------------------------------- subcommands

def cmd_validate(args, m: Manifest) -> int:
    with m.stage("validate"):
        inst = _load_instance(m, args.instance, args.normalize)
        if inst.last_mile is not None:
            _last_mile(inst, inst.planning_outcome)
    print(f"{args.instance}: ok ({len(inst.locations)} locations, {len(inst.supply_types)} supply types)")
    return EXIT_OK


def cmd_prestage(args, m: Manifest) -> int:
    inst = _load_instance(m, args.instance, args.normalize)
    with m.stage("prestage"):
        plan = solve_prestage(inst, outcome=args.outcome)
    plan.write(m.artifact(args.out))
    return EXIT_OK


def _evaluate(inst: ProblemInstance, plan: PrestagePlan, jobs: int) -> dict:
    perf = evaluate_grid(plan, inst, jobs=jobs)
    locexp = location_expectations(perf, inst.forecast_tree)
    return perf_to_dict(inst, perf, locexp, dispatch_expectations(locexp, inst.forecast_tree))


def cmd_evaluate(args, m: Manifest) -> int:
    inst = _load_instance(m, args.instance, args.normalize)
    plan = PrestagePlan.from_dict(json.loads(m.input(args.plan).read_text()))
    with m.stage("evaluate"):
        doc = _evaluate(inst, plan, args.jobs)
    write_perf(m.artifact(args.out), doc)
    return EXIT_OK


def cmd_timing(args, m: Manifest) -> int:
    doc = json.loads(m.input(args.perf).read_text())
    with m.stage("timing"):
        decision = select_dispatch(dispatch_from_dict(doc), supplies_from_perf(doc), method=args.method)
    write_timing(decision, m.artifact(args.out))
    if args.csv:
        m.artifact(args.csv).write_text(decision.to_csv(), newline="")
    for k, t in sorted(decision.chosen_time.items()):
        print(f"{k}: dispatch at t={t:g}")
    return EXIT_OK


def _robust(inst: ProblemInstance, outcome: str | None, cfg: LoopConfig, m: Manifest, outdir: Path,
            names: dict[str, str]) -> dict:
    with m.stage("robust"):
        problem = _last_mile(inst, outcome)
        res = run_loop(problem, cfg)
    res.baseline.write(m.artifact(names["baseline"]))
    res.final.write(m.artifact(names["out"]))
    if names.get("trace"):
        m.artifact(names["trace"]).write_text(res.trace_jsonl())
    with m.stage("metrics"):
        cmp = compare_plans(res.baseline, res.final, problem.corridors)
        cmp["theta"] = cfg.theta
        cmp["outcome"] = outcome
        cmp["baseline_report"] = concentration_report(res.baseline, problem.corridors, problem.network).to_dict()
        cmp["robust_report"] = concentration_report(res.final, problem.corridors, problem.network).to_dict()
    if names.get("report"):
        m.artifact(names["report"]).write_text(comparison_csv(cmp), newline="")
    if names.get("metrics"):
        write_json(m.artifact(names["metrics"]), cmp)
    return cmp


def cmd_robust(args, m: Manifest) -> int:
    inst = _load_instance(m, args.instance, args.normalize)
    cfg = _loop_config(inst, args)
    out = Path(args.out)
    names = {"out": args.out, "baseline": args.baseline or str(out.with_name(out.stem + "_baseline.json")),
             "report": args.report, "trace": args.trace, "metrics": args.metrics}
    cmp = _robust(inst, args.outcome, cfg, m, out.parent, names)
    peak = cmp["metrics"]["peak"]
    print(f"peak link load {peak['baseline']:g} -> {peak['robust']:g} ({peak['change_pct']:+d}%), "
          f"price of robustness {cmp['price_of_robustness']:g}")
    return EXIT_OK


def cmd_metrics(args, m: Manifest) -> int:
    a = RoutedPlan.from_dict(json.loads(m.input(args.baseline).read_text()))
    b = RoutedPlan.from_dict(json.loads(m.input(args.plus).read_text()))
    corridors = {}
    if args.instance:
        inst = _load_instance(m, args.instance)
        corridors = _last_mile(inst, None).corridors if inst.last_mile else {}
    with m.stage("metrics"):
        cmp = compare_plans(a, b, corridors)
    write_json(m.artifact(args.out), cmp)
    if args.csv:
        m.artifact(args.csv).write_text(comparison_csv(cmp), newline="")
    return EXIT_OK


def _sweep_one(task):
    problem, theta, iters, z_min = task
    res = run_loop(problem, LoopConfig(theta=theta, iterations=iters, z_min=z_min))
    cmp = compare_plans(res.baseline, res.final, problem.corridors)
    return theta, cmp["price_of_robustness"], cmp["metrics"]["peak"]["robust"], res.final.delivered


def _sweep(problem: LastMileProblem, thetas: list[float], iters: int, z_min: float, jobs: int) -> list[tuple]:
    tasks = [(problem, th, iters, z_min) for th in thetas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_sweep_one, tasks))
    return [_sweep_one(t) for t in tasks]


def _write_frontier(path: Path, rows: list[tuple]) -> None:
    _write_csv(path, ["theta", "price_of_robustness", "peak_load", "delivered"],
               [[f"{th:g}", f"{por:.9g}", f"{peak:g}", f"{dl:g}"] for th, por, peak, dl in rows])


def cmd_sweep(args, m: Manifest) -> int:
    inst = _load_instance(m, args.instance, args.normalize)
    thetas = _parse_sweep(args.sweep)
    cfg = _loop_config(inst, argparse.Namespace(theta=0.0, iters=args.iters, z_min=args.z_min, stop_rule="fixed"))
    with m.stage("sweep"):
        rows = _sweep(_last_mile(inst, args.outcome), thetas, cfg.iterations, cfg.z_min, args.jobs)
    _write_frontier(m.artifact(args.out), rows)
    return EXIT_OK


def cmd_genfixture(args, m: Manifest) -> int:
    doc = fixtures.make(args.kind, args.seed)
    out = m.artifact(args.out)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_pipeline(args, m: Manifest) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with m.stage("load"):
        inst = _load_instance(m, args.instance, args.normalize)
    with m.stage("prestage"):
        plan = solve_prestage(inst)
        plan.write(m.artifact(outdir / "plan.json"))
    with m.stage("evaluate"):
        perf = _evaluate(inst, plan, args.jobs)
        write_perf(m.artifact(outdir / "perf.json"), perf)
    with m.stage("timing"):
        decision = select_dispatch(dispatch_from_dict(perf), supplies_from_perf(perf))
        write_timing(decision, m.artifact(outdir / "timing.json"))
        m.artifact(outdir / "timing.csv").write_text(decision.to_csv(), newline="")
    for k, t in sorted(decision.chosen_time.items()):
        print(f"{k}: dispatch at t={t:g}")
    if inst.last_mile is None or args.no_robust:
        return EXIT_OK
    outcome = args.robust_outcome
    if outcome is None:
        lead = inst.supply_types[0].id
        outcome = inst.forecast_tree.most_likely_outcome(decision.chosen_time[lead])
    log.info("robust planning on outcome %s", outcome)
    cfg = _loop_config(inst, args)
    names = {"out": outdir / "rplus.json", "baseline": outdir / "rminus.json", "trace": outdir / "trace.jsonl",
             "report": outdir / "report.csv", "metrics": outdir / "metrics.json"}
    cmp = _robust(inst, outcome, cfg, m, outdir, names)
    peak = cmp["metrics"]["peak"]
    print(f"robust ({outcome}): peak link load {peak['baseline']:g} -> {peak['robust']:g} "
          f"({peak['change_pct']:+d}%)")
    if args.sweep:
        with m.stage("sweep"):
            rows = _sweep(_last_mile(inst, outcome), _parse_sweep(args.sweep), cfg.iterations, cfg.z_min, args.jobs)
            _write_frontier(m.artifact(outdir / "frontier.csv"), rows)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_loop_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--theta", type=float, default=None, help="exposure weight (default: instance value or 500)")
    p.add_argument("--iters", type=int, default=None, help="loop iterations (default: instance value or 3)")
    p.add_argument("--z-min", type=float, default=0.05, help="heavy-link threshold on cost increase")
    p.add_argument("--stop-rule", choices=["fixed", "adaptive"], default="fixed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stormstage", description="Pre-staging, dispatch timing and robust routing.")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--manifest", help="where to write the run manifest (default: next to the outputs)")
        return p

    p = add("validate", cmd_validate, "check an instance file")
    p.add_argument("instance_pos", nargs="?", metavar="INSTANCE")
    p.add_argument("--instance")
    p.add_argument("--normalize", action="store_true")

    p = add("prestage", cmd_prestage, "solve the pre-staging LP")
    p.add_argument("--instance", required=True)
    p.add_argument("--outcome")
    p.add_argument("--out", required=True)
    p.add_argument("--normalize", action="store_true")

    p = add("evaluate", cmd_evaluate, "re-solve a plan across outcomes and fold expectations")
    p.add_argument("--instance", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--normalize", action="store_true")

    p = add("timing", cmd_timing, "choose a dispatch time per supply type")
    p.add_argument("--perf", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--method", choices=["enumerate", "linear"], default="enumerate")

    p = add("robust", cmd_robust, "run the Blue/Red loop on the last-mile network")
    p.add_argument("--instance", required=True)
    p.add_argument("--outcome")
    p.add_argument("--out", required=True)
    p.add_argument("--baseline")
    p.add_argument("--report")
    p.add_argument("--trace")
    p.add_argument("--metrics")
    p.add_argument("--normalize", action="store_true")
    _add_loop_flags(p)

    p = add("metrics", cmd_metrics, "compare a baseline and a robust plan")
    p.add_argument("--baseline", required=True)
    p.add_argument("--plus", required=True)
    p.add_argument("--instance")
    p.add_argument("--out", required=True)
    p.add_argument("--csv")

    p = add("sweep", cmd_sweep, "robust runs over a theta grid")
    p.add_argument("--instance", required=True)
    p.add_argument("--sweep", required=True, help="theta=START:STOP:STEP")
    p.add_argument("--outcome")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--z-min", type=float, default=0.05)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--normalize", action="store_true")

    p = add("genfixture", cmd_genfixture, "write a shipped fixture")
    p.add_argument("kind", help="noru-like, two-corridor, single-path, random or random(SEED)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("pipeline", cmd_pipeline, "prestage -> evaluate -> timing -> robust")
    p.add_argument("--instance", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--robust-outcome")
    p.add_argument("--no-robust", action="store_true")
    p.add_argument("--sweep", help="theta=START:STOP:STEP")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--normalize", action="store_true")
    _add_loop_flags(p)
    return ap


def _manifest_path(args) -> Path | None:
    if args.manifest:
        return Path(args.manifest)
    if getattr(args, "outdir", None):
        return Path(args.outdir) / "manifest.json"
    if getattr(args, "out", None):
        return Path(args.out).parent / "manifest.json"
    return None


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (InfeasiblePlanError, BlueInfeasibleError, StructuralInfeasibility)):
        return EXIT_INFEASIBLE
    if isinstance(exc, (InstanceError, FileNotFoundError, json.JSONDecodeError, ValueError, KeyError)):
        return EXIT_INPUT
    return EXIT_INTERNAL


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("STORMSTAGE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "validate":
        args.instance = args.instance or args.instance_pos
        if not args.instance:
            ap.error("validate needs an instance path")
    if args.command == "genfixture" and args.kind.startswith("random(") and args.kind.endswith(")"):
        args.seed, args.kind = int(args.kind[7:-1]), "random"
    m = Manifest(args.command, args)
    try:
        code = args.func(args, m)
        m.status = "ok"
    except StageError as exc:
        code = _exit_code(exc.cause)
        m.status = f"failed in {exc.stage}"
        where = f"{args.command} stage {exc.stage!r}" if args.command == "pipeline" else args.command
        print(f"stormstage: {where}: {type(exc.cause).__name__}: {exc.cause}", file=sys.stderr)
        log.debug("traceback", exc_info=exc.cause)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code
        code = _exit_code(exc)
        m.status = "failed"
        print(f"stormstage: {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=exc)
    path = _manifest_path(args)
    if path is not None and path.parent.exists():
        m.write(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
