"""Command line entry point: ``ttplan plan`` and ``ttplan sweep``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corridor import BodyPointSet, body_offsets_batch
from .errors import PlannerError
from .objectives import ObjectiveKind
from .plotting import atomic_write, emit_plots
from .qp import dump_problem
from .scenario import FIXTURES, Scenario, load_fixture, load_scenario_file
from .sqp import PlanResult, _Problem, build_qp, initialize_trajectory, k_sweep, make_config, plan
from .vehicle import trailer_states

log = logging.getLogger("ttplan")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _fmt(v):
    return float(f"{v:.9g}")


@dataclass
class ResultBundle:
    scenario: Scenario
    result: PlanResult
    table: np.ndarray  # (N+1, 8)

    COLUMNS = ("s", "e_y", "e_psi", "beta1", "kappa", "e_y_tra", "body_max", "body_min")


def make_bundle(scenario: Scenario, result: PlanResult) -> ResultBundle:
    tr = result.trajectory
    pts = BodyPointSet.from_params(scenario.vehicle)
    _, et, _ = trailer_states(scenario.vehicle, scenario.path, tr.s, tr.Z)
    _, offs = body_offsets_batch(scenario.vehicle, scenario.path, pts, tr.s, tr.Z)
    kap = np.r_[tr.kappa, np.nan]
    table = np.column_stack([tr.s, tr.Z, kap, et, offs.max(axis=1), offs.min(axis=1)])
    return ResultBundle(scenario, result, table)


def bundle_json(b: ResultBundle) -> str:
    r = b.result
    m = r.metrics
    doc = {
        "scenario": b.scenario.name,
        "objective": {"kind": int(r.objective.kind), "K": r.objective.K,
                      "smooth_weight": r.objective.smooth_weight},
        "converged": bool(r.converged),
        "sqp_iterations": r.sqp_iterations,
        "wall_time_s": _fmt(r.wall_time),
        "metrics": {k: _fmt(v) for k, v in m.to_dict().items()},
        "max_slack_m": _fmt(float(np.max(r.trajectory.slack))),
        "history": [{"iteration": h.iteration, "objective": _fmt(h.objective), "merit": _fmt(h.merit),
                     "step_z": _fmt(h.step_z), "step_kappa": _fmt(h.step_kappa),
                     "qp_status": h.qp_status, "qp_iterations": h.qp_iterations,
                     "shrinks": h.shrinks} for h in r.history],
        "stations": len(r.trajectory.s),
    }
    return json.dumps(doc, indent=2) + "\n"


def bundle_csv(b: ResultBundle) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(b.COLUMNS)
    for row in b.table:
        w.writerow(["" if np.isnan(v) else f"{v:.9g}" for v in row])
    return buf.getvalue()


def _load(spec: str) -> Scenario:
    if not Path(spec).exists() and spec in FIXTURES:
        return load_fixture(spec)
    return load_scenario_file(spec)


def _build_parser() -> _Parser:
    p = _Parser(prog="ttplan", description="Tractor-trailer path planning in road-aligned coordinates.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    pp = sub.add_parser("plan", help="plan one scenario and write results")
    pp.add_argument("--scenario", required=True,
                    help=f"scenario file, or one of the shipped fixtures: {', '.join(FIXTURES)}")
    pp.add_argument("--objective", type=int, choices=range(1, 6))
    pp.add_argument("--K", type=float)
    pp.add_argument("--ds", type=float)
    pp.add_argument("--out", default="results")
    pp.add_argument("--verbose", action="store_true")
    pp.add_argument("--dump-qp", action="store_true", help="also write the first QP subproblem")
    pp.add_argument("--seedless", action="store_true", help=argparse.SUPPRESS)

    sw = sub.add_parser("sweep", help="search the blend weight K over U-turn scenarios")
    sw.add_argument("--scenario", action="append", required=True)
    sw.add_argument("--K", type=float, nargs="+", default=[0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6])
    sw.add_argument("--ds", type=float)
    sw.add_argument("--out")
    sw.add_argument("--verbose", action="store_true")
    return p


def _cmd_plan(a) -> int:
    if a.seedless:
        raise _UsageError("ttplan: error: --seedless is reserved; planning involves no randomness")
    sc = _load(a.scenario)
    if a.objective is not None or a.K is not None:
        sc = sc.with_objective(a.objective, a.K)
    if a.ds is not None:
        sc = sc.with_planner(ds=a.ds, horizon=round(sc.horizon / a.ds) * a.ds)
    if sc.objective.kind == ObjectiveKind.SWEPT_SIDES:
        print("ttplan: warning: objective 5 constrains every body point and is expected to run "
              "much longer than objectives 1-4", file=sys.stderr)
    cfg = make_config(sc)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    if a.dump_qp:
        prob = _Problem(sc, cfg)
        init = initialize_trajectory(sc, cfg)
        init.Z = prob.rollout(init.kappa)
        dump_problem(build_qp(prob, init), out / "qp_iter1.txt")
    res = plan(sc, cfg)
    b = make_bundle(sc, res)
    atomic_write(out / "result.json", bundle_json(b).encode())
    atomic_write(out / "trajectory.csv", bundle_csv(b).encode())
    emit_plots(sc, res, out)
    m = res.metrics
    print(f"{sc.name}: objective {int(sc.objective.kind)} converged={res.converged} "
          f"iterations={res.sqp_iterations} time={res.wall_time:.2f}s")
    print(f"  max_left={m.max_left:.3f} m  max_right={m.max_right:.3f} m "
          f"(|{abs(m.max_right):.3f}| m)  a_L-a_R={m.area_diff:.2f} m^2")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _cmd_sweep(a) -> int:
    scs = [_load(s) for s in a.scenario]
    over = {"ds": a.ds} if a.ds else {}
    if a.ds:
        scs = [s.with_planner(ds=a.ds, horizon=round(s.horizon / a.ds) * a.ds) for s in scs]

    def report(K, sc, v):
        print(f"  K={K:.3f} {sc.name}: " + ("failed" if v is None else f"a_L-a_R={v:.2f} m^2"))

    best, table = k_sweep(scs, a.K, over, callback=report)
    print(f"best K = {best:g}")
    if a.out:
        out = Path(a.out)
        out.mkdir(parents=True, exist_ok=True)
        doc = {"best_K": best, "scenarios": [s.name for s in scs],
               "table": {f"{k:g}": [None if v is None else _fmt(v) for v in vals]
                         for k, vals in table.items()}}
        atomic_write(out / "sweep.json", (json.dumps(doc, indent=2) + "\n").encode())
    return EXIT_OK


def run_cli(argv=None) -> int:
    """Run the command line; returns the process exit code."""
    try:
        a = _build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return _cmd_plan(a) if a.command == "plan" else _cmd_sweep(a)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except (PlannerError, OSError) as exc:
        print(f"ttplan: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main():  # pragma: no cover
    sys.exit(run_cli())


if __name__ == "__main__":  # pragma: no cover
    main()
