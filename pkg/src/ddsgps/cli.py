"""Command-line runner: ``ddsgps run|verify|oracle``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import metrics, oracle, pushsum
from .config import RunConfig, load_config, with_overrides
from .errors import ConfigError, InfeasibleError, InvariantViolation, PushSumUnderflow

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_INFEASIBLE = 4


def _write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: RunConfig, *, workers: int | None = None,
                   config_path: str | None = None) -> tuple[int, dict]:
    """Solve the oracle, run the simulation, write the CSV and the summary JSON.

    Returns ``(exit_status, summary)``. The CSV is streamed row by row, so a
    run that trips an invariant still leaves the rounds before the failure on
    disk; the summary then carries ``status = "invariant-failure"``.
    """
    inst = cfg.build_problem()
    sched = cfg.build_schedule()
    step = cfg.build_stepsize()
    ref = oracle.solve(inst)

    mu0_arr = pushsum.initialize(inst, cfg.mu0_vectors()).mu
    norms = metrics.initial_dual_norms(mu0_arr)
    summary = {
        "config": config_path,
        "oracle": ref.summary(),
        "f_star": ref.f_star,
        "lambda_star": [float(v) for v in ref.lambda_star],
        "mu0_mean_l1": norms["mean_l1"],
        "mu0_mean_sq": norms["mean_sq"],
    }

    status = EXIT_OK
    last = None
    t0 = time.perf_counter()
    csv_path = Path(cfg.outputs.csv)
    with csv_path.open("w", newline="") as fh:
        writer = metrics.CsvWriter(fh)

        def on_record(rec):
            nonlocal last
            writer.write(rec)
            last = rec

        try:
            traj = pushsum.run(inst, sched, step, cfg.iterations, cfg.mu0_vectors(),
                               oracle=ref, tolerances=cfg.tolerances.as_dict() or None,
                               workers=workers, on_record=on_record)
            summary["status"] = "ok"
            summary["stopped_early"] = traj.stopped_early
        except (InvariantViolation, PushSumUnderflow) as exc:
            status = EXIT_INVARIANT
            summary["status"] = "invariant-failure"
            summary["error"] = str(exc)
    summary["wall_time"] = time.perf_counter() - t0
    summary["iterations"] = 0 if last is None else last.t
    if last is not None:
        summary["final_gap"] = last.objective_gap
        summary["final_violation"] = last.violation_norm
        summary["final_spread"] = last.consensus_spread
        summary["final_dual_distance"] = last.dual_distance
    _write_json(cfg.outputs.summary, summary)
    return status, summary


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    cfg = with_overrides(cfg, iterations=args.iterations, seed=args.seed, c=args.c, out=args.out)
    status, summary = run_experiment(cfg, workers=args.workers, config_path=str(args.config))
    if status != EXIT_OK:
        print(f"error: {summary.get('error')}", file=sys.stderr)
    else:
        print(f"{summary['iterations']} rounds in {summary['wall_time']:.2f}s; "
              f"gap {summary['final_gap']:.6g}, violation {summary['final_violation']:.6g}, "
              f"spread {summary['final_spread']:.3g}")
    return status


def _cmd_verify(args) -> int:
    with open(args.csv, newline="") as fh:
        rows = metrics.read_csv(fh)
    problems = metrics.verify_rows(rows, identity_tol=args.identity_tol)
    for p in problems:
        print(p)
    if problems:
        return EXIT_VERIFY_FAILED
    print(f"{len(rows)} rows ok")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    inst = cfg.build_problem()
    ref = oracle.solve(inst)
    payload = ref.summary()
    if args.cross_check:
        alt = oracle.solve_general_small(inst, step0=args.step0)
        payload["cross_check"] = alt.summary()
        payload["cross_check"]["f_star_rel_diff"] = (alt.f_star - ref.f_star) / max(1.0, abs(ref.f_star))
    payload["duality_gap"] = oracle.duality_gap(inst, ref)
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if ref.converged else EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddsgps", description="Dual sub-gradient push-sum simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a simulation from a TOML config")
    p.add_argument("config")
    p.add_argument("--iterations", type=int, help="override the iteration budget")
    p.add_argument("--seed", type=int, help="override the schedule seed")
    p.add_argument("--c", type=float, help="override the stepsize constant")
    p.add_argument("--out", help="override the CSV output path")
    p.add_argument("--workers", type=int, default=None, help="threads for the per-agent step")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="re-check the identity residuals of a CSV trace")
    p.add_argument("csv")
    p.add_argument("--identity-tol", type=float, default=metrics.IDENTITY_TOL)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("oracle", help="solve the centralised problem and print F*, lambda*")
    p.add_argument("config")
    p.add_argument("--out", help="also write the JSON here")
    p.add_argument("--cross-check", action="store_true", help="also run centralised dual ascent")
    p.add_argument("--step0", type=float, default=None)
    p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
