"""Command line entry point: ``erwlab <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backward import speed_report, stationary_distribution
from .coupling import decide_order
from .env import CookieEnvironment, classify, exact_drift
from .fields import TrialField, parse_seed
from .forward import NonConvergenceError, excursion_identity_oracle
from .harness import reports_json, run_suite
from .walk import excursion_stats, run_walk


def _env(text: str) -> CookieEnvironment:
    try:
        return CookieEnvironment.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _seed(text: str) -> int:
    try:
        return parse_seed(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def cmd_classify(args) -> int:
    r = classify(args.env)
    d = exact_drift(args.env)
    _emit({"probs": args.env.as_list(), "delta": float(d), "delta_exact": str(d),
           "transience": r.transience.value, "speed_sign": r.speed_sign.value})
    return 0


def cmd_speed(args) -> int:
    try:
        rep = speed_report(args.env, args.tol)
    except NonConvergenceError as exc:
        _emit({"error": str(exc), "bracket": list(exc.bracket) if exc.bracket else None})
        return 2
    _emit(rep.to_dict())
    return 0


def cmd_stationary(args) -> int:
    dist = stationary_distribution(args.env, args.tol, n_cap=args.n_cap)
    if args.csv:
        Path(args.csv).write_text(dist.to_csv())
    _emit({k: v for k, v in dist.to_dict().items() if k != "boundary_masses"})
    return 0


def cmd_couple(args) -> int:
    verdict = decide_order(args.p, args.q)
    if args.table:
        if verdict.table is None:
            sys.stderr.write("no dominating coupling exists; table not written\n")
        else:
            Path(args.table).write_text(verdict.table.to_csv())
    _emit(verdict.to_dict())
    return 0


def cmd_simulate(args) -> int:
    field = TrialField(args.env, args.seed)
    trace = run_walk(field, args.steps)
    if args.trace:
        Path(args.trace).write_text(trace.to_csv())
    ex = excursion_stats(trace)
    x = int(trace.positions[-1])
    _emit({"probs": args.env.as_list(), "seed": f"{args.seed:#x}", "steps": args.steps, "final_position": x,
           "velocity": x / args.steps, "first_return": ex.first_return,
           "max": int(trace.positions.max()), "min": int(trace.positions.min())})
    return 0


def cmd_oracle(args) -> int:
    _emit(excursion_identity_oracle(args.env, args.k).to_dict())
    return 0


def cmd_verify(args) -> int:
    reports = run_suite(args.suite, args.seed, args.episodes, with_runtime=args.runtime)
    text = reports_json(reports, with_runtime=args.runtime)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    ok = all(r.passed for r in reports)
    sys.stderr.write(f"{len(reports)} experiments, {'all passed' if ok else 'FAILURES'}\n")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="erwlab", description="Excited random walks in cookie environments.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="recurrence and speed regime from the total drift")
    p.add_argument("--env", type=_env, required=True, help='comma-separated strengths, e.g. "0.9,0.8"')
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("speed", help="limiting speed")
    p.add_argument("--env", type=_env, required=True)
    p.add_argument("--tol", type=float, default=1e-8, help="relative tolerance on the stationary mean")
    p.set_defaults(func=cmd_speed)

    p = sub.add_parser("stationary", help="invariant law of the backward chain")
    p.add_argument("--env", type=_env, required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--n-cap", type=int, default=4096)
    p.add_argument("--csv", help="write (state, mass) rows here")
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser("couple", help="decide the coupling order of two environments")
    p.add_argument("--p", type=_env, required=True)
    p.add_argument("--q", type=_env, required=True)
    p.add_argument("--table", help="write the coupling table as CSV")
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("simulate", help="run one walk")
    p.add_argument("--env", type=_env, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=_seed, default=0, help="decimal or 0x-hex")
    p.add_argument("--trace", help="write (step, position) rows here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="return-time law against total progeny by enumeration")
    p.add_argument("--env", type=_env, required=True)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("verify", help="run a named experiment suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--episodes", type=int, default=None, help="override every experiment's episode count")
    p.add_argument("--out", help="JSON report path (stdout if omitted)")
    p.add_argument("--runtime", action="store_true", help="include wall-clock times (breaks byte reproducibility)")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
