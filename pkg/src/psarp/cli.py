"""Command line entry point: ``psarp solve | sweep | check``."""

import argparse
import json
import logging
import sys

from .checks import SUITES, run_suite
from .driver import solve, write_trace
from .errors import PsarpError, SolveFailure
from .harness import build_instance, run_sweep
from .models import H_MODELS

_log = logging.getLogger("psarp")


def _config(args, instance):
    kw = {"p": args.p, "h_model": args.h_model, "max_outer": args.max_outer,
          "allow_general_set": args.allow_general_set}
    if getattr(args, "eps", None) is not None:
        kw["eps"] = args.eps
    kw = {k: v for k, v in kw.items() if v is not None}
    return instance.config(**kw)


def _add_solver_args(sp):
    sp.add_argument("--problem", required=True,
                    help="problem file (psarp-problem/1 JSON) or generator spec, e.g. 'lq-regression n=20 seed=7'")
    sp.add_argument("--p", type=int, default=None, help="model degree (default 3)")
    sp.add_argument("--h-model", choices=H_MODELS, default=None, help="model of the |U_i x|^q terms")
    sp.add_argument("--max-outer", type=int, default=None)
    sp.add_argument("--allow-general-set", action="store_true",
                    help="run two-sided models on a set that is not kernel-centered (weaker guarantees)")
    sp.add_argument("--seed", type=int, default=None, help="generator seed (PSARP_SEED takes precedence)")


def cmd_solve(args):
    inst = build_instance(args.problem, seed=args.seed)
    cfg = _config(args, inst)
    try:
        res = solve(inst.problem, cfg)
    except SolveFailure as exc:
        if args.out:
            write_trace(exc.trace, args.out)
        raise
    if args.out:
        write_trace(res.trace, args.out)
    summary = {"problem": inst.name, "digest": inst.digest, "status": res.status, "eps": cfg.eps, "p": cfg.p,
               "h_model": cfg.h_model, "successful_iterations": res.successful_iterations,
               "iterations": res.total_iterations, "final_chi": res.final_chi, "final_f": res.final_f,
               "ledger": res.ledger.snapshot(cfg.p), "x": res.x.tolist()}
    print(json.dumps(summary, indent=1))
    return 0 if res.terminated else 1


def cmd_sweep(args):
    inst = build_instance(args.problem, seed=args.seed)
    cfg = _config(args, inst)
    report = run_sweep(inst, args.eps_list, cfg)
    text = report.to_csv()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    slope = "null" if report.slope is None else f"{report.slope:.6f}"
    print(f"# slope(log succ_iters vs log 1/eps) = {slope}; ledger/trace consistent = {report.consistent}",
          file=sys.stderr)
    return 0 if all(pt.status == "terminated" for pt in report.points) else 1


def cmd_check(args):
    ok = True
    for res in run_suite(args.suite):
        print(res.line())
        ok &= res.passed
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="psarp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve one problem and write its trace")
    _add_solver_args(sp)
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--out", help="JSON-lines trace file")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("sweep", help="solve for several eps and report evaluation counts")
    _add_solver_args(sp)
    sp.add_argument("--eps-list", type=float, nargs="+", required=True)
    sp.add_argument("--out", help="CSV report (stdout if omitted)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("check", help="run a randomized self-check suite")
    sp.add_argument("--suite", choices=sorted(SUITES), required=True)
    sp.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PsarpError as exc:
        print(f"psarp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
