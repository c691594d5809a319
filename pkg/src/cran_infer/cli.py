"""Command line: ``cran-infer run|summarize|trace``."""
from __future__ import annotations

import argparse
import logging
import sys

from .experiments import (SCHEMES, load_plan, read_results, run_plan, run_scheme, summarize,
                          trial_instance, write_summary)
from .sca import OptimizerError, write_trace


def _cmd_run(args) -> int:
    plan = load_plan(args.plan)
    cells = run_plan(plan, seed=args.seed, workers=args.workers, out=args.out, timing=not args.no_timing)
    failed = [c for c in cells if c.failed]
    print(f"{len(cells)} cells, {len(failed)} failed -> {args.out or plan.output}", file=sys.stderr)
    return 1 if failed else 0


def _cmd_summarize(args) -> int:
    write_summary(summarize(read_results(args.csv)))
    return 0


def _cmd_trace(args) -> int:
    plan = load_plan(args.plan)
    if not 0 <= args.trial < plan.n_trials:
        print(f"trial must be in 0..{plan.n_trials - 1}", file=sys.stderr)
        return 2
    value = plan.sweep_values[0] if args.value is None else args.value
    cfg = plan.config_at(value)
    inst = trial_instance(plan, args.seed, args.trial)
    try:
        _, state = run_scheme(args.scheme, cfg, inst, plan.eps_stop, plan.max_iters)
    except OptimizerError as exc:
        print(f"optimizer failed: {exc}", file=sys.stderr)
        state, code = exc.state, 1
    else:
        code = 0
    if args.out:
        write_trace(args.out, state.trace, args.scheme)
    else:
        write_trace(sys.stdout, state.trace, args.scheme)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cran-infer", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every cell of a sweep plan and write the result CSV")
    r.add_argument("plan")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--out", default=None, help="result CSV (default: the plan's output key)")
    r.add_argument("--no-timing", action="store_true", help="write wall_ms as 0 so reruns are byte-identical")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("summarize", help="mean and standard error per sweep value and scheme")
    s.add_argument("csv")
    s.set_defaults(func=_cmd_summarize)

    t = sub.add_parser("trace", help="per-half-iteration objective trace of one trial")
    t.add_argument("plan")
    t.add_argument("--trial", type=int, required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--scheme", choices=sorted(SCHEMES), default="proposed")
    t.add_argument("--value", type=float, default=None, help="sweep value to use (default: the first)")
    t.add_argument("--out", default=None)
    t.set_defaults(func=_cmd_trace)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
