"""Command line entry point: ``funcmean run | list-spaces | selftest``.

Exit codes: 0 success, 1 a row is ill-posed or could not be evaluated (or a
selftest criterion failed), 2 the configuration is invalid.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import fields

from . import __version__
from .config import ConfigError, parse_config
from .runner import emit_report, rows_failed, run_plan
from .spaces import SPACE_KINDS

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _nonnegative_seed(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="funcmean", description="Means of functionals on high-dimensional path spaces.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiments of a YAML config and emit a report")
    run.add_argument("config")
    run.add_argument("--out", help="write the report here instead of stdout")
    run.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    run.add_argument("--workers", type=_positive, default=1)
    run.add_argument("--seed", type=_nonnegative_seed, help="override every experiment seed")

    sub.add_parser("list-spaces", help="list the supported space kinds and their parameters")

    st = sub.add_parser("selftest", help="run the acceptance criteria")
    st.add_argument("--quick", action="store_true", help="use a tenth of the sample budget where tolerances scale with it")
    st.add_argument("--workers", type=_positive, default=1)
    st.add_argument("--seed", type=_nonnegative_seed, default=None)
    return p


def cmd_run(args) -> int:
    try:
        plans = parse_config(args.config)
    except ConfigError as e:
        print(f"funcmean: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    rows = run_plan(plans, workers=args.workers, seed=args.seed)
    data = emit_report(rows, args.format)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    for r in rows:
        if r.status == "ILL_POSED" or r.failed:
            print(f"funcmean: {r.experiment_id} n={r.n}: {r.status}", file=sys.stderr)
    return EXIT_FAILED if rows_failed(rows) else EXIT_OK


def cmd_list_spaces(args) -> int:
    for kind, cls in SPACE_KINDS.items():
        params = ", ".join(f.name for f in fields(cls)) or "-"
        doc = (cls.__doc__ or "").strip().splitlines()[0] if cls.__doc__ else ""
        print(f"{kind:<18s} {params:<28s} {doc}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .acceptance import DEFAULT_SEED, Context, run_all

    ctx = Context(seed=DEFAULT_SEED if args.seed is None else args.seed, quick=args.quick, workers=args.workers)
    start = time.perf_counter()
    results = run_all(ctx)
    elapsed = time.perf_counter() - start
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    print(f"elapsed {elapsed:.1f}s", file=sys.stderr)
    return EXIT_OK if passed == len(results) else EXIT_FAILED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "list-spaces": cmd_list_spaces, "selftest": cmd_selftest}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
