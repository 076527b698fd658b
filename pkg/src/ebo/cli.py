"""Command-line interface.

Subcommands
-----------
``run``            optimize a JSON-configured objective; writes ``record.json``,
                   ``regret.csv`` and ``timings.json`` into the output directory.
``demo-variance``  write posterior-comparison CSVs for the 1-D variance
                   starvation demonstration.
``bench``          run one of the reproducible benchmark suites.

Exit codes: 0 success, 1 benchmark thresholds not met, 2 invalid
configuration or usage, 3 objective failure mid-run (a partial record is
still written).  The output directory defaults to ``--out``, then the
``EBO_OUT_DIR`` environment variable, then the current directory.
"""

from __future__ import annotations

import argparse
import json
import os
import pathlib
import sys

from .core import RngStream
from .driver import ConfigError, RunConfig, execute

__all__ = ["main", "build_parser"]


def _out_dir(arg: str | None) -> pathlib.Path:
    path = pathlib.Path(arg or os.environ.get("EBO_OUT_DIR") or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ebo",
        description="Ensemble Bayesian optimization with additive tile models.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="optimize an objective from a JSON config")
    run_p.add_argument("--config", required=True, help="path to the JSON run config")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument(
        "--workers",
        type=int,
        default=None,
        help="worker threads (results are identical for any value)",
    )

    demo_p = sub.add_parser(
        "demo-variance",
        help="compare feature-based and exact GP posteriors on a 1-D task",
    )
    demo_p.add_argument(
        "--n-obs",
        type=int,
        action="append",
        default=None,
        help="observation count; repeat the flag for several sizes "
        "(default: 100 and 5000)",
    )
    demo_p.add_argument("--n-features", type=int, default=1000)
    demo_p.add_argument("--seed", type=int, default=0)
    demo_p.add_argument("--out", default=None, help="output directory")

    bench_p = sub.add_parser("bench", help="run a reproducible benchmark suite")
    bench_p.add_argument("suite", help="suite name (see --list)", nargs="?")
    bench_p.add_argument("--list", action="store_true", help="list available suites")
    bench_p.add_argument("--seeds", type=int, default=None, help="override seed count")
    bench_p.add_argument("--workers", type=int, default=None)
    bench_p.add_argument("--out", default=None, help="output directory")
    return p


def cmd_run(args) -> int:
    try:
        text = pathlib.Path(args.config).read_text()
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return 2
    try:
        cfg = RunConfig.from_json(text)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    out = _out_dir(args.out)
    try:
        rec = execute(cfg, workers=args.workers)
    except ConfigError as e:
        # Objective construction rejected the config; nothing was evaluated.
        print(f"error: {e}", file=sys.stderr)
        return 2
    (out / "record.json").write_text(rec.to_json() + "\n")
    rec.write_csv(out / "regret.csv")
    (out / "timings.json").write_text(
        json.dumps(rec.timings, sort_keys=True, separators=(",", ":")) + "\n"
    )
    best_x, best_y = rec.best
    if rec.aborted:
        print(f"error: {rec.error} (partial record written)", file=sys.stderr)
        return 3
    print(f"best value {best_y} at {None if best_x is None else best_x.tolist()}")
    print(f"outputs written to {out}")
    return 0


def cmd_demo_variance(args) -> int:
    from .benchmarks import variance_demo, write_variance_csv

    sizes = args.n_obs if args.n_obs else [100, 5000]
    if any(n < 0 for n in sizes):
        print("error: --n-obs must be non-negative", file=sys.stderr)
        return 2
    if args.n_features < 1:
        print("error: --n-features must be positive", file=sys.stderr)
        return 2
    out = _out_dir(args.out)
    for n in sizes:
        rng = RngStream(args.seed).child("variance-demo", n).generator()
        rows = variance_demo(n, args.n_features, rng)
        path = out / f"variance_{n}.csv"
        write_variance_csv(rows, path)
        print(f"wrote {path}")
    return 0


def cmd_bench(args) -> int:
    from .suites import SUITES, run_suite

    if args.list:
        for name in sorted(SUITES):
            print(name)
        return 0
    if args.suite is None or args.suite not in SUITES:
        known = ", ".join(sorted(SUITES))
        print(f"error: unknown suite {args.suite!r}; known suites: {known}", file=sys.stderr)
        return 2
    out = _out_dir(args.out)
    summary = run_suite(args.suite, out, seeds=args.seeds, workers=args.workers)
    for check in summary["checks"]:
        tag = "PASS" if check["passed"] else "FAIL"
        print(f"[{tag}] {check['name']} (value={check['value']}, threshold={check['threshold']})")
    (out / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, separators=(",", ":"), default=str) + "\n"
    )
    print(f"outputs written to {out}")
    return 0 if summary["passed"] else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "demo-variance":
        return cmd_demo_variance(args)
    return cmd_bench(args)


if __name__ == "__main__":
    raise SystemExit(main())
