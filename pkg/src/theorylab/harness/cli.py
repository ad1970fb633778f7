"""Command-line front end.

    theorylab <experiment> [--env NAME [--param K=V ...]] [--grid KEY=V1,V2,...]
              [--seeds N] [--sigma2 LIST] [--eps LIST] [--seed BASE]
              [--out DIR] [--formats csv,svg] [--slack X]
    theorylab bench [--steps N]

Exit status: 0 when every asserted check passes, 2 when at least one fails,
1 on any other error (bad arguments, environment problems, IO).  Each run
writes ``verdict.json`` with per-check values next to the CSV/SVG artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Sequence

from .bench import run_bench
from .emit import emit
from .envs import ENV_NAMES
from .experiments import EXPERIMENTS, ExperimentSpec, run_experiment

__all__ = ["main"]

_PASS_FAIL = {True: "PASS", False: "FAIL"}


class _Parser(argparse.ArgumentParser):
    """Usage problems are errors (exit 1); exit 2 is reserved for runs whose
    asserted checks fail."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_pair(text: str, flag: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key or not value:
        raise ValueError(f"{flag} expects KEY=VALUE, got {text!r}")
    return key, value


def _parse_floats(text: str, flag: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v != "")
    except ValueError as exc:
        raise ValueError(f"{flag} expects a comma list of numbers, got {text!r}") from exc
    if not values:
        raise ValueError(f"{flag} got an empty list")
    return values


def _build_parser() -> _Parser:
    parser = _Parser(prog="theorylab", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    for name, fn in sorted(EXPERIMENTS.items()):
        doc = (fn.__doc__ or "").strip().splitlines()[0]
        p = sub.add_parser(name, help=doc, description=doc)
        p.add_argument("--env", default=None,
                       help=f"environment: one of {', '.join(ENV_NAMES)} or file:PATH "
                            "(default: the experiment's reference environments)")
        p.add_argument("--param", action="append", default=[], metavar="K=V",
                       help="environment parameter, repeatable (e.g. length=8)")
        p.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                       help="override a swept grid, repeatable (e.g. T=100,1000)")
        p.add_argument("--seeds", type=int, default=None,
                       help="number of seeds (default: experiment-specific)")
        p.add_argument("--sigma2", default=None, metavar="LIST",
                       help="noise-variance grid as a comma list")
        p.add_argument("--eps", default=None, metavar="LIST",
                       help="accuracy-target grid as a comma list")
        p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
        p.add_argument("--out", default=None,
                       help="output directory (default out/<experiment>)")
        p.add_argument("--formats", default="csv",
                       help="comma subset of csv,svg (default csv)")
        p.add_argument("--slack", type=float, default=0.25,
                       help="multiplicative slack on first-order bounds (default 0.25)")
        if name == "noise_drift":
            p.add_argument("--retrain", action="store_true",
                           help="retrain per noise realization instead of using the "
                                "closed-form converged law (reported, not asserted)")

    b = sub.add_parser("bench", help="time the training kernels and verify they agree",
                       description="Time every available training-loop kernel on "
                                   "reference cells and verify bitwise agreement.")
    b.add_argument("--steps", type=int, default=20_000,
                   help="training steps per cell (default 20000)")
    return parser


def _run_bench(args) -> int:
    results = run_bench(steps=args.steps)
    width = max(len(r.cell) for r in results)
    ok = True
    for r in results:
        ok = ok and r.identical
        print(f"{r.cell:<{width}}  {r.impl:<8}  {r.steps:>8} steps  "
              f"{r.seconds:8.3f} s  {r.steps_per_sec:12.0f} steps/s  "
              f"{'identical' if r.identical else 'MISMATCH'}")
    if not ok:
        print("kernel outputs disagree", file=sys.stderr)
        return 1
    return 0


def _run_experiment(args) -> int:
    formats = tuple(f for f in args.formats.split(",") if f)
    unknown = set(formats) - {"csv", "svg"}
    if unknown:
        raise ValueError(f"unknown formats: {sorted(unknown)}")
    out_dir = args.out if args.out is not None else os.path.join("out", args.command)

    spec = ExperimentSpec(
        experiment=args.command,
        env=args.env,
        env_params=dict(_parse_pair(p, "--param") for p in args.param),
        grid={k: v for k, v in (
            (_parse_pair(g, "--grid")[0], _parse_floats(_parse_pair(g, "--grid")[1], "--grid"))
            for g in args.grid)},
        seeds=args.seeds,
        sigma2=_parse_floats(args.sigma2, "--sigma2") if args.sigma2 else None,
        eps=_parse_floats(args.eps, "--eps") if args.eps else None,
        seed=args.seed,
        slack=args.slack,
        retrain=getattr(args, "retrain", False),
    )
    summary = run_experiment(spec)
    paths = emit(summary, out_dir, formats=formats)

    for c in summary.checks:
        if c.direction == "info":
            print(f"[info] {c.name}: {c.value:.6g}  {c.detail}")
        else:
            print(f"[{_PASS_FAIL[c.passed]}] {c.name}: {c.value:.6g} {c.direction} "
                  f"{c.threshold:.6g}  {c.detail}")
    if summary.censored:
        print(f"censored runs: {summary.censored}")
    for note in summary.notes:
        print(f"note: {note}")
    print(f"wrote {len(paths)} files to {out_dir}")
    return 0 if summary.passed else 2


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "bench":
        return _run_bench(args)
    try:
        return _run_experiment(args)
    except BrokenPipeError:
        raise
    except Exception as exc:  # surfaced as exit 1 with a verdict stub when possible
        print(f"theorylab {args.command}: error: {exc}", file=sys.stderr)
        out_dir = args.out if args.out is not None else os.path.join("out", args.command)
        try:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "verdict.json"), "w", encoding="utf-8") as fh:
                json.dump({"experiment": args.command, "passed": False,
                           "error": str(exc)}, fh, indent=2)
                fh.write("\n")
        except OSError:
            pass
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
