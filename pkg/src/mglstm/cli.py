"""Command-line driver.

    mglstm <subcommand> [--config PATH] [--preset desk|paper|tiny] [--out DIR] [--sigma V]

Subcommands: generate, train, evaluate, alpha, sweep, impulse, report, run (all stages).
``alpha`` and ``evaluate`` also take ``--model`` and ``--input`` to work on one
model and one dataset CSV outside an experiment directory.

On failure the last line on stderr is ``error: <ErrorClass>: <message>`` and the
exit code is 2.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import diagnostics as dg
from .errors import MglstmError, MissingArtifactError
from .lstm_core import load_model
from .mg_dynamics import load_series
from .pipeline import STAGES, Experiment, alpha_for, build_config, sigma_tag


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mglstm", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("run",):
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI-style config file")
        p.add_argument("--preset", default="desk", help="desk (default), paper or tiny")
        p.add_argument("--out", help="experiment directory (overrides the config)")
        p.add_argument("--sigma", type=float, action="append",
                       help="restrict to this noise level (repeatable)")
        p.add_argument("--force", action="store_true", help="rerun even if up to date")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("alpha", "evaluate"):
            p.add_argument("--model", help="model directory or model.txt")
            p.add_argument("--input", help="dataset CSV (t,mu,y)")
    return parser


def _standalone(args) -> int:
    if not (args.model and args.input):
        raise MissingArtifactError("--model and --input must be given together")
    model = load_model(args.model)
    series = load_series(args.input)
    if args.command == "alpha":
        res = alpha_for(model, series.values, series.source.values)
        print("sigma,alpha,ratio")
        print(f"{sigma_tag(model.train_sigma)},{res.alpha:.17g},{res.ratio:.17g}")
    else:
        run = dg.sequential_predict(model, series.values, series.source.values, nu=series.nu)
        print("sigma,e_mu")
        print(f"{sigma_tag(model.train_sigma)},{dg.run_nrmse(run, series.nu):.17g}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "model", None) or getattr(args, "input", None):
            return _standalone(args)
        overrides = {}
        if args.out:
            overrides["output_dir"] = args.out
        if args.sigma:
            overrides["sigmas"] = tuple(sorted(args.sigma))
        cfg = build_config(args.preset, args.config, **overrides)
        exp = Experiment(cfg)
        stages = STAGES if args.command == "run" else (args.command,)
        for stage in stages:
            ran = exp.run_stage(stage, force=args.force)
            print(f"{stage}: {'done' if ran else 'up to date'}")
        if args.command in ("report", "run"):
            print(exp.result_path("report.md"))
    except MglstmError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
