"""Command-line entry point: ``distreg {fit,shock,respond,simulate,density}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure,
1 anything unexpected. Failures also write ``error.json`` to the output
directory. Set ``DISTREG_LOG`` (e.g. ``DEBUG``) to control stderr logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import DistregError, NumericalError, ValidationError
from .estimator import KRule
from .fixtures import bundled_config
from .pipeline import (
    PipelineConfig,
    metadata,
    run_density,
    run_fit,
    run_respond,
    run_shock,
    run_simulate,
    write_outputs,
)
from .transforms import KINDS

EXIT_OK, EXIT_UNEXPECTED, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3
COMMANDS = ("fit", "shock", "respond", "simulate", "density")

log = logging.getLogger("distreg")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="pipeline configuration JSON")
    src.add_argument("--bundled", action="store_true", help="use the bundled synthetic data set")
    common.add_argument("--out", type=Path, help="output directory (default: the config's 'output')")
    common.add_argument("--seed", type=int, help="simulation seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads or processes")
    common.add_argument("--kappa", type=int, help="instrument lag (0 gives the least-squares fit)")
    common.add_argument("--transform", choices=KINDS, help="predictor transform")
    common.add_argument("--k-rule", dest="k_rule", help="'scaled', 'alternative' or 'fixed:N'")

    p = argparse.ArgumentParser(prog="distreg", description="Scalar-on-distribution regression pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    fit = sub.add_parser("fit", parents=[common], help="fit the model and write model_kappa*.json")
    fit.add_argument("--both-kappas", action="store_true", help="also fit the least-squares model")
    for name, text in (("shock", "evaluate configured distribution shocks"), ("respond", "benchmark response curve")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--model", type=Path, help="reuse a saved model instead of refitting")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo bias and coverage study")
    sub.add_parser("density", parents=[common], help="write monthly densities and their moments")
    return p


def load_config(args) -> tuple:
    path = bundled_config() if args.bundled or args.config is None else args.config
    if not Path(path).is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cfg = PipelineConfig.load(path)
    overrides = {"kappa": args.kappa, "transform": args.transform}
    if args.k_rule is not None:
        overrides["k_rule"] = KRule.parse(args.k_rule)
    if getattr(args, "both_kappas", False):
        overrides["both_kappas"] = True
    if args.out is not None:
        overrides["output"] = args.out
    elif Path(path) == bundled_config():
        overrides["output"] = Path("out")  # never write into the installed package
    return cfg.with_overrides(**overrides), path


def execute(args) -> dict:
    cfg, path = load_config(args)
    threads = max(1, int(args.threads))
    if args.command == "fit":
        files = run_fit(cfg, threads)
    elif args.command == "shock":
        files = run_shock(cfg, threads, args.model)
    elif args.command == "respond":
        files = run_respond(cfg, threads, args.model)
    elif args.command == "simulate":
        files = run_simulate(cfg, args.seed, threads)
    else:
        files = run_density(cfg, threads)
    written = write_outputs(cfg.output, files)
    write_outputs(cfg.output, {f"metadata_{args.command}.json": metadata(args.command, path, {"files": written})})
    for name in written:
        print(Path(cfg.output) / name)
    return files


def _error_dir(args) -> Path:
    if args.out is not None:
        return args.out
    if args.bundled or args.config is None:
        return Path("out")
    try:
        path = args.config
        raw = json.loads(Path(path).read_text())
        return Path(path).parent / raw.get("output", "out")
    except Exception:
        return Path(".")


def _report(args, payload: dict):
    try:
        write_outputs(_error_dir(args), {"error.json": payload})
    except OSError as exc:
        log.debug("could not write error.json: %s", exc)
    print(f"distreg {args.command}: {payload['type']}: {payload['message']}", file=sys.stderr)


def main(argv=None) -> int:
    level = os.environ.get("DISTREG_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        execute(args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        payload = exc.to_dict() if isinstance(exc, DistregError) else {
            "error": "validation_error",
            "type": type(exc).__name__,
            "message": str(exc),
        }
        _report(args, payload)
        return EXIT_VALIDATION
    except NumericalError as exc:
        _report(args, exc.to_dict())
        return EXIT_NUMERICAL
    except Exception as exc:  # noqa: BLE001
        log.debug("unexpected failure", exc_info=True)
        _report(args, {"error": "unexpected", "type": type(exc).__name__, "message": str(exc)})
        return EXIT_UNEXPECTED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
