"""Command-line entry point: ``survcontrast {test,simulate,curve}``.

Exit codes: 0 success, 2 invalid input or flags, 1 internal error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .data import ClassKind, TestConfig, ValidationError, load_csv, write_json
from .nulldist import PipelineError, run_test
from .sim import SettingKind, SimSetting, default_threads, run_replications

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID = 2

log = logging.getLogger("survcontrast")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _lambda(text: str) -> float:
    if text.strip().lower() in ("inf", "infinity", "none"):
        return math.inf
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("lambda must be positive")
    return value


def _add_test_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t", type=float, default=25.0, help="evaluation time (default 25)")
    p.add_argument("--class", dest="class_kind", default="indicator",
                   choices=[k.value for k in ClassKind], help="contrast class")
    p.add_argument("--kappa", type=int, default=20, help="number of grid bins (default 20)")
    p.add_argument("--lambda", dest="lam", type=_lambda, default=4.0,
                   help="variation bound for --class boxtv; 'inf' for none (default 4)")
    p.add_argument("--draws", type=int, default=1000, help="Monte Carlo null draws (default 1000)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density-floor", type=float, default=1e-3)
    p.add_argument("--monotone-method", choices=["exact", "projected_gradient"], default="exact")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="survcontrast", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("test", help="test for a flat counterfactual survival curve")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--output", required=True, type=Path)
    _add_test_flags(p)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--save-draws", action="store_true", help="include null draws in the JSON")

    p = sub.add_parser("simulate", help="replicate the test on synthetic data")
    p.add_argument("--setting", required=True, help="A, B or C")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--output", type=Path, default=Path("sim_report.json"))
    p.add_argument("--csv", type=Path, default=None,
                   help="per-replication CSV (default: <output>.csv)")
    p.add_argument("--parametrization", choices=["hazard", "mean", "rate"], default="hazard")
    _add_test_flags(p)
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("curve", help="plug-in counterfactual survival curve over the exposure range")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--output", required=True, type=Path)
    p.add_argument("--t", type=float, default=25.0)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--density-floor", type=float, default=1e-3)
    return parser


def _config(args) -> TestConfig:
    return TestConfig(t=args.t, kappa=args.kappa, lam=args.lam, class_kind=args.class_kind,
                      num_null_draws=args.draws, alpha=args.alpha, seed=args.seed,
                      density_floor=args.density_floor, monotone_method=args.monotone_method)


def _threads(args) -> int:
    value = args.threads if args.threads is not None else default_threads()
    if value < 1:
        raise ValidationError("--threads must be >= 1")
    return value


def cmd_test(args) -> int:
    config = _config(args)
    threads = _threads(args)
    dataset = load_csv(args.input)
    result = run_test(dataset, config, threads=threads)
    write_json(result.to_dict(include_draws=args.save_draws), args.output)
    decision = "reject" if result.reject else "do not reject"
    print(f"statistic = {result.statistic:.6g}  p-value = {result.p_value:.4g}  "
          f"alpha = {result.alpha:g}  -> {decision} the flat null")
    return EXIT_OK


def cmd_simulate(args) -> int:
    kind = SettingKind.parse(args.setting)
    if args.n < 10 or args.reps < 1:
        raise ValidationError("--n must be >= 10 and --reps >= 1")
    setting = SimSetting(kind=kind, n=args.n, parametrization=args.parametrization)
    config = _config(args)
    threads = _threads(args)
    report = run_replications(setting, args.reps, config, threads=threads, master_seed=args.seed)
    csv_path = args.csv if args.csv is not None else args.output.with_suffix(".csv")
    write_json(report.to_dict(), args.output)
    report.write_csv(csv_path)
    print(f"setting {kind.value}, n = {setting.n}: {report.rejections}/{len(report.completed)} "
          f"rejections (rate {report.rejection_rate:.3f}), {report.failures} failed")
    return EXIT_OK


def cmd_curve(args) -> int:
    from .estimator import theta_curve
    from .nuisance import fit_nuisances

    if args.points < 2:
        raise ValidationError("--points must be >= 2")
    if not args.t >= 0:
        raise ValidationError("evaluation time must be nonnegative")
    dataset = load_csv(args.input)
    if not args.t < dataset.Y.max():
        raise ValidationError("evaluation time beyond follow-up")
    # t only enters through theta_curve; the config carries the density floor
    fit = fit_nuisances(dataset, TestConfig(density_floor=args.density_floor))
    lo, hi = dataset.exposure_range
    grid = np.linspace(lo, hi, args.points)
    curve = theta_curve(fit, dataset, args.t, eval_exposures=grid)
    with args.output.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["a", "theta"])
        for a, th in zip(curve.eval_exposures, curve.theta):
            writer.writerow([repr(float(a)), repr(float(th))])
    print(f"wrote {args.points} points to {args.output}")
    return EXIT_OK


COMMANDS = {"test": cmd_test, "simulate": cmd_simulate, "curve": cmd_curve}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PipelineError as exc:
        print(f"error in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        return EXIT_INVALID if isinstance(exc.cause, ValidationError) else EXIT_INTERNAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
