"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data or numeric error.  Every
output starts from the fully resolved configuration (seed and optimizer
defaults included) so runs can be repeated exactly.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .asymptotics import LimitKind, limit_law, limit_quantile, moment_report
from .changepoint import DEFAULT_WINDOW, detect_changepoints, read_signal_csv, window_scan, write_scan_csv
from .exceptions import PlcError
from .models import MixtureFamily, as_sample
from .plc import OptimizerOptions, plc_statistic
from .simulation import (
    DEFAULT_PERCENTILES,
    SimConfig,
    critical_value_from,
    power_curve,
    simulate_null,
    write_raw_csv,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

LIMIT_QUANTILES = (0.9, 0.95, 0.99)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------- #
# Output
# --------------------------------------------------------------------------- #


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        return "[" + ", ".join(to_json(v, indent, _level + 1) for v in seq) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _config_line(config: dict) -> str:
    return "# config: " + to_json(config, indent=0).replace("\n", "")


# --------------------------------------------------------------------------- #
# Argument parsing
# --------------------------------------------------------------------------- #


def _family(text: str) -> MixtureFamily:
    try:
        return MixtureFamily.parse(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'mean' or 'variance', got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _level(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"level must lie in (0, 1), got {v}")
    return v


def _percentiles(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(not 0.0 <= p <= 100.0 for p in vals):
        raise argparse.ArgumentTypeError("percentiles must lie in [0, 100]")
    return vals


def _grid(text: str) -> np.ndarray:
    parts = text.split(":")
    try:
        if len(parts) != 3:
            raise ValueError
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI:STEPS, got {text!r}") from None
    if steps < 2 or not hi > lo:
        raise argparse.ArgumentTypeError("need HI > LO and STEPS >= 2")
    return np.linspace(lo, hi, steps)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="plcmix", description="PLC test of homogeneity in two-component Gaussian mixtures.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, *, seed=True):
        sp.add_argument("--family", type=_family, required=True, help="mean or variance")
        if seed:
            sp.add_argument("--seed", type=_seed, default=0)
            sp.add_argument("--workers", type=_positive_int, default=None,
                            help="worker threads (default: PLC_THREADS or 1)")
            sp.add_argument("--n-starts", type=_positive_int, default=OptimizerOptions.n_starts)

    t = sub.add_parser("test", help="PLC test of one sample")
    common(t)
    t.add_argument("--input", required=True, help="CSV file, one value per line")
    t.add_argument("--alpha", type=_level, default=0.05)
    t.add_argument("--null-reps", type=_positive_int, default=1000)
    t.add_argument("--format", choices=("json", "csv"), default="json")

    ns = sub.add_parser("null-sim", help="simulate the null distribution")
    common(ns)
    ns.add_argument("--n", type=_positive_int, required=True)
    ns.add_argument("--reps", type=_positive_int, required=True)
    ns.add_argument("--percentiles", type=_percentiles, default=DEFAULT_PERCENTILES)
    ns.add_argument("--raw", metavar="FILE", default=None, help="write per-replication lambdas as CSV")
    ns.add_argument("--format", choices=("json", "csv"), default="json")

    pw = sub.add_parser("power", help="Monte Carlo power curve")
    common(pw)
    pw.add_argument("--n", type=_positive_int, required=True)
    pw.add_argument("--grid", type=_grid, required=True, metavar="LO:HI:STEPS")
    pw.add_argument("--alpha", type=_level, default=0.05)
    pw.add_argument("--reps", type=_positive_int, default=1000)
    pw.add_argument("--null-reps", type=_positive_int, default=None)
    pw.add_argument("--format", choices=("json", "csv"), default="csv")

    sc = sub.add_parser("scan", help="running-window scan of a signal")
    common(sc)
    sc.add_argument("--input", required=True, help="CSV file, one value per line")
    sc.add_argument("--window", type=_positive_int, default=DEFAULT_WINDOW)
    sc.add_argument("--step", type=_positive_int, default=1)
    sc.add_argument("--alpha", type=_level, default=0.05)
    sc.add_argument("--null-reps", type=_positive_int, default=1000)
    sc.add_argument("--min-separation", type=_positive_int, default=None)
    sc.add_argument("--output", metavar="FILE", default=None, help="write the scan CSV here instead of stdout")
    sc.add_argument("--format", choices=("json", "csv"), default="csv")

    lm = sub.add_parser("limits", help="limit law and its ingredients")
    common(lm, seed=False)
    lm.add_argument("--format", choices=("json", "csv"), default="json")
    return p


# --------------------------------------------------------------------------- #
# Subcommands
# --------------------------------------------------------------------------- #


def _options(args) -> OptimizerOptions:
    return OptimizerOptions(n_starts=args.n_starts)


def _read_input(path: str, flag: str = "--input") -> np.ndarray:
    try:
        return read_signal_csv(path)
    except (OSError, ValueError, UnicodeDecodeError) as exc:
        raise UsageError(f"{flag}: {exc}") from None


def _emit_flat(record: dict, config: dict, fmt: str, out) -> None:
    if fmt == "json":
        out.write(to_json({"config": config, **record}) + "\n")
        return
    flat = {}
    for key, value in record.items():
        if isinstance(value, dict):
            flat.update({f"{key}_{k}": v for k, v in value.items()})
        else:
            flat[key] = value
    out.write(_config_line(config) + "\n")
    out.write(",".join(flat) + "\n")
    out.write(",".join(to_json(v, indent=0) for v in flat.values()) + "\n")


def cmd_test(args, out) -> int:
    z = as_sample(_read_input(args.input))
    opts = _options(args)
    outcome = plc_statistic(z, args.family, opts)
    cfg = SimConfig(args.family, z.size, args.null_reps, args.seed, opts)
    null = simulate_null(cfg, workers=args.workers)
    crit = critical_value_from(null, args.alpha)
    lam = outcome.lambda_
    exceed = int(np.count_nonzero(null.lambdas >= lam))
    p_value = (1 + exceed) / (args.null_reps + 1)
    record = {
        "lambda": lam,
        "is_zero": outcome.is_zero,
        "theta1": outcome.alt.theta1_hat,
        "theta2": outcome.alt.theta2_hat,
        "eta": outcome.null.eta_hat,
        "critical_value": crit,
        "p_value_mc": p_value,
        "reject": bool(lam > crit and not outcome.is_zero),
    }
    config = {"command": "test", "input": args.input, "n": int(z.size), "alpha": args.alpha, **cfg.to_dict()}
    config["null_reps"] = config.pop("reps")
    _emit_flat(record, config, args.format, out)
    return EXIT_OK


def cmd_null_sim(args, out) -> int:
    cfg = SimConfig(args.family, args.n, args.reps, args.seed, _options(args))
    summary = simulate_null(cfg, percentiles=args.percentiles, workers=args.workers)
    if args.raw:
        try:
            write_raw_csv(summary, args.raw)
        except OSError as exc:
            raise UsageError(f"--raw: {exc}") from None
    config = {"command": "null-sim", **cfg.to_dict(), "raw": args.raw}
    _emit_flat(summary.to_dict(), config, args.format, out)
    return EXIT_OK


def cmd_power(args, out) -> int:
    cfg = SimConfig(args.family, args.n, args.reps, args.seed, _options(args))
    null_reps = args.null_reps or args.reps
    curve = power_curve(cfg, args.grid, args.alpha, null_reps, workers=args.workers)
    config = {"command": "power", **cfg.to_dict(), "alpha": args.alpha, "null_reps": null_reps,
              "grid": [float(g) for g in args.grid]}
    if args.format == "json":
        out.write(to_json({"config": config, "critical_value": curve.critical_value,
                           "grid": curve.grid, "power": curve.power}) + "\n")
        return EXIT_OK
    out.write(_config_line({**config, "critical_value": curve.critical_value}) + "\n")
    out.write("grid,power\n")
    for g, pw in zip(curve.grid, curve.power):
        out.write(f"{_fmt_float(float(g))},{_fmt_float(float(pw))}\n")
    return EXIT_OK


def cmd_scan(args, out) -> int:
    y = _read_input(args.input)
    if args.window > y.size:
        raise UsageError(f"--window: {args.window} exceeds the signal length {y.size}")
    if args.window < 4:
        raise UsageError("--window: must be at least 4")
    cfg = SimConfig(args.family, args.window, args.null_reps, args.seed, _options(args))
    result = window_scan(y, args.window, args.step, args.family, args.alpha, cfg)
    detections = detect_changepoints(result, args.min_separation)
    min_sep = args.min_separation or max(1, args.window // 2)
    config = {"command": "scan", "input": args.input, "window": args.window, "step": args.step,
              "alpha": args.alpha, "min_separation": min_sep, **cfg.to_dict()}
    config["null_reps"] = config.pop("reps")
    config.pop("n")
    summary = {
        "critical_value": result.critical_value,
        "windows": int(result.centers.size),
        "missing": result.missing,
        "exceedances": int(np.count_nonzero(result.exceeds)),
        "detections": [int(d) for d in detections],
    }
    buf = io.StringIO()
    write_scan_csv(result, buf)
    if args.output:
        try:
            with open(args.output, "w", newline="") as fh:
                fh.write(buf.getvalue())
        except OSError as exc:
            raise UsageError(f"--output: {exc}") from None
    if args.format == "json":
        out.write(to_json({"config": config, **summary}) + "\n")
        return EXIT_OK
    out.write(_config_line(config) + "\n")
    if not args.output:
        out.write(buf.getvalue())
    out.write("# detections: " + to_json(summary, indent=0).replace("\n", "") + "\n")
    return EXIT_OK


def cmd_limits(args, out) -> int:
    fam = args.family
    report = moment_report(fam)
    law = limit_law(fam)
    record = {
        "kind": law.kind.value,
        "c_squared": law.c_squared if law.kind is LimitKind.SCALED_HALF_CHI_SQUARE else 0.0,
        "sigma_squared": report.sigma_squared,
        "c04": report.c04_limit,
        "fisher_info": report.fisher_info_theta,
        "xi1_xi2": report.xi1_xi2_expectation,
        "quantiles": {f"{q:g}": limit_quantile(law, q) for q in LIMIT_QUANTILES},
    }
    config = {"command": "limits", "family": fam.value}
    if args.format == "json":
        out.write(to_json({"config": config, **record}) + "\n")
        return EXIT_OK
    _emit_flat(record, config, "csv", out)
    return EXIT_OK


COMMANDS = {
    "test": cmd_test,
    "null-sim": cmd_null_sim,
    "power": cmd_power,
    "scan": cmd_scan,
    "limits": cmd_limits,
}


def run(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    """Execute one command line and return its exit code."""
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        err.write(f"plcmix: usage error: {exc}\n")
        return EXIT_USAGE
    except (PlcError, ValueError, ArithmeticError) as exc:
        err.write(f"plcmix: error: {exc}\n")
        return EXIT_DATA


def main() -> None:
    sys.exit(run())
