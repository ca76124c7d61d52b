"""Command-line entry point: ``roughvol <subcommand> [options]``.

Exit status is 0 on success, 1 on usage errors (bad flags, missing input) and
2 on data or numeric failures. Human-readable logs go to stderr; every run that
writes artifacts also writes a JSON sidecar echoing its resolved configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .core import (
    GridSpec,
    RoughVolError,
    SimScenario,
    TuningSpec,
    jsonable,
    parse_eta_scheme,
    design_scenario,
)
from .estimators import increment_acf
from .ingest import DayFilterConfig, ingest, parse_session, read_exclusion_file, read_ticks
from .io import read_price_path, write_price_path
from .montecarlo import McPlan, calibrate_noise, load_plan, run_plan
from .roughtest import (
    DEFAULT_MAX_LAG,
    build_block_grid,
    compute_diff_panel,
    diff_series_rows,
    test_statistic,
)
from .simulate import simulate_panel

log = logging.getLogger("roughvol")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _write_json(obj, path):
    text = json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _require_file(path):
    if not os.path.isfile(path):
        raise UsageError(f"input file not found: {path}")


def _scenario_from_args(args) -> SimScenario:
    if args.config:
        _require_file(args.config)
        with open(args.config) as fh:
            d = json.load(fh)
        if args.seed is not None:
            d["seed"] = args.seed
        sc = SimScenario.from_dict(d)
    else:
        grid = GridSpec(steps_per_day=args.steps_per_day, drop_first=args.drop_first)
        sc = design_scenario(args.scenario, seed=args.seed or 0, noise=not args.no_noise,
                             jumps=not args.no_jumps, grid=grid)
    return sc


def cmd_simulate(args):
    sc = _scenario_from_args(args)
    out = simulate_panel(sc, args.days, replication=args.replication)
    if not args.out:
        raise UsageError("simulate needs --out")
    write_price_path(out.prices, args.out, out.latent_variance if args.latent else None,
                     {"scenario": sc.to_dict(), "seed": sc.seed, "replication": args.replication,
                      "days": args.days, "command": "simulate"})
    log.info("wrote %d days to %s", args.days, args.out)


def _tuning(args) -> TuningSpec:
    return TuningSpec(args.frakL, parse_eta_scheme(args.eta_scheme))


def cmd_test(args):
    _require_file(args.data)
    path = read_price_path(args.data, args.delta_n)
    tuning = _tuning(args)
    grid = build_block_grid(path, args.pn, args.kn)
    diff = compute_diff_panel(path, grid, tuning)
    alphas = args.alpha or [0.05]
    report = test_statistic(diff, alphas, args.max_lag)
    out = report.to_dict()
    out["config"] = {"data": args.data, "pn": args.pn, "kn": args.kn, "tuning": tuning.to_dict(),
                     "delta_n": path.delta_n, "alphas": alphas, "n_days": path.n_days,
                     "blocks_per_day": grid.n_blocks}
    _write_json(out, args.out)
    if args.diff_csv:
        with open(args.diff_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["day", "block", "value", "valid"])
            for d, b, v, ok in diff_series_rows(diff, path.dates):
                w.writerow([d, b, repr(v), int(ok)])


def cmd_acf(args):
    _require_file(args.data)
    path, latent = read_price_path(args.data, args.delta_n, with_latent=True)
    if args.series == "diff":
        grid = build_block_grid(path, args.pn, args.kn)
        diff = compute_diff_panel(path, grid, _tuning(args))
        acov = test_statistic(diff, (0.05,), args.max_lag).lag_acov
        values = [a / acov[0] for a in acov[1:]]
    else:
        if args.series == "latent":
            if latent is None:
                raise UsageError("input has no latent_variance column")
            series = np.sqrt(np.concatenate(latent))
        else:
            series = np.concatenate([d.log_prices for d in path.days])
        values = list(increment_acf(series, args.max_lag))
    lines = ["lag,value"] + [f"{k},{v!r}" for k, v in enumerate(values, start=1)]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_montecarlo(args):
    if args.plan:
        _require_file(args.plan)
        plan = load_plan(args.plan)
    else:
        plan = McPlan()
    if args.full_scale:
        log.warning("full scale requested: 252-day replications, 1000 reps; this takes days on one core")
        plan.n_days, plan.n_reps = 252, 1000
    if args.days:
        plan.n_days = args.days
    if args.reps:
        plan.n_reps = args.reps
    if args.seed is not None:
        plan.base_seed = args.seed
    plan = McPlan(**{k: getattr(plan, k) for k in plan.__dataclass_fields__})
    report = run_plan(plan, workers=args.workers)
    if args.out and args.out.endswith(".csv"):
        with open(args.out, "w") as fh:
            fh.write(report.table_csv())
        _write_json(report.to_dict(include_records=True), args.out + ".json")
    elif args.out:
        _write_json(report.to_dict(include_records=True), args.out)
    else:
        sys.stdout.write(report.table_csv())


def cmd_ingest(args):
    _require_file(args.ticks)
    exclusions = []
    if args.exclude_file:
        _require_file(args.exclude_file)
        exclusions = read_exclusion_file(args.exclude_file)
    cfg = DayFilterConfig(args.threshold, exclusions, parse_session(args.session))
    raw = read_ticks(args.ticks)
    path, filter_log = ingest(raw, cfg, args.step)
    if not args.out:
        raise UsageError("ingest needs --out")
    write_price_path(path, args.out, sidecar={
        "command": "ingest", "source": args.ticks, "session": list(cfg.session),
        "step_seconds": args.step, "threshold": cfg.zero_return_threshold,
        "exclusions": exclusions, "filter_log": filter_log})
    kept = sum(r["kept"] for r in filter_log)
    log.info("kept %d of %d days", kept, len(filter_log))


def cmd_calibrate_noise(args):
    sigma = calibrate_noise(args.ratio)
    sys.stdout.write(f"sigma_noise^2 = {sigma ** 2:.2e}\nsigma_noise = {sigma:.2e}\n")


def _add_test_flags(p, data=True):
    if data:
        p.add_argument("data", help="PricePath CSV (day,step,log_price)")
    p.add_argument("--pn", type=int, default=60, help="returns per block (default 60)")
    p.add_argument("--kn", type=int, default=48, help="returns used per block (default 48)")
    p.add_argument("--frakL", type=float, default=0.75, help="target ECF modulus in (0,1) (default 0.75)")
    p.add_argument("--eta-scheme", default="timeofday",
                   help="'timeofday[:days]' or 'lagged:l1,l2' (default timeofday = 5 prior days)")
    p.add_argument("--delta-n", type=float, default=None,
                   help="grid spacing in years (default: sidecar value or 1/(252*4680))")
    p.add_argument("--max-lag", type=int, default=DEFAULT_MAX_LAG, help="lags for diagnostics (default 7)")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base random seed")
    common.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--log-level", default="INFO", help="stderr log level (default INFO)")
    common.add_argument("--out", default=None, help="output file")

    parser = _Parser(prog="roughvol", description="Test for rough volatility from high-frequency prices.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="simulate a price panel to CSV")
    p.add_argument("--scenario", default="V3-J1", help="scenario label V{1,2,3}-J{1,2} (default V3-J1)")
    p.add_argument("--config", default=None, help="scenario JSON (overrides --scenario)")
    p.add_argument("--days", type=int, default=7, help="trading days (default 7)")
    p.add_argument("--replication", type=int, default=0, help="replication index for the RNG key")
    p.add_argument("--steps-per-day", type=int, default=4680)
    p.add_argument("--drop-first", type=int, default=60)
    p.add_argument("--no-noise", action="store_true")
    p.add_argument("--no-jumps", action="store_true")
    p.add_argument("--latent", action="store_true", help="also write the latent_variance column")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("test", parents=[common], help="run the roughness test on a PricePath CSV")
    _add_test_flags(p)
    p.add_argument("--alpha", type=float, action="append", help="test level (repeatable)")
    p.add_argument("--diff-csv", default=None, help="also write the differenced increments")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("acf", parents=[common], help="per-lag autocorrelations as CSV")
    _add_test_flags(p)
    p.add_argument("--series", choices=["diff", "logprice", "latent"], default="diff",
                   help="differenced log-variance increments (default), raw log-prices or latent vol")
    p.set_defaults(func=cmd_acf)

    p = sub.add_parser("montecarlo", parents=[common], help="size/power Monte Carlo")
    p.add_argument("--plan", default=None, help="McPlan JSON")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--days", type=int, default=None)
    p.add_argument("--full-scale", action="store_true", help="252 days x 1000 reps")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("ingest", parents=[common], help="tick CSV to PricePath CSV")
    p.add_argument("ticks", help="CSV with timestamp,price")
    p.add_argument("--session", default="09:35-16:00")
    p.add_argument("--step", type=int, default=5, help="grid step in seconds (default 5)")
    p.add_argument("--threshold", type=float, default=0.20, help="max share of zero 5-min returns")
    p.add_argument("--exclude-file", default=None, help="ISO dates to drop, one per line")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("calibrate-noise", parents=[common],
                       help="noise scale from the 5s/5min realized variance ratio")
    p.add_argument("ratio", type=float)
    p.set_defaults(func=cmd_calibrate_noise)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except UsageError as e:
        print(f"roughvol: usage error: {e}", file=sys.stderr)
        return 1
    except (RoughVolError, ValueError, ArithmeticError) as e:
        print(f"roughvol: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
