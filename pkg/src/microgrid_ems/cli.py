"""Command-line interface.

Exit codes: 0 success, 2 invalid input, 3 an optimization failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from .config import METHODS, SimulationConfig, case_system, config_from_dict, data_options, read_yaml
from .degradation import make_tables
from .lp import SolveError
from .metrics import emit_report, read_report
from .plots import emit_plots
from .policy_io import save_policy
from .scenario import StageLayout, load_forecasts, load_timeseries
from .sddp import SDDPPolicy
from .simulate import build_graph, initial_state, run_rolling_horizon
from .system import ValidationError

EXIT_OK, EXIT_INVALID, EXIT_SOLVE = 0, 2, 3

log = logging.getLogger("microgrid_ems")


def _start_index(data, value: Optional[str]) -> int:
    if value is None:
        return 0
    try:
        return int(value)
    except ValueError:
        return data.index_of(value)


def _layout(text: Optional[str], base: StageLayout) -> StageLayout:
    if text is None:
        return base
    try:
        durations = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ValidationError([f"--layout: expected comma-separated hours, got {text!r}"]) from None
    return replace(base, durations=durations)


def cmd_train(args) -> int:
    raw = read_yaml(args.config)
    config = config_from_dict(raw)
    data = load_timeseries(args.data, **data_options(raw))
    forecasts = load_forecasts(args.forecasts, data_options(raw)["wind_scale"]) if args.forecasts else None
    overrides = {}
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.start is not None:
        overrides["start"] = _start_index(data, args.start)
    config = replace(config, **overrides).validate()
    tables = {s.name: make_tables(s) for s in config.system.degrading_storages}
    graph = build_graph(config, data, forecasts, config.start)
    policy = SDDPPolicy(graph, config.system, tables, config.theta_min)
    policy.train(initial_state(config.system, tables, config.initial_soc_fraction), config.iterations, config.seed)
    save_policy(policy, args.out)
    print(f"trained {config.iterations} iterations, lower bound {policy.log.lower_bound[-1]:.6g} EUR, policy written to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    raw = read_yaml(args.config) if args.config else {}
    if args.case is not None:
        raw = {k: v for k, v in raw.items() if k not in ("generators", "vres", "loads", "storages")}
        raw["case"] = args.case
    if "case" not in raw and "storages" not in raw:
        raise ValidationError(["simulate: give --case or a --config describing the system"])
    config = config_from_dict(raw, method=args.method)
    data = load_timeseries(args.data, **data_options(raw))
    forecasts = load_forecasts(args.forecasts, data_options(raw)["wind_scale"]) if args.forecasts else None
    overrides = {"seed": args.seed}
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    if args.start is not None:
        overrides["start"] = _start_index(data, args.start)
    if args.hours is not None:
        overrides["hours"] = args.hours
    overrides["layout"] = _layout(args.layout, config.layout)
    config = replace(config, **overrides).validate()

    progress = (lambda i, n: print(f"window {i}/{n}", file=sys.stderr)) if args.verbose else None
    result = run_rolling_horizon(config, data, forecasts, progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_report(result.report, out / "report.csv", "csv")
    emit_report(result.report, out / "report.json", "json")
    result.traces.to_csv(out / "traces.csv", index=False)
    if not args.no_plots:
        emit_plots(result.traces, out)
    r = result.report
    print(f"case {r.case} method {r.method}: total {r.total_cost:.2f} EUR over {r.hours:.0f} h, report in {out}")
    return EXIT_OK


def cmd_degradation_table(args) -> int:
    raw = read_yaml(args.config)
    config = config_from_dict(raw)
    storages = config.system.degrading_storages
    if args.storage is not None:
        storages = [s for s in storages if s.name == args.storage]
    if not storages:
        raise ValidationError(["degradation-table: no storage with a degradation model"])
    tables = make_tables(storages[0])
    lines = ["direction,segment,width_kwh,marginal_cost"]
    lines += [f"{d},{k},{w!r},{c!r}" for d, k, w, c in tables.rows()]
    print("\n".join(lines))
    return EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.input)
    if src.is_dir():
        src = src / "report.json" if (src / "report.json").exists() else src / "report.csv"
    if not src.exists():
        raise ValidationError([f"report: {src} does not exist"])
    sys.stdout.write(emit_report(read_report(src), None, args.format))
    return EXIT_OK


def cmd_generate_data(args) -> int:
    from .synthetic import synthetic_forecasts, synthetic_year, write_forecasts, write_timeseries

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = synthetic_year(args.year, args.seed)
    write_timeseries(data, out / "observations.csv")
    start = _start_index(data, args.forecast_start)
    stop = len(data) if args.forecast_hours is None else start + args.forecast_hours
    frame = synthetic_forecasts(data, horizon=args.horizon, seed=args.seed + 1, start=start, stop=stop)
    write_forecasts(frame, out / "forecasts.csv")
    print(f"wrote {len(data)} hours of observations and {frame['issue_time'].nunique()} forecast issues to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="microgrid-ems", description="Stochastic microgrid operation with battery ageing costs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy for the first window of a configuration")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--forecasts")
    t.add_argument("--out", required=True)
    t.add_argument("--iterations", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--start", help="hour index or UTC timestamp of the window start")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("simulate", help="rolling-horizon simulation of one case and method")
    s.add_argument("--case", type=int, choices=[1, 2, 3])
    s.add_argument("--config")
    s.add_argument("--method", required=True, choices=sorted(METHODS))
    s.add_argument("--data", required=True)
    s.add_argument("--forecasts")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--iterations", type=int)
    s.add_argument("--start", help="hour index or UTC timestamp of the first simulated hour")
    s.add_argument("--hours", type=int, help="number of simulated hours (default: to the end of the data)")
    s.add_argument("--layout", help="comma-separated node durations in hours, e.g. 6,6,6,6,24,72")
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("degradation-table", help="print the ageing cost tables as CSV")
    d.add_argument("--config", required=True)
    d.add_argument("--storage")
    d.set_defaults(func=cmd_degradation_table)

    r = sub.add_parser("report", help="print a simulation report")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--format", choices=["csv", "json"], default="csv")
    r.set_defaults(func=cmd_report)

    g = sub.add_parser("generate-data", help="write synthetic observations and quantile forecasts")
    g.add_argument("--out", required=True)
    g.add_argument("--year", type=int, default=2020)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--horizon", type=int, default=48, help="forecast horizon in hours")
    g.add_argument("--forecast-start", help="hour index or UTC timestamp of the first forecast issue")
    g.add_argument("--forecast-hours", type=int, help="span of issue times (default: the whole year)")
    g.set_defaults(func=cmd_generate_data)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolveError as exc:
        print(f"solve failure: {exc}", file=sys.stderr)
        return EXIT_SOLVE


if __name__ == "__main__":
    sys.exit(main())
