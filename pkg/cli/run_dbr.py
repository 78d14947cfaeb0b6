"""
run_dbr.py — Entry point for the DBR flow-shop simulator and SBM sweeps.

Usage:
    python cli/run_dbr.py simulate --env 0.85:0.3 -C 6 -S 7 --seed 42
    python cli/run_dbr.py simulate --config configs/degenerate.json --trace --out out/trace
    python cli/run_dbr.py sweep --config configs/reduced.json --methods FF,S1,S2,S3,S4
    python cli/run_dbr.py sweep --env 0.85:0.3 --methods FF,S4 --replications 10 --parallel

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

import argparse
import logging
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from dotenv import load_dotenv

from backend.config import RunConfig, load_config, write_effective_config
from backend.errors import ConfigError, DbrError, ParameterError, SweepError
from backend.experiment import Method, SweepResult, find_optimum, run_sweep, savings_from_sweeps
from backend.model import Environment, PlanningParameters
from backend.reporting import write_partial, write_sweep_tables, write_traces
from backend.services.flowshop import STATION_IDS, FlowShopSimulation

EXIT_OK      = 0
EXIT_CONFIG  = 1
EXIT_RUNTIME = 2


# ── Display helpers ───────────────────────────────────────────────────────────

def _fmt(val) -> str:
    if val is None:
        return "—"
    if isinstance(val, float):
        return f"{val:.4f}"
    return str(val)


def print_table(rows: list[dict], headers: list[str], title: str = "") -> None:
    if title:
        print(f"\n{'═' * 78}")
        print(f"  {title}")
        print(f"{'═' * 78}")

    if not rows:
        print("  No data available.")
        return

    col_w = [14] + [11] * (len(headers) - 1)
    header_line = "  ".join(str(h)[:w].ljust(w) for h, w in zip(headers, col_w))
    print(f"\n  {header_line}")
    print(f"  {'─' * len(header_line)}")
    for row in rows:
        line = "  ".join(_fmt(row.get(h))[:w].ljust(w) for h, w in zip(headers, col_w))
        print(f"  {line}")


def parse_env(text: str) -> tuple[float, float]:
    """'0.85:0.3' -> (0.85, 0.3)"""
    try:
        load, cv = text.split(":")
        return float(load), float(cv)
    except ValueError:
        raise ConfigError(f"--env expects shop_load:cv_ppt, got {text!r}") from None


def _environments(cfg: RunConfig, env_args: list[str] | None) -> tuple[Environment, ...]:
    if not env_args:
        return cfg.environments()
    model = cfg.model_constants()
    try:
        return tuple(Environment.build(*parse_env(e), model) for e in env_args)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


# ── Commands ──────────────────────────────────────────────────────────────────

def cmd_simulate(cfg: RunConfig, env: Environment, ccr_buffer: float,
                 shipping_buffer: float, seed: int, trace: bool = False) -> int:
    exp = cfg.experiment
    try:
        params = PlanningParameters(ccr_buffer, shipping_buffer)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc

    write_effective_config(cfg, cfg.output_dir, (env,), run={
        "command":         "simulate",
        "ccr_buffer":      ccr_buffer,
        "shipping_buffer": shipping_buffer,
        "seed":            seed,
        "trace":           trace,
    })
    sim = FlowShopSimulation(env, params, seed, exp.horizon, exp.warmup,
                             cfg.model_constants(), cfg.cost_rates(), trace=trace)
    result = sim.run()
    rates = cfg.cost_rates()

    print_table(
        [{"measure": k, "value": v} for k, v in (
            ("avg WIP",       result.avg_wip),
            ("avg FGI",       result.avg_fgi),
            ("avg backorder", result.avg_backorder),
            *result.cost_breakdown(rates).items(),
            ("service level", result.service_level),
            ("arrived",       result.orders_arrived),
            ("completed",     result.orders_completed),
            ("delivered",     result.orders_delivered),
            ("in system",     result.orders_in_system),
            ("events",        result.events_processed),
        )],
        ["measure", "value"],
        title=f"Replication  env={env.label}  C={ccr_buffer:g}  S={shipping_buffer:g}  seed={seed}",
    )
    print_table([{"station": sid, "utilization": result.utilization[sid]} for sid in STATION_IDS],
                ["station", "utilization"], title="Station utilization")

    if trace:
        written = write_traces(sim, cfg.output_dir)
        print(f"\n  traces: {written['schedule_trace']}, {written['event_trace']}")
    print()
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, environments: tuple[Environment, ...]) -> int:
    exp = cfg.experiment
    write_effective_config(cfg, cfg.output_dir, environments, run={"command": "sweep"})
    collected: dict[Method, list] = {m: [] for m in exp.methods}
    sweeps: list[SweepResult] = []

    try:
        for method in exp.methods:
            plan = cfg.plan_for(method, environments)
            sweeps.append(run_sweep(plan, on_iteration=collected[method].append,
                                    parallel=cfg.mode == "parallel"))
    except KeyboardInterrupt:
        marker = write_partial(collected, cfg.output_dir)
        print(f"\n  [interrupted] partial results flushed, resume marker: {marker}", file=sys.stderr)
        return EXIT_RUNTIME
    except SweepError as exc:
        write_partial(collected, cfg.output_dir, interrupted_at={
            "env_shop_load": exc.shop_load, "env_cv_ppt": exc.cv_ppt,
            "C": exc.ccr_buffer, "S": exc.shipping_buffer, "replication": exc.replication,
        })
        raise

    write_sweep_tables(sweeps, cfg.output_dir)

    rows = []
    for sw in sweeps:
        totals = sw.replications_by_environment()
        for key in sw.environment_keys():
            opt = find_optimum(sw.for_environment(*key))
            rows.append({"env": f"{key[0]:g}:{key[1]:g}", "method": sw.method.value,
                         "C*": opt.ccr_buffer, "S*": opt.shipping_buffer,
                         "min cost": opt.min_cost, "replications": totals[key]})
    print_table(rows, ["env", "method", "C*", "S*", "min cost", "replications"],
                title="Optimal planning parameters per environment")

    print_table([{"method": sw.method.value, "replications": sw.total_replications} for sw in sweeps],
                ["method", "replications"], title="Total replications")

    report = savings_from_sweeps(sweeps)
    if report is not None:
        settings = report.settings
        srows = [{"env": f"{k[0]:g}:{k[1]:g}",
                  **{m: report.delta1.get((m, k)) for m in settings},
                  "avg delta2": report.delta2[k]} for k in sorted(report.delta2)]
        srows += [{"env": f"{sl:g} delta3", **{m: report.delta3.get((m, sl)) for m in settings}}
                  for sl in sorted({sl for _, sl in report.delta3})]
        print_table(srows, ["env", *settings, "avg delta2"], title="Replication savings (delta1)")

    print(f"\n  tables written to {cfg.output_dir}\n")
    return EXIT_OK


# ── Main ──────────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="DBR flow-shop simulator with Simulation Budget Management sweeps"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--env", action="append",
                        help="Environment as shop_load:cv_ppt (repeatable for sweep)")
    common.add_argument("--horizon", type=float, help="Simulated hours per replication")
    common.add_argument("--warmup", type=float, help="Warm-up hours excluded from costs")
    common.add_argument("--out", dest="output_dir", help="Output directory")
    common.add_argument("--log-level", dest="verbosity",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="Run one replication")
    sim.add_argument("-C", "--ccr-buffer", type=float, default=6.0, help="CCR-Buffer (default: 6)")
    sim.add_argument("-S", "--shipping-buffer", type=float, default=7.0,
                     help="Shipping-Buffer (default: 7)")
    sim.add_argument("--seed", type=int, help="Replication seed (default: master seed)")
    sim.add_argument("--trace", action="store_true", help="Write schedule and event trace CSVs")

    sweep = sub.add_parser("sweep", parents=[common], help="Sweep the (C, S) grid")
    sweep.add_argument("--methods", help="Comma list of FF,S1,S2,S3,S4 (default: FF)")
    sweep.add_argument("--seed", dest="master_seed", type=int, help="Master seed")
    sweep.add_argument("--replications", type=int, help="Replications per iteration")
    sweep.add_argument("--c-max", type=int, help="Largest CCR-Buffer in the grid")
    sweep.add_argument("--s-max", type=int, help="Largest Shipping-Buffer in the grid")
    mode = sweep.add_mutually_exclusive_group()
    mode.add_argument("--reproducible", dest="mode", action="store_const", const="reproducible",
                      help="Sequential sweep (default)")
    mode.add_argument("--parallel", dest="mode", action="store_const", const="parallel",
                      help="One worker process per environment")
    return parser


def main(argv: list[str] | None = None) -> int:
    if (getattr(sys.stdout, "encoding", "") or "").lower().replace("-", "") != "utf8":
        sys.stdout.reconfigure(encoding="utf-8")
    load_dotenv()
    args = build_parser().parse_args(argv)

    try:
        cfg = load_config(args.config)
        overrides = {k: getattr(args, k, None) for k in
                     ("horizon", "warmup", "output_dir", "verbosity", "methods",
                      "master_seed", "replications", "c_max", "s_max", "mode")}
        cfg = cfg.with_overrides(**overrides)
        logging.basicConfig(level=cfg.verbosity, stream=sys.stderr,
                            format="%(levelname)s %(name)s %(message)s")
        for name, value in sorted(cfg.env_overrides.items()):
            print(f"  [config] {name}={value} (environment override)", file=sys.stderr)
        environments = _environments(cfg, args.env)
        if args.env:
            cfg = cfg.with_environments(environments)

        if args.command == "simulate":
            if len(environments) != 1:
                raise ConfigError(f"simulate runs exactly one environment, got {len(environments)}; "
                                  "pass --env or use a config with a single environment")
            seed = args.seed if args.seed is not None else cfg.experiment.master_seed
            return cmd_simulate(cfg, environments[0], args.ccr_buffer, args.shipping_buffer,
                                seed, trace=args.trace)
        return cmd_sweep(cfg, environments)

    except (ConfigError, ParameterError) as exc:
        print(f"\n  [CONFIG ERROR] {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DbrError, OSError) as exc:
        print(f"\n  [ERROR] {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
