"""Command line front end: ``slipsim simulate | verify | stats``.

Configuration precedence is flags, then ``SLIPSIM_*`` environment
variables, then ``--config`` (a JSON mapping of model fields, or a previous
run's manifest), then the built-in defaults N=10, mu=-0.5, sigma=0.2.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, kernel
from .audit import audit_run, pairwise_scenario
from .model import ConfigError, ModelConfig, SimulationStalled, dynamic_diagnostics, run_simulation
from .stats import Binning, InsufficientData, RunStats, observe_executions, observe_trade_log, summarize
from .storage import (
    EXECUTION_COLUMNS,
    FORMAT_VERSION,
    TRADE_COLUMNS,
    ArtifactError,
    execution_file_table,
    executions_name,
    file_inventory,
    load_manifest,
    read_table,
    trade_log_columns,
    trade_table,
    trades_name,
    write_json,
    write_table,
)

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

# flag dest -> (ModelConfig field or "replicates", environment variable)
CONFIG_FLAGS = {
    "n": ("n_agents", "SLIPSIM_N"),
    "mu": ("mu", "SLIPSIM_MU"),
    "sigma": ("sigma", "SLIPSIM_SIGMA"),
    "trades": ("n_trades", "SLIPSIM_TRADES"),
    "warmup": ("warmup_trades", "SLIPSIM_WARMUP"),
    "seed": ("seed", "SLIPSIM_SEED"),
    "replicates": ("replicates", "SLIPSIM_REPLICATES"),
}


class UsageError(Exception):
    pass


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with model fields, or a manifest.json")
    p.add_argument("--n", type=int, help="number of agents N (default 10)")
    p.add_argument("--mu", type=float, help="mean aggressiveness (default -0.5)")
    p.add_argument("--sigma", type=float, help="aggressiveness std deviation (default 0.2)")
    p.add_argument("--trades", type=int, help="trades to record after warmup")
    p.add_argument("--warmup", type=int, help="trades discarded first (default 10%% of --trades)")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.add_argument("--replicates", type=int, help="independent runs with seeds (seed, r)")
    p.add_argument("--backend", default="auto", choices=["auto", "compiled", "python", "reference"])


def resolve_config(args, defaults: dict | None = None) -> tuple[ModelConfig, int]:
    values: dict = dict(defaults or {})
    if args.config is not None:
        try:
            doc = json.loads(args.config.read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
        if "config" in doc:  # a manifest
            values.update(doc["config"])
            if "replicates" in doc:
                values["replicates"] = doc["replicates"]
        else:
            values.update(doc)
    for dest, (name, env) in CONFIG_FLAGS.items():
        if env in os.environ:
            values[name] = os.environ[env]
    for dest, (name, _) in CONFIG_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[name] = v
    replicates = values.pop("replicates", 1)
    try:
        replicates = int(replicates)
    except (TypeError, ValueError):
        raise ConfigError("replicates", f"cannot interpret {replicates!r}") from None
    if replicates < 1:
        raise ConfigError("replicates", f"must be >= 1, got {replicates}")
    return ModelConfig.from_mapping(values), replicates


def _simulate_one(job):
    config, backend, replicate = job
    return run_simulation(config, backend=backend, replicate=replicate)


def _run_replicates(config, replicates, backend, jobs):
    work = [(config, backend, r) for r in range(replicates)]
    if jobs > 1 and replicates > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_simulate_one, work))
    return [_simulate_one(w) for w in work]


def collect_stats(trade_logs, execution_tables, warmup: int, binning: Binning) -> RunStats:
    """Reduce per-replicate tables in replicate order."""
    slip = [t["slippage"] for t in execution_tables]
    allslip = np.concatenate(slip) if slip else np.zeros(0)
    total = RunStats.empty(binning, binning.slippage_edges(allslip))
    for log, tab in zip(trade_logs, execution_tables):
        part = RunStats.empty(binning, total.slippage.edges)
        observe_trade_log(part, log, warmup)
        observe_executions(part, tab)
        total = total.merge(part)
    return total


def cmd_simulate(args) -> int:
    config, replicates = resolve_config(args)
    out = Path(args.out_dir)
    started = time.time()
    runs = _run_replicates(config, replicates, args.backend, args.jobs)
    try:
        out.mkdir(parents=True, exist_ok=True)
        names = []
        logs, tabs = [], []
        for run in runs:
            tt = trade_table(run)
            et = execution_file_table(run)
            write_table(out / trades_name(run.replicate), TRADE_COLUMNS, tt)
            write_table(out / executions_name(run.replicate), EXECUTION_COLUMNS, et)
            names += [trades_name(run.replicate), executions_name(run.replicate)]
            logs.append(run.trade_log())
            tabs.append(run.execution_table())
        stats = collect_stats(logs, tabs, config.warmup, Binning())
        try:
            summary = summarize(stats)
        except InsufficientData as exc:
            summary = {"error": str(exc)}
        summary["events"] = [run.events for run in runs]
        summary["dynamic"] = [dynamic_diagnostics(run) for run in runs]
        write_json(out / "summary.json", summary)
        names.append("summary.json")
        manifest = {
            "artifact": "slipsim",
            "version": __version__,
            "format_version": FORMAT_VERSION,
            "config": config.to_dict(),
            "warmup_resolved": config.warmup,
            "replicates": replicates,
            "seeds": [[config.seed, r] for r in range(replicates)],
            "backend": runs[0].backend,
            "started": _iso(started),
            "finished": _iso(time.time()),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "files": file_inventory(out, names),
        }
        write_json(out / "manifest.json", manifest)
    except OSError as exc:
        print(f"error: cannot write outputs to {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    ex = summary.get("executions", {})
    print(
        f"{sum(r.n_trades for r in runs)} trades, {ex.get('count', 0)} completed executions, "
        f"mean slippage {ex.get('mean_slippage', float('nan')):.6g} -> {out}"
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    config, _ = resolve_config(args, defaults={"n_trades": 10_000, "warmup_trades": 0})
    run = run_simulation(config, backend=args.backend)
    report = audit_run(run, fault_trade=args.inject_fault)
    tr_b, tr_s = pairwise_scenario()
    doc = report.as_dict()
    doc["pairwise"] = {"tr_buyer": tr_b, "tr_seller": tr_s, "sum": tr_b + tr_s}
    ok = report.ok and tr_b + tr_s == 0.0
    doc["ok"] = ok
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out_dir:
        try:
            Path(args.out_dir).mkdir(parents=True, exist_ok=True)
            (Path(args.out_dir) / "verify.json").write_text(text + "\n", encoding="utf-8")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
    print(text)
    if not ok:
        for v in report.violations[:10]:
            print(f"VIOLATION {v}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VIOLATION


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def cmd_stats(args) -> int:
    in_dir = Path(args.in_dir)
    manifest = load_manifest(in_dir)
    warmup = int(manifest["warmup_resolved"])
    logs, tabs = [], []
    for r in range(int(manifest["replicates"])):
        t = read_table(in_dir / trades_name(r), TRADE_COLUMNS)
        e = read_table(in_dir / executions_name(r), EXECUTION_COLUMNS)
        if t["index"].size == 0:
            raise ArtifactError(f"{trades_name(r)} holds no trades")
        logs.append(trade_log_columns(t))
        tabs.append({"slippage": e["slippage"], "tau": e["tau"]})
    binning = Binning(
        lambda_bins=args.lambda_bins,
        tau_unit_max=args.tau_unit_max,
        slippage_bins=args.slippage_bins,
        slippage_range=tuple(args.slippage_range) if args.slippage_range else None,
    )
    stats = collect_stats(logs, tabs, warmup, binning)
    summary = summarize(stats)
    out = Path(args.out_dir) if args.out_dir else in_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        h = stats.slippage
        _write_rows(
            out / "fig1_slippage_hist.csv",
            ["lo", "hi", "count"],
            [(float(h.edges[i]), float(h.edges[i + 1]), int(c)) for i, c in enumerate(h.counts)]
            + [(float("-inf"), float(h.edges[0]), h.underflow), (float(h.edges[-1]), float("inf"), h.overflow)],
        )
        tau = stats.tau_slippage
        _write_rows(
            out / "fig1b_exec_time_hist.csv",
            ["tau_lo", "tau_hi", "count"],
            [(int(tau.edges[i]), int(tau.edges[i + 1]), int(c)) for i, c in enumerate(tau.count) if c > 0],
        )
        _write_rows(
            out / "fig2_imbalance_vs_dp.csv",
            ["lambda_lo", "lambda_hi", "count", "mean_dp", "sem_dp"],
            [(r["lo"], r["hi"], r["count"], r["mean"], r["sem"]) for r in summary["imbalance_vs_dp"]],
        )
        _write_rows(
            out / "fig3_slippage_vs_tau.csv",
            ["tau_lo", "tau_hi", "count", "mean_slippage", "sem_slippage"],
            [(int(r["lo"]), int(r["hi"]), r["count"], r["mean"], r["sem"]) for r in summary["slippage_vs_tau"]],
        )
        write_json(out / "stats_summary.json", summary)
    except OSError as exc:
        print(f"error: cannot write outputs to {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    ex = summary["executions"]
    print(f"{ex['count']} executions, mean slippage {ex['mean_slippage']:.6g}, skewness {ex['skewness']:.4g}")
    return EXIT_OK


def _iso(ts: float) -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(ts))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slipsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"slipsim {__version__} ({kernel.default_backend()} kernel)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the model and write trade logs, executions, summary, manifest")
    _add_config_args(p)
    p.add_argument("--out-dir", default="slipsim-out")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes for replicates")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="short run with every accounting identity checked per trade")
    _add_config_args(p)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--inject-fault", type=int, default=None, metavar="TRADE", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("stats", help="rebuild figure tables from a simulate output directory")
    p.add_argument("in_dir", nargs="?", default="slipsim-out")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--lambda-bins", type=int, default=21)
    p.add_argument("--tau-unit-max", type=int, default=50)
    p.add_argument("--slippage-bins", type=int, default=80)
    p.add_argument("--slippage-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArtifactError, InsufficientData) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationStalled as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
