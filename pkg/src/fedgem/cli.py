"""Command line entry point: ``fedgem {run,sweep,baseline}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

from .core import ConfigError, NumericalError, RunConfig
from .harness import (
    DEFAULT_RADIUS_GRID,
    build_scenario,
    config_from_dict,
    csv_row,
    run_centralized_baseline,
    run_fedgem,
    run_sensitivity_sweep,
    summary_json,
    write_csv,
)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DEFAULT_DP = {"rho": 1.0, "mu": 0.05, "B_x": 1.0, "B_gamma": 1.0}


def _load(path):
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def _config(raw: dict, args) -> RunConfig:
    raw = {k: v for k, v in raw.items() if k != "sweep"}
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.server_mode is not None:
        raw["server_mode"] = args.server_mode
    if args.workers is not None:
        raw["workers"] = args.workers
    if args.no_timing:
        raw["record_runtime"] = False
    if args.dp and raw.get("dp") is None:
        raw["dp"] = dict(DEFAULT_DP)
    return config_from_dict(raw)


def _open_out(path):
    if path is None:
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", newline="")


def cmd_run(args) -> None:
    raw = _load(args.config)
    cfg = _config(raw, args)
    scenario = build_scenario(cfg)
    result = run_fedgem(cfg, scenario)
    with _open_out(args.out) as fh:
        write_csv([csv_row(cfg, "fedgem", result.report, scenario.k_true)], fh)
    summary = args.summary
    if summary is None and args.out is not None:
        summary = str(Path(args.out).with_suffix(".json"))
    if summary is not None:
        Path(summary).write_text(summary_json(cfg, result, scenario))


def cmd_baseline(args) -> None:
    cfg = _config(_load(args.config), args)
    scenario = build_scenario(cfg)
    rep = run_centralized_baseline(cfg, scenario)
    with _open_out(args.out) as fh:
        write_csv([csv_row(cfg, "centralized_em", rep, scenario.k_true)], fh)


def cmd_sweep(args) -> None:
    raw = _load(args.config)
    sweep = raw.get("sweep", {})
    raw.setdefault("restarts", 3)
    raw.setdefault("radius_grid", list(DEFAULT_RADIUS_GRID))
    cfg = _config(raw, args)
    r_mins = sweep.get("r_min", [1.0, 2.0, 4.0, 6.0])
    settings = sweep.get("settings", ["nominal", "client_imbalance", "cluster_imbalance"])
    seeds = sweep.get("seeds", [cfg.master_seed])
    grid = [(r, s, seed) for s in settings for r in r_mins for seed in seeds]
    rows = run_sensitivity_sweep(grid, cfg)
    with _open_out(args.out) as fh:
        write_csv(rows, fh)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedgem", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
        ("run", cmd_run, "single FedGEM experiment"),
        ("sweep", cmd_sweep, "sensitivity grid over r_min, setting and seed"),
        ("baseline", cmd_baseline, "centralized EM baseline"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", help="JSON file with RunConfig fields")
        sp.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        sp.add_argument("--out", help="CSV output path (default stdout)")
        sp.add_argument("--server-mode", choices=("pairwise", "kdtree"))
        sp.add_argument("--dp", action="store_true", help="perturb shared maximizers")
        sp.add_argument("--workers", type=int, help="client threads per round")
        sp.add_argument("--no-timing", action="store_true", help="write runtime_s as 0 for reproducible output")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "run":
            sp.add_argument("--summary", help="JSON run summary path (default: --out with .json suffix)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
