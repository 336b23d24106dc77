"""Command-line entry point: ``sparse-tracking {synth,select,backtest,distance}``."""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys

import numpy as np
import scipy

from . import __version__
from ._io import atomic_write_text, fmt, write_csv
from .config import RunConfig
from .evaluation import compare_reports, run_backtest
from .exceptions import SparseTrackingError
from .market_data import PanelSchema, distance_from_panel, load_price_panel
from .multi_stage import run_stages, union_and_truncate
from .synth import generate_market

logger = logging.getLogger("sparse_tracking")


def _overrides(args):
    return {
        "solver.seed": getattr(args, "seed", None),
        "solver.restarts": getattr(args, "restarts", None),
        "solver.sweeps": getattr(args, "sweeps", None),
        "solver.cooling": getattr(args, "cooling", None),
        "output": getattr(args, "out", None),
        "data.prices": getattr(args, "prices", None),
        "data.market_caps": getattr(args, "market_caps", None),
    }


def write_manifest(cfg, directory, command):
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "config": cfg.raw,
        "seed": cfg.raw["solver"]["seed"],
        "versions": {
            "sparse_tracking": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    atomic_write_text(directory / "manifest.json",
                      json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _load_panel(cfg):
    prices = cfg.path("prices")
    if prices is None:
        raise SparseTrackingError("data.prices is not configured")
    schema = PanelSchema(date_column=cfg.raw["data"]["date_column"],
                         index_column=cfg.raw["data"]["index_column"])
    return load_price_panel(prices, schema, cfg.path("market_caps"))


def cmd_synth(cfg):
    s = cfg.raw["synth"]
    market = generate_market(
        n_assets=int(s["assets"]), n_days=int(s["days"]), n_factors=int(s["factors"]),
        seed=int(s["seed"]), noise=float(s["noise"]), mc_exponent=float(s["mc_exponent"]),
        start=str(s["start"]),
    )
    out = cfg.output_dir
    market.write(out)
    write_manifest(cfg, out, "synth")
    return out


def cmd_select(cfg):
    panel = _load_panel(cfg)
    plans = cfg.plans(panel.n_assets)
    sa = cfg.sa_config()
    est = cfg.raw["estimation"]
    as_of = cfg.raw["select"]["as_of"]
    t = panel.n_dates - 1 if as_of is None else panel.date_position(as_of)
    d = distance_from_panel(panel, t, int(est["lookback"]), est["weighting"],
                            float(est["shrinkage"]))
    out = cfg.output_dir
    for name, plan in plans.items():
        try:
            stage_sets = run_stages(plan, d, sa)
        except SparseTrackingError as exc:
            raise SparseTrackingError(f"{name}: {exc}") from exc
        final = union_and_truncate(stage_sets, plan.m_star)
        rows = [["mc_rank", "asset", "stages"]]
        for i in final.indices:
            rows.append([i + 1, d.mc_rank_order[i],
                         " ".join(str(s) for s in final.provenance[i])])
        write_csv(out / name / "selection.csv", rows)
        lines = [f"portfolio: {name}", f"as_of: {panel.dates[t]}",
                 f"selected: {len(final)} (cap {plan.m_star})"]
        for number, (params, s) in enumerate(zip(plan.stages, stage_sets), 1):
            lines.append(
                f"stage {number}: N={params.n_forced} M={params.n_select} "
                f"H={params.max_rank} K={params.n_candidates} "
                f"alpha={fmt(params.dissimilarity)} beta={fmt(params.centrality)} "
                f"objective={fmt(s.objectives[0])}"
            )
        lines.append("assets: " + " ".join(final.ids(d.mc_rank_order)))
        atomic_write_text(out / name / "report.txt", "\n".join(lines) + "\n")
    write_manifest(cfg, out, "select")
    return out


def cmd_backtest(cfg):
    panel = _load_panel(cfg)
    plans = cfg.plans(panel.n_assets)
    sa = cfg.sa_config()
    est, bt = cfg.raw["estimation"], cfg.raw["backtest"]
    out = cfg.output_dir
    reports = []
    for name, plan in plans.items():
        try:
            report = run_backtest(
                plan, panel, sa, bt["rebalance"],
                lookback=int(est["lookback"]), shrinkage=float(est["shrinkage"]),
                weighting=est["weighting"], weight_window=int(bt["weight_window"]),
                horizons=[int(p) for p in bt["horizons"]],
                long_horizons={str(k): int(v) for k, v in bt["long_horizons"].items()},
                sample_size=int(bt["sample_size"]), sampling=bt["sampling"], name=name,
            )
        except SparseTrackingError as exc:
            raise SparseTrackingError(f"{name}: {exc}") from exc
        report.write(out / name)
        reports.append(report)
    write_comparison(reports, out)
    write_manifest(cfg, out, "backtest")
    return out


def write_comparison(reports, out):
    """Cross-portfolio tables: one row per horizon, one column per portfolio."""
    names = [r.name for r in reports]
    horizons = sorted(set().union(*(r.horizons for r in reports)))

    def table(path, value):
        rows = [["p", *names]]
        for p in horizons:
            rows.append([p, *(value(r, p) for r in reports)])
        write_csv(out / path, rows)

    table("residual_mean.csv", lambda r, p: fmt(r.horizons[p].mean) if p in r.horizons else "")
    table("residual_variance.csv",
          lambda r, p: fmt(r.horizons[p].variance) if p in r.horizons else "")
    labels = list(reports[0].long_horizons) if reports else []
    for path, attr in (("abs_residual_mean_long.csv", "abs_mean"),
                       ("abs_residual_variance_long.csv", "abs_variance")):
        rows = [["horizon", *names]]
        for label in labels:
            row = [label]
            for r in reports:
                s = r.long_horizons[label][1]
                row.append(fmt(getattr(s, attr)) if s is not None else "")
            rows.append(row)
        write_csv(out / path, rows)
    rows = [["p", "portfolios", "levene_F", "levene_p", "rejected_5pct"]]
    for p, (members, res) in compare_reports(reports, horizons).items():
        if res is None:
            rows.append([p, " ".join(members), "", "", ""])
        else:
            rows.append([p, " ".join(members), fmt(res.statistic), fmt(res.p_value),
                         str(res.rejected_at_5pct).lower()])
    write_csv(out / "levene.csv", rows)
    rows = [["portfolio", "max_abs_residual"]]
    rows += [[r.name, fmt(r.max_abs_residual)] for r in reports]
    write_csv(out / "max_abs_residual.csv", rows)


def cmd_distance(cfg):
    panel = _load_panel(cfg)
    est = cfg.raw["estimation"]
    as_of = cfg.raw["select"]["as_of"]
    t = panel.n_dates - 1 if as_of is None else panel.date_position(as_of)
    d = distance_from_panel(panel, t, int(est["lookback"]), est["weighting"],
                            float(est["shrinkage"]))
    out = cfg.output_dir
    d.to_csv(out / "distance.csv")
    write_manifest(cfg, out, "distance")
    return out


COMMANDS = {"synth": cmd_synth, "select": cmd_select, "backtest": cmd_backtest,
            "distance": cmd_distance}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sparse-tracking",
        description="Sparse index tracking by correlation-distance asset selection.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate a synthetic factor-model market"),
        ("select", "select assets for every configured portfolio"),
        ("backtest", "backtest every configured portfolio"),
        ("distance", "export the correlation-distance matrix"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", help="YAML run configuration")
        p.add_argument("-o", "--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("-v", "--verbose", action="store_true")
        if name != "synth":
            p.add_argument("--prices", help="price panel CSV")
            p.add_argument("--market-caps", dest="market_caps", help="market cap CSV")
            p.add_argument("--restarts", type=int)
            p.add_argument("--sweeps", type=int)
            p.add_argument("--cooling", type=float)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = _overrides(args)
    if args.command == "synth":
        overrides["synth.seed"] = overrides.pop("solver.seed")
    try:
        cfg = RunConfig.load(args.config, overrides)
        out = COMMANDS[args.command](cfg)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (SparseTrackingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
