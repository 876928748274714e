"""Command-line front end for the nowcasting pipeline.

Subcommands mirror the pipeline stages; each stage reads the previous
stage's cache from the shared output directory, so expensive steps are
resumable:

    argox synth      --out data/ --seed 7 --states 20 --weeks 260
    argox ingest     --config cfg.json --out run/
    argox route      --config cfg.json --out run/
    argox first-step --config cfg.json --out run/
    argox backtest   --config cfg.json --out run/
    argox evaluate   --out run/

Flags mirror the config keys and override them when both are given.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import pandas as pd

from .backtest import BacktestConfig, prepare_inputs, run_backtest
from .geo import default_registry, load_registry
from .panels import load_trends_dir, parse_ili_csv, zero_fraction_report
from .routing import routing_table, write_routing_csv
from .synth import SynthConfig, generate_synthetic
from .weeks import parse_week


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--ili", help="%%ILI CSV (year,week,geo,ili_percent)")
    parser.add_argument("--trends-dir", help="directory of search-volume CSVs")
    parser.add_argument("--registry", help="registry CSV or 'default'")
    parser.add_argument("--start", help="first estimation week, e.g. 2014w41")
    parser.add_argument("--end", help="last estimation week")
    parser.add_argument("--window", type=int, help="training window in weeks")
    parser.add_argument("--national-lags", type=int, help="AR lags for the national model")
    parser.add_argument("--cv-folds", type=int, help="cross-validation folds")
    parser.add_argument("--routing", help="'registry', 'auto', or standalone.csv path")
    parser.add_argument("--routing-start", help="in-sample start for routing=auto")
    parser.add_argument("--routing-end", help="in-sample end for routing=auto")
    parser.add_argument("--no-enrichment", action="store_true",
                        help="ablate regional enrichment")
    parser.add_argument("--methods", help="comma list, e.g. argox,naive,var1")
    parser.add_argument("--seed", type=int, help="seed echoed into outputs")


def _config_from_args(args) -> BacktestConfig:
    raw: dict = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text())
    data = raw.setdefault("data", {})
    if args.ili:
        data["ili"] = args.ili
    if args.trends_dir:
        data["trends_dir"] = args.trends_dir
    rng = raw.setdefault("range", {})
    if args.start:
        rng["start"] = args.start
    if args.end:
        rng["end"] = args.end
    for key, val in (
        ("registry", args.registry),
        ("window", args.window),
        ("national_lags", args.national_lags),
        ("cv_folds", args.cv_folds),
        ("routing", args.routing),
        ("seed", args.seed),
    ):
        if val is not None:
            raw[key] = val
    if args.no_enrichment:
        raw["enrichment"] = False
    if args.methods:
        raw["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if args.routing_start and args.routing_end:
        raw["routing_insample"] = {"start": args.routing_start, "end": args.routing_end}
    return BacktestConfig.from_dict(raw)


def _registry_for(cfg: BacktestConfig):
    if cfg.registry in ("default", "", None):
        return default_registry()
    return load_registry(cfg.registry)


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        seed=args.seed if args.seed is not None else 0,
        n_states=args.states,
        n_weeks=args.weeks,
        n_regions=args.regions,
        n_terms=args.terms,
        spatial_corr=args.spatial_corr,
        search_noise=args.search_noise,
        zero_inflation=args.zero_inflation,
    )
    world = generate_synthetic(cfg, args.out)
    for name, path in world.paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_ingest(args) -> int:
    cfg = _config_from_args(args)
    registry = _registry_for(cfg)
    ili = parse_ili_csv(cfg.ili, registry)
    trends = load_trends_dir(cfg.trends_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fractions = zero_fraction_report(trends)
    pd.DataFrame(
        sorted(fractions.items()), columns=["geo", "zero_fraction"]
    ).to_csv(out / "zero_fractions.csv", index=False, float_format="%.12g")
    print(f"ili: {len(ili.weeks)} weeks x {len(ili.columns)} series")
    print(f"trends: {len(trends)} geographies; zero fractions -> zero_fractions.csv")
    return 0


def cmd_route(args) -> int:
    cfg = _config_from_args(args)
    registry = _registry_for(cfg)
    ili = parse_ili_csv(cfg.ili, registry)
    if cfg.routing_insample is None:
        raise SystemExit("route needs --routing-start/--routing-end (in-sample window)")
    lo, hi = cfg.routing_insample
    rows = [i for i, w in enumerate(ili.weeks) if lo <= w <= hi]
    from .panels import WeeklyPanel

    insample = WeeklyPanel([ili.weeks[i] for i in rows], ili.columns, ili.values[rows])
    table = routing_table(insample, registry)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_routing_csv(table, out / "standalone.csv")
    chosen = sorted(table.loc[table["selected"] == 1, "geo"])
    print(f"stand-alone set: {', '.join(chosen)} -> {out / 'standalone.csv'}")
    return 0


def cmd_first_step(args) -> int:
    cfg = _config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = prepare_inputs(cfg, out, progress=_progress if args.verbose else None)
    print(f"first-step panel: {len(data.fs_weeks)} weeks -> {out / 'first_step.csv'}")
    return 0


def cmd_backtest(args) -> int:
    cfg = _config_from_args(args)
    paths = run_backtest(cfg, args.out, progress=_progress if args.verbose else None)
    for name in ("records", "summary", "summary_json"):
        print(f"{name}: {paths[name]}")
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import season_report, write_reports

    records_path = Path(args.out) / "records.csv"
    if not records_path.exists():
        raise SystemExit(f"no records at {records_path}; run backtest first")
    records = pd.read_csv(records_path)
    tables = season_report(records)
    paths = write_reports(tables, args.out)
    print(f"reports -> {', '.join(str(p) for p in paths.values())}")
    return 0


def _progress(week) -> None:
    print(f"  fitted {week}", file=sys.stderr)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="argox",
                                     description="multi-resolution %ILI nowcasting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic data directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--states", type=int, default=20)
    p.add_argument("--weeks", type=int, default=260)
    p.add_argument("--regions", type=int, default=4)
    p.add_argument("--terms", type=int, default=10)
    p.add_argument("--spatial-corr", type=float, default=0.6)
    p.add_argument("--search-noise", type=float, default=0.5)
    p.add_argument("--zero-inflation", type=float, default=0.3)
    p.set_defaults(func=cmd_synth)

    for name, fn, extra_verbose in (
        ("ingest", cmd_ingest, False),
        ("route", cmd_route, False),
        ("first-step", cmd_first_step, True),
        ("backtest", cmd_backtest, True),
    ):
        p = sub.add_parser(name)
        _add_shared(p)
        if extra_verbose:
            p.add_argument("--verbose", action="store_true")
        p.set_defaults(func=fn)

    p = sub.add_parser("evaluate", help="rebuild reports from records.csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
