"""Rolling-origin backtest orchestration.

For every week in the requested range the pipeline refits the first-step
regressions on their trailing window, rebuilds the second-step moment
estimates on the same window of first-step outputs, and emits point and
interval estimates next to the naive and VAR benchmarks. Only data that
would have been available at estimation time is touched, which an
instrumented audit verifies on every run.

Stages cache to the output directory (first_step.csv, standalone.csv,
records.csv) so expensive steps are resumable; reruns with the same config
and inputs are byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .audit import LookaheadAudit
from .enrichment import enrich_all_states, reconstruct_regional_series
from .evaluation import naive_estimate, season_report, var1_estimate, write_reports
from .first_step import (
    FirstStepConfig,
    first_step_panel,
    read_first_step_csv,
    write_first_step_csv,
)
from .geo import NATIONAL, GeoRegistry, default_registry, load_registry
from .panels import (
    PanelError,
    WeeklyPanel,
    load_trends_dir,
    log1p_features,
    parse_ili_csv,
)
from .routing import read_routing_csv, routing_table, write_routing_csv
from .second_step import (
    JointSecondStep,
    StandaloneSecondStep,
    build_predictor_stack,
    standalone_stack,
)
from .weeks import EpiWeek, parse_week, week_range

METHOD_MAIN = "argox"
METHOD_NAIVE = "naive"
METHOD_VAR1 = "var1"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BacktestConfig:
    ili: str
    trends_dir: str
    start: EpiWeek
    end: EpiWeek
    registry: str = "default"
    window: int = 104
    national_lags: int = 52
    cv_folds: int = 10
    routing: str = "registry"            # "registry" | "auto" | path to standalone.csv
    routing_insample: Optional[Tuple[EpiWeek, EpiWeek]] = None
    enrichment: bool = True
    methods: Tuple[str, ...] = (METHOD_MAIN, METHOD_NAIVE, METHOD_VAR1)
    seed: int = 0
    floor: float = 0.01

    @staticmethod
    def from_json(path: str | Path) -> "BacktestConfig":
        raw = json.loads(Path(path).read_text())
        return BacktestConfig.from_dict(raw)

    @staticmethod
    def from_dict(raw: dict) -> "BacktestConfig":
        data = raw.get("data", {})
        rng = raw.get("range", {})
        if "start" not in rng or "end" not in rng:
            raise ConfigError("config needs range.start and range.end")
        insample = None
        if raw.get("routing_insample"):
            ri = raw["routing_insample"]
            insample = (parse_week(ri["start"]), parse_week(ri["end"]))
        return BacktestConfig(
            ili=data.get("ili", raw.get("ili", "")),
            trends_dir=data.get("trends_dir", raw.get("trends_dir", "")),
            start=parse_week(rng["start"]),
            end=parse_week(rng["end"]),
            registry=raw.get("registry", "default"),
            window=int(raw.get("window", 104)),
            national_lags=int(raw.get("national_lags", 52)),
            cv_folds=int(raw.get("cv_folds", 10)),
            routing=raw.get("routing", "registry"),
            routing_insample=insample,
            enrichment=bool(raw.get("enrichment", True)),
            methods=tuple(raw.get("methods", [METHOD_MAIN, METHOD_NAIVE, METHOD_VAR1])),
            seed=int(raw.get("seed", 0)),
            floor=float(raw.get("floor", 0.01)),
        )

    def to_dict(self) -> dict:
        return {
            "data": {"ili": self.ili, "trends_dir": self.trends_dir},
            "range": {"start": str(self.start), "end": str(self.end)},
            "registry": self.registry,
            "window": self.window,
            "national_lags": self.national_lags,
            "cv_folds": self.cv_folds,
            "routing": self.routing,
            "routing_insample": (
                {"start": str(self.routing_insample[0]), "end": str(self.routing_insample[1])}
                if self.routing_insample
                else None
            ),
            "enrichment": self.enrichment,
            "methods": list(self.methods),
            "seed": self.seed,
            "floor": self.floor,
        }


def _load_registry(cfg: BacktestConfig) -> GeoRegistry:
    if cfg.registry in ("default", "", None):
        return default_registry()
    return load_registry(cfg.registry)


def _resolve_routing(cfg: BacktestConfig, registry: GeoRegistry,
                     ili: WeeklyPanel, outdir: Path) -> GeoRegistry:
    if cfg.routing == "registry":
        return registry
    if cfg.routing == "auto":
        if cfg.routing_insample is None:
            raise ConfigError("routing=auto needs routing_insample start/end")
        lo, hi = cfg.routing_insample
        rows = [i for i, w in enumerate(ili.weeks) if lo <= w <= hi]
        if len(rows) < 2:
            raise ConfigError("routing in-sample range selects fewer than 2 weeks")
        insample = WeeklyPanel(
            [ili.weeks[i] for i in rows], ili.columns, ili.values[rows]
        )
        table = routing_table(insample, registry)
        write_routing_csv(table, outdir / "standalone.csv")
        chosen = frozenset(table.loc[table["selected"] == 1, "geo"])
        return registry.with_standalone(chosen)
    return registry.with_standalone(read_routing_csv(cfg.routing))


@dataclass
class PipelineData:
    """Everything the weekly loop needs, built once per run."""

    registry: GeoRegistry
    ili: WeeklyPanel
    first_step: WeeklyPanel
    eval_weeks: List[EpiWeek]
    fs_weeks: List[EpiWeek]


def prepare_inputs(cfg: BacktestConfig, outdir: Path,
                   audit: Optional[LookaheadAudit] = None,
                   progress=None) -> PipelineData:
    registry = _load_registry(cfg)
    ili = parse_ili_csv(cfg.ili, registry)
    if not ili.is_contiguous():
        raise PanelError("%ILI panel must cover consecutive weeks")
    missing_cols = (set(registry.states) | set(registry.regions) | {NATIONAL}) - set(
        ili.columns
    )
    if missing_cols:
        raise PanelError(f"%ILI panel missing series {sorted(missing_cols)}")
    registry = _resolve_routing(cfg, registry, ili, outdir)

    eval_weeks = week_range(cfg.start, cfg.end)
    for w in (cfg.start, cfg.end):
        if w not in ili:
            raise ConfigError(f"requested week {w} not in %ILI panel")
    fs_weeks = week_range(cfg.start.add(-cfg.window), cfg.end)

    fs_cache = outdir / "first_step.csv"
    first_step = _cached_first_step(fs_cache, fs_weeks, registry)
    if first_step is None:
        trends = load_trends_dir(cfg.trends_dir)
        missing = ({NATIONAL} | set(registry.states)) - set(trends)
        if missing:
            raise PanelError(f"trends directory missing geographies {sorted(missing)}")
        enriched = enrich_all_states(
            {s: trends[s] for s in registry.states}, registry, ili.weeks,
            enabled=cfg.enrichment,
        )
        state_feats = {
            s: dataclasses.replace(ef, panel=log1p_features(ef.panel))
            for s, ef in enriched.items()
        }
        regional_feats = {
            r: log1p_features(p)
            for r, p in reconstruct_regional_series(
                {s: trends[s] for s in registry.states}, registry, ili.weeks
            ).items()
        }
        national_feats = log1p_features(trends[NATIONAL].reindex_weeks(ili.weeks))
        fs_cfg = FirstStepConfig(
            window=cfg.window,
            national_lags=cfg.national_lags,
            cv_folds=cfg.cv_folds,
            floor=cfg.floor,
        )
        first_step = first_step_panel(
            fs_weeks, state_feats, regional_feats, national_feats, ili, registry,
            fs_cfg, audit, progress,
        )
        write_first_step_csv(first_step, fs_cache)
    return PipelineData(registry, ili, first_step, eval_weeks, fs_weeks)


def _cached_first_step(path: Path, weeks: Sequence[EpiWeek],
                       registry: GeoRegistry) -> Optional[WeeklyPanel]:
    if not path.exists():
        return None
    cached = read_first_step_csv(path)
    needed_cols = set(registry.states) | set(registry.regions) | {NATIONAL}
    if not needed_cols.issubset(cached.columns):
        return None
    if any(w not in cached for w in weeks):
        return None
    return cached


# -- weekly loop ---------------------------------------------------------------


def _second_step_training(
    data: PipelineData, week: EpiWeek, window: int, geos: List[str],
    caches: dict,
) -> tuple:
    """Aligned window matrices (targets, stacks, three error panels)."""
    registry, ili, fs = data.registry, data.ili, data.first_step
    if "rows" not in caches:
        # Precompute per-week target/stack/error rows once; windows then slice.
        weeks = [w for w in data.fs_weeks if w in fs and ili.row_of(w) >= 2]
        cols = {c: j for j, c in enumerate(fs.columns)}
        gidx = [ili.col_of(g) for g in geos]
        t_rows, s_rows, e_gt, e_reg, e_nat = [], [], [], [], []
        for w in weeks:
            p_now = ili.values[ili.row_of(w)][gidx]
            p_prev = ili.values[ili.row_of(w) - 1][gidx]
            fs_row = fs.values[fs.row_of(w)]
            state = np.array([fs_row[cols[g]] for g in geos])
            regional = np.array([fs_row[cols[registry.region_of[g]]] for g in geos])
            national = np.full(len(geos), fs_row[cols[NATIONAL]])
            t_rows.append(p_now - p_prev)
            s_rows.append(build_predictor_stack(w, ili, fs, registry, geos))
            e_gt.append(state - p_now)
            e_reg.append(regional - p_now)
            e_nat.append(national - p_now)
        caches["rows"] = {
            "weeks": {w: i for i, w in enumerate(weeks)},
            "targets": np.array(t_rows),
            "stacks": np.array(s_rows),
            "err_state": np.array(e_gt),
            "err_regional": np.array(e_reg),
            "err_national": np.array(e_nat),
        }
    rows = caches["rows"]
    window_weeks = week_range(week.add(-window), week.prev())
    try:
        idx = [rows["weeks"][w] for w in window_weeks]
    except KeyError as missing:
        raise PanelError(
            f"second step at {week}: no first-step output for window week {missing}"
        ) from None
    return (
        rows["targets"][idx],
        rows["stacks"][idx],
        rows["err_state"][idx],
        rows["err_regional"][idx],
        rows["err_national"][idx],
        window_weeks[-1],
    )


def run_backtest(cfg: BacktestConfig, outdir: str | Path,
                 audit: Optional[LookaheadAudit] = None,
                 progress=None) -> Dict[str, Path]:
    """Execute the full pipeline; returns paths of everything written."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    own_audit = audit if audit is not None else LookaheadAudit()
    data = prepare_inputs(cfg, outdir, own_audit, progress)
    registry, ili = data.registry, data.ili

    joint_geos = data.registry.connected_states()
    standalone_geos = sorted(registry.standalone)
    external = _load_external_methods(cfg)

    records = []
    diagnostics = []
    caches: dict = {}
    for week in data.eval_weeks:
        truth_row = {g: ili.at(week, g) for g in registry.states}
        prev_week = week.prev()
        if METHOD_MAIN in cfg.methods:
            targets, stacks, e_s, e_r, e_n, last_win_week = _second_step_training(
                data, week, cfg.window, joint_geos, caches
            )
            own_audit.record(week, "second_step/joint", max_ili_week=last_win_week)
            joint = JointSecondStep(floor=cfg.floor).fit(targets, stacks, e_s, e_r, e_n)
            stack_now = build_predictor_stack(week, ili, data.first_step, registry, joint_geos)
            p_prev = ili.row(prev_week, joint_geos)
            est = joint.predict(stack_now, p_prev)
            diagnostics.append(
                {
                    "year": week.year, "week": week.week, "model": "joint",
                    "rho": joint.rho_, "condition": joint.condition_,
                    "jitter": joint.jitter_,
                }
            )
            for g, pt, lo, hi in zip(joint_geos, est.point, est.lo, est.hi):
                records.append(_record(week, g, METHOD_MAIN, pt, lo, hi,
                                       truth_row[g], "joint"))
            for g in standalone_geos:
                widx = caches["rows"]["weeks"]
                win_weeks = week_range(week.add(-cfg.window), prev_week)
                win = [widx[w] for w in win_weeks]
                t, s = _standalone_training(data, g, win, caches)
                own_audit.record(week, f"second_step/{g}", max_ili_week=win_weeks[-1])
                model = StandaloneSecondStep(floor=cfg.floor).fit(t, s)
                est1 = model.predict(
                    standalone_stack(week, g, ili, data.first_step),
                    ili.at(prev_week, g),
                )
                diagnostics.append(
                    {
                        "year": week.year, "week": week.week, "model": g,
                        "rho": np.nan, "condition": np.nan, "jitter": model.jitter_,
                    }
                )
                records.append(_record(week, g, METHOD_MAIN, est1.point[0],
                                       est1.lo[0], est1.hi[0], truth_row[g], "standalone"))
        if METHOD_NAIVE in cfg.methods:
            for g in registry.states:
                records.append(_record(week, g, METHOD_NAIVE,
                                       naive_estimate(ili, week, g), np.nan, np.nan,
                                       truth_row[g], ""))
        if METHOD_VAR1 in cfg.methods:
            own_audit.record(week, "benchmark/var1", max_ili_week=prev_week)
            var_est = var1_estimate(ili, week, cfg.window, registry.states)
            for g, v in zip(registry.states, var_est):
                records.append(_record(week, g, METHOD_VAR1, v, np.nan, np.nan,
                                       truth_row[g], ""))
        for label, panel in external.items():
            for g in registry.states:
                if week in panel and g in panel.columns:
                    records.append(_record(week, g, label, panel.at(week, g),
                                           np.nan, np.nan, truth_row[g], ""))

    n_checked = own_audit.verify()

    records_df = pd.DataFrame(records)
    paths: Dict[str, Path] = {"first_step": outdir / "first_step.csv"}
    paths["records"] = outdir / "records.csv"
    records_df.to_csv(paths["records"], index=False, float_format="%.12g")
    paths["diagnostics"] = outdir / "diagnostics.csv"
    pd.DataFrame(diagnostics).to_csv(paths["diagnostics"], index=False,
                                     float_format="%.12g")
    paths["resolved_config"] = outdir / "resolved_config.json"
    paths["resolved_config"].write_text(json.dumps(cfg.to_dict(), indent=2))

    tables = season_report(records_df)
    extra = {
        "audit_records": n_checked,
        "audit_passed": True,
        "n_eval_weeks": len(data.eval_weeks),
        "standalone": standalone_geos,
        "config": cfg.to_dict(),
    }
    paths.update(write_reports(tables, outdir, extra))
    return paths


def _standalone_training(data: PipelineData, geo: str, win_idx: List[int],
                         caches: dict) -> tuple:
    key = ("standalone", geo)
    if key not in caches:
        ili, fs = data.ili, data.first_step
        weeks_map = caches["rows"]["weeks"]
        t = np.empty(len(weeks_map))
        s = np.empty((len(weeks_map), 3))
        for w, i in weeks_map.items():
            r = ili.row_of(w)
            t[i] = ili.values[r, ili.col_of(geo)] - ili.values[r - 1, ili.col_of(geo)]
            s[i] = standalone_stack(w, geo, ili, fs)
        caches[key] = (t, s)
    t, s = caches[key]
    return t[win_idx], s[win_idx]


def _record(week: EpiWeek, geo: str, method: str, point: float,
            lo: float, hi: float, truth: float, provenance: str) -> dict:
    return {
        "year": week.year,
        "week": week.week,
        "geo": geo,
        "method": method,
        "estimate": float(point),
        "lo": float(lo) if np.isfinite(lo) else np.nan,
        "hi": float(hi) if np.isfinite(hi) else np.nan,
        "truth": float(truth),
        "provenance": provenance,
    }


def _load_external_methods(cfg: BacktestConfig) -> Dict[str, WeeklyPanel]:
    out = {}
    for m in cfg.methods:
        if m.startswith("external:"):
            path = Path(m.split(":", 1)[1])
            df = pd.read_csv(path)
            required = {"year", "week", "geo", "estimate"}
            if not required.issubset(df.columns):
                raise ConfigError(f"{path}: external method needs columns {sorted(required)}")
            weeks = sorted({EpiWeek(int(y), int(w)) for y, w in zip(df["year"], df["week"])})
            geos = sorted(set(df["geo"].astype(str)))
            wide = df.pivot_table(index=["year", "week"], columns="geo", values="estimate")
            wide = wide.reindex(
                pd.MultiIndex.from_tuples([(w.year, w.week) for w in weeks]), columns=geos
            )
            out[f"external:{path.stem}"] = WeeklyPanel(
                weeks, geos, wide.to_numpy()
            )
    return out
