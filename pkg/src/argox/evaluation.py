"""Benchmarks, accuracy metrics, and season-sliced report tables.

Estimates from every method are collected as one long record table
(week x geography x method) and scored against the %ILI that was later
reported. All comparisons run on the original percent scale.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from .panels import WeeklyPanel
from .weeks import EpiWeek, season_slices

WHOLE_PERIOD = "whole"


# -- benchmarks --------------------------------------------------------------


def naive_estimate(ili: WeeklyPanel, week: EpiWeek, geo: str) -> float:
    """Carry forward last week's reported %ILI."""
    return ili.at(week.prev(), geo)


def var1_estimate(
    ili: WeeklyPanel, week: EpiWeek, window: int = 104, geos: Optional[Sequence[str]] = None
) -> np.ndarray:
    """One-step prediction of a lag-1 vector autoregression.

    Each geography's %ILI is regressed on the full lagged vector plus an
    intercept over the trailing window; collinear designs fall back to the
    minimum-norm solution via lstsq.
    """
    if geos is None:
        geos = ili.columns
    sub = ili.select(list(geos))
    r = sub.row_of(week)
    if r < window + 1:
        raise ValueError(f"VAR needs {window + 1} weeks before {week}")
    Y = sub.values[r - window : r]            # responses p_t
    X_lag = sub.values[r - window - 1 : r - 1]  # predictors p_{t-1}
    X = np.column_stack([np.ones(window), X_lag])
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    x_now = np.concatenate([[1.0], sub.values[r - 1]])
    return x_now @ coef


# -- metrics -----------------------------------------------------------------


def mse(est: np.ndarray, truth: np.ndarray) -> float:
    est, truth = _aligned(est, truth)
    return float(np.mean((est - truth) ** 2))


def mae(est: np.ndarray, truth: np.ndarray) -> float:
    est, truth = _aligned(est, truth)
    return float(np.mean(np.abs(est - truth)))


def correlation(est: np.ndarray, truth: np.ndarray) -> float:
    """Pearson correlation; NaN when either side has zero variance."""
    est, truth = _aligned(est, truth)
    if len(est) < 2:
        return math.nan
    se, st = est.std(), truth.std()
    if se == 0.0 or st == 0.0:
        return math.nan
    return float(np.corrcoef(est, truth)[0, 1])


def _aligned(est, truth):
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if est.shape != truth.shape:
        raise ValueError(f"length mismatch {est.shape} vs {truth.shape}")
    if est.size == 0:
        raise ValueError("empty series")
    return est, truth


def coverage_rate(records: pd.DataFrame) -> float:
    """Fraction of weeks whose interval [lo, hi] contains the truth."""
    with_interval = records.dropna(subset=["lo", "hi"])
    if with_interval.empty:
        raise ValueError("no interval-bearing records")
    hit = (with_interval["lo"] <= with_interval["truth"]) & (
        with_interval["truth"] <= with_interval["hi"]
    )
    return float(hit.mean())


# -- report assembly ----------------------------------------------------------


def _period_spans(records: pd.DataFrame) -> Dict[str, set]:
    weeks = {EpiWeek(int(y), int(w)) for y, w in zip(records["year"], records["week"])}
    spans = {WHOLE_PERIOD: weeks}
    for label, member_weeks in season_slices(weeks):
        spans[label] = set(member_weeks)
    return spans


def season_report(records: pd.DataFrame) -> Dict[str, pd.DataFrame]:
    """Score every method per geography and season, then average.

    Returns ``per_state`` (method x period x geo metrics), ``summary``
    (per-geo metrics averaged over geographies; correlation averaged over
    the geographies where it is defined), ``relative_mse`` (MSE ratio to
    the naive method), and ``coverage`` (per geo, interval methods only).
    """
    required = {"year", "week", "geo", "method", "estimate", "truth"}
    if not required.issubset(records.columns):
        raise ValueError(f"records need columns {sorted(required)}")
    spans = _period_spans(records)
    keyed = records.assign(
        _wk=[EpiWeek(int(y), int(w)) for y, w in zip(records["year"], records["week"])]
    )
    per_rows = []
    for (method, geo), sub in keyed.groupby(["method", "geo"], sort=True):
        for period, span in spans.items():
            picked = sub[sub["_wk"].isin(span)]
            if picked.empty:
                continue
            per_rows.append(
                {
                    "method": method,
                    "period": period,
                    "geo": geo,
                    "n_weeks": len(picked),
                    "mse": mse(picked["estimate"], picked["truth"]),
                    "mae": mae(picked["estimate"], picked["truth"]),
                    "correlation": correlation(picked["estimate"], picked["truth"]),
                }
            )
    per_state = pd.DataFrame(per_rows)
    summary = (
        per_state.groupby(["method", "period"], sort=True)
        .agg(
            n_geos=("geo", "nunique"),
            mse=("mse", "mean"),
            mae=("mae", "mean"),
            correlation=("correlation", "mean"),
        )
        .reset_index()
    )
    naive = per_state[per_state["method"] == "naive"].set_index(["period", "geo"])["mse"]
    rel_rows = []
    for _, row in per_state.iterrows():
        key = (row["period"], row["geo"])
        if key in naive.index and naive[key] > 0:
            rel_rows.append(
                {
                    "method": row["method"],
                    "period": row["period"],
                    "geo": row["geo"],
                    "relative_mse": row["mse"] / naive[key],
                }
            )
    relative = pd.DataFrame(rel_rows, columns=["method", "period", "geo", "relative_mse"])
    cov_rows = []
    has_iv = (
        keyed.dropna(subset=["lo", "hi"]) if {"lo", "hi"}.issubset(keyed.columns)
        else pd.DataFrame()
    )
    if not has_iv.empty:
        for (method, geo), sub in has_iv.groupby(["method", "geo"], sort=True):
            cov_rows.append(
                {
                    "method": method,
                    "geo": geo,
                    "coverage": coverage_rate(sub),
                    "n_weeks": len(sub),
                }
            )
    coverage = pd.DataFrame(cov_rows, columns=["method", "geo", "coverage", "n_weeks"])
    return {
        "per_state": per_state,
        "summary": summary,
        "relative_mse": relative,
        "coverage": coverage,
    }


def write_reports(tables: Dict[str, pd.DataFrame], outdir: str | Path,
                  extra: Optional[dict] = None) -> Dict[str, Path]:
    """Emit the CSV tables plus a machine-readable JSON digest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name in ("summary", "per_state", "relative_mse", "coverage"):
        path = outdir / f"{name}.csv"
        tables[name].to_csv(path, index=False, float_format="%.12g")
        paths[name] = path
    digest: dict = {"summary": tables["summary"].to_dict(orient="records")}
    if not tables["coverage"].empty:
        digest["coverage_mean"] = {
            method: float(sub["coverage"].mean())
            for method, sub in tables["coverage"].groupby("method")
        }
    if extra:
        digest.update(extra)
    json_path = outdir / "summary.json"
    json_path.write_text(json.dumps(digest, indent=2, default=str))
    paths["summary_json"] = json_path
    return paths
