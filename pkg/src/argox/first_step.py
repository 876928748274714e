"""First step: per-resolution search regressions on a rolling window.

Every week, three families of penalized regressions turn log search
volumes into raw %ILI estimates on the logit scale:

* per state, on that state's (enriched) search features;
* per region, on the population-reconstructed regional search features;
* nationally, on national search features plus a year of autoregressive
  lags of the logit national %ILI (the national series is strong enough to
  support its own momentum terms; state and regional series are not).

Each fit selects its own penalty by blocked cross-validation on the
trailing window, refit from scratch every week.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from .audit import LookaheadAudit
from .enrichment import EnrichedFeatures
from .geo import NATIONAL, GeoRegistry
from .lasso import LassoRegression, select_lambda
from .panels import PanelError, WeeklyPanel, inv_logit, logit
from .weeks import EpiWeek


@dataclass(frozen=True)
class FirstStepConfig:
    window: int = 104          # training weeks
    national_lags: int = 52    # AR lags of logit national %ILI
    cv_folds: int = 10
    path_size: int = 50
    path_ratio: float = 1e-3
    floor: float = 0.01        # percent floor before logit


def _cv_fit_predict(X: np.ndarray, y: np.ndarray, x_now: np.ndarray,
                    cfg: FirstStepConfig) -> float:
    if not (np.isfinite(X).all() and np.isfinite(y).all() and np.isfinite(x_now).all()):
        raise PanelError("non-finite value in first-step design")
    lam = select_lambda(X, y, folds=min(cfg.cv_folds, X.shape[0]),
                        num=cfg.path_size, ratio=cfg.path_ratio)
    model = LassoRegression(lam=lam).fit(X, y)
    return float(model.predict(x_now[None, :])[0])


def _window_design(features: WeeklyPanel, ili_series: np.ndarray,
                   ili_weeks: Sequence[EpiWeek], week: EpiWeek, cfg: FirstStepConfig):
    """Align the trailing window of features and logit %ILI before ``week``."""
    feat_win = features.window_before(week, cfg.window)
    row = {w: i for i, w in enumerate(ili_weeks)}
    try:
        y_idx = [row[w] for w in feat_win.weeks]
    except KeyError as missing:
        raise PanelError(f"%ILI missing for window week {missing}") from None
    y = logit(ili_series[y_idx], floor=cfg.floor)
    x_now = features.row(week)
    return feat_win.values, y, x_now, feat_win.weeks[-1]


def fit_state_first_step(
    geo: str,
    features: EnrichedFeatures,
    ili: WeeklyPanel,
    week: EpiWeek,
    cfg: FirstStepConfig = FirstStepConfig(),
    registry: Optional[GeoRegistry] = None,
    audit: Optional[LookaheadAudit] = None,
) -> float:
    """Nowcast one state's %ILI for ``week`` from its search features."""
    if registry is not None and geo in registry.standalone and features.enriched:
        raise PanelError(f"stand-alone state {geo} must use raw (unenriched) features")
    X, y, x_now, last_ili_week = _window_design(
        features.panel, ili.series(geo), ili.weeks, week, cfg
    )
    if audit is not None:
        audit.record(week, f"first_step/{geo}", last_ili_week, week)
    yhat = _cv_fit_predict(X, y, x_now, cfg)
    return float(np.clip(inv_logit(yhat), cfg.floor, 100.0 - cfg.floor))


def fit_regional_first_step(
    region: str,
    regional_features: WeeklyPanel,
    ili: WeeklyPanel,
    week: EpiWeek,
    cfg: FirstStepConfig = FirstStepConfig(),
    audit: Optional[LookaheadAudit] = None,
) -> float:
    """Nowcast one region's %ILI from reconstructed regional search features."""
    X, y, x_now, last_ili_week = _window_design(
        regional_features, ili.series(region), ili.weeks, week, cfg
    )
    if audit is not None:
        audit.record(week, f"first_step/{region}", last_ili_week, week)
    yhat = _cv_fit_predict(X, y, x_now, cfg)
    return float(np.clip(inv_logit(yhat), cfg.floor, 100.0 - cfg.floor))


def fit_national_first_step(
    national_features: WeeklyPanel,
    ili: WeeklyPanel,
    week: EpiWeek,
    cfg: FirstStepConfig = FirstStepConfig(),
    audit: Optional[LookaheadAudit] = None,
) -> float:
    """Nowcast national %ILI from search features plus logit-%ILI lags."""
    lags = cfg.national_lags
    feat_win = national_features.window_before(week, cfg.window)
    nat = logit(ili.series(NATIONAL), floor=cfg.floor)
    row = {w: i for i, w in enumerate(ili.weeks)}
    try:
        idx_now = row[week.prev()]
        idx_win = [row[w] for w in feat_win.weeks]
    except KeyError as missing:
        raise PanelError(f"%ILI missing for window week {missing}") from None
    if min(idx_win) < lags:
        raise PanelError(
            f"national model needs {cfg.window + lags} weeks of history before {week}"
        )
    lag_block = np.empty((len(idx_win), lags))
    for r, i in enumerate(idx_win):
        lag_block[r] = nat[i - lags : i][::-1]  # lag 1 first
    X = np.hstack([feat_win.values, lag_block])
    y = nat[idx_win]
    x_now = np.concatenate(
        [national_features.row(week), nat[idx_now - lags + 1 : idx_now + 1][::-1]]
    )
    if audit is not None:
        audit.record(week, "first_step/US", feat_win.weeks[-1], week)
    yhat = _cv_fit_predict(X, y, x_now, cfg)
    return float(np.clip(inv_logit(yhat), cfg.floor, 100.0 - cfg.floor))


def first_step_panel(
    weeks: Sequence[EpiWeek],
    state_features: Dict[str, EnrichedFeatures],
    regional_features: Dict[str, WeeklyPanel],
    national_features: WeeklyPanel,
    ili: WeeklyPanel,
    registry: GeoRegistry,
    cfg: FirstStepConfig = FirstStepConfig(),
    audit: Optional[LookaheadAudit] = None,
    progress=None,
) -> WeeklyPanel:
    """Roll the three first-step model families over ``weeks``.

    Every model is refit each week on the window ending the week before, so
    outputs for different weeks never share fitted coefficients.
    """
    columns = list(registry.states) + list(registry.regions) + [NATIONAL]
    values = np.empty((len(weeks), len(columns)))
    for i, week in enumerate(weeks):
        est = {}
        geo = NATIONAL
        try:
            for geo in registry.states:
                est[geo] = fit_state_first_step(
                    geo, state_features[geo], ili, week, cfg, registry, audit
                )
            for geo in registry.regions:
                est[geo] = fit_regional_first_step(
                    geo, regional_features[geo], ili, week, cfg, audit
                )
            geo = NATIONAL
            est[NATIONAL] = fit_national_first_step(national_features, ili, week, cfg, audit)
        except Exception as exc:
            raise PanelError(f"first step failed at ({week}, {geo}): {exc}") from exc
        values[i] = [est[c] for c in columns]
        if progress is not None:
            progress(week)
    return WeeklyPanel(weeks, columns, values)


def write_first_step_csv(panel: WeeklyPanel, path: str | Path) -> None:
    rows = [
        (w.year, w.week, c, panel.values[i, j])
        for i, w in enumerate(panel.weeks)
        for j, c in enumerate(panel.columns)
    ]
    # no float_format: shortest round-trip representation, cache is exact
    pd.DataFrame(rows, columns=["year", "week", "geo", "estimate"]).to_csv(
        path, index=False
    )


def read_first_step_csv(path: str | Path) -> WeeklyPanel:
    df = pd.read_csv(path)
    required = {"year", "week", "geo", "estimate"}
    if not required.issubset(df.columns):
        raise PanelError(f"{path}: first-step cache needs columns {sorted(required)}")
    weeks = sorted({EpiWeek(int(y), int(w)) for y, w in zip(df["year"], df["week"])})
    geos = sorted(set(df["geo"].astype(str)))
    wide = df.pivot_table(index=["year", "week"], columns="geo", values="estimate")
    wide = wide.reindex(pd.MultiIndex.from_tuples([(w.year, w.week) for w in weeks]),
                        columns=geos)
    if wide.isna().any().any():
        raise PanelError(f"{path}: first-step cache has missing cells")
    return WeeklyPanel(weeks, geos, wide.to_numpy())
