"""Decide which states are modeled stand-alone.

A state whose %ILI history cannot be explained by the other states, the
other regions, and the national series gains nothing from cross-state
pooling. The decision statistic is the R-squared of an OLS regression of
the state's %ILI on all of those series over a fixed in-sample period;
the non-contiguous states are set apart unconditionally and the five
lowest-R2 contiguous states join them. The result is frozen for the whole
backtest and written to disk so later runs need not carry the in-sample
data.
"""

from __future__ import annotations

import warnings
from pathlib import Path
from typing import Dict, FrozenSet

import numpy as np
import pandas as pd

from .geo import NATIONAL, NONCONTIGUOUS, GeoRegistry
from .panels import WeeklyPanel

STANDALONE_COUNT = 5  # lowest-R2 contiguous states to set apart


def multiple_correlation_r2(
    geo: str, ili: WeeklyPanel, registry: GeoRegistry
) -> float:
    """R2 of regressing one state's %ILI on every other pooled series.

    Predictors: the other contiguous states (non-contiguous ones are out of
    the candidate pool entirely), the nine other regions, and the national
    series, plus an intercept. Rank-deficient designs fall back to the
    minimum-norm least-squares solution.
    """
    others = [
        s for s in registry.states if s != geo and s not in NONCONTIGUOUS
    ]
    other_regions = [r for r in registry.regions if r != registry.region_of[geo]]
    predictors = others + other_regions + [NATIONAL]
    y = ili.series(geo)
    X = np.column_stack([np.ones(len(y))] + [ili.series(c) for c in predictors])
    if X.shape[0] <= X.shape[1]:
        warnings.warn(
            f"multiple-correlation design for {geo} has {X.shape[0]} rows for "
            f"{X.shape[1]} columns; R2 uses the minimum-norm solution",
            RuntimeWarning,
        )
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        warnings.warn(
            f"rank-deficient multiple-correlation design for {geo} "
            f"(rank {rank} < {X.shape[1]}); using pseudo-inverse solution",
            RuntimeWarning,
        )
    resid = y - X @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 0.0
    return float(1.0 - np.sum(resid**2) / ss_tot)


def routing_table(ili: WeeklyPanel, registry: GeoRegistry) -> pd.DataFrame:
    """R2 per contiguous state plus the final stand-alone selection flags."""
    candidates = [s for s in registry.states if s not in NONCONTIGUOUS]
    r2 = {g: multiple_correlation_r2(g, ili, registry) for g in candidates}
    chosen = select_standalone(r2, registry)
    rows = []
    for g in registry.states:
        rows.append(
            {
                "geo": g,
                "r2": r2.get(g, np.nan),
                "selected": int(g in chosen),
            }
        )
    return pd.DataFrame(rows)


def select_standalone(r2: Dict[str, float], registry: GeoRegistry) -> FrozenSet[str]:
    """Non-contiguous states plus the five lowest-R2 contiguous candidates.

    Ties break lexicographically by geography code.
    """
    candidates = [g for g in r2 if g in registry.region_of and g not in NONCONTIGUOUS]
    if len(candidates) < STANDALONE_COUNT:
        raise ValueError(
            f"need at least {STANDALONE_COUNT} contiguous candidates, "
            f"got {len(candidates)}"
        )
    ranked = sorted(candidates, key=lambda g: (r2[g], g))
    always = NONCONTIGUOUS & set(registry.states)
    return frozenset(always | set(ranked[:STANDALONE_COUNT]))


def write_routing_csv(table: pd.DataFrame, path: str | Path) -> None:
    table.to_csv(path, index=False, float_format="%.12g")


def read_routing_csv(path: str | Path) -> FrozenSet[str]:
    df = pd.read_csv(path)
    required = {"geo", "selected"}
    if not required.issubset(df.columns):
        raise ValueError(f"{path}: routing file needs columns {sorted(required)}")
    return frozenset(df.loc[df["selected"] == 1, "geo"].astype(str))
