"""Weekly panel container plus ingestion and transform operations.

Two kinds of panels flow through the pipeline: %ILI panels (percent units,
one column per geography) and search-volume panels (integers 0..100, one
column per query term, one panel per geography). Zero search volume is
Google's own encoding for below-threshold activity, so zeros are data, not
missingness.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np
import pandas as pd

from .geo import EXCLUDED_GEOS, GeoRegistry, NATIONAL
from .weeks import EpiWeek, week_range


class PanelError(ValueError):
    """Raised for malformed panel files or out-of-range values."""


class WeeklyPanel:
    """A week-indexed matrix of named series.

    Rows are consecutive-or-not epidemiological weeks in strictly increasing
    order; columns are geography codes or query terms. Values are float64.
    Immutable by convention: operations return new panels.
    """

    def __init__(self, weeks: Sequence[EpiWeek], columns: Sequence[str], values: np.ndarray):
        weeks = [EpiWeek(*w) for w in weeks]
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(weeks), len(columns)):
            raise PanelError(
                f"values shape {values.shape} does not match "
                f"{len(weeks)} weeks x {len(columns)} columns"
            )
        for a, b in zip(weeks, weeks[1:]):
            if not a < b:
                raise PanelError(f"week index not strictly increasing at {a} -> {b}")
        self.weeks: List[EpiWeek] = weeks
        self.columns: List[str] = list(columns)
        self.values: np.ndarray = values
        self._row: Dict[EpiWeek, int] = {w: i for i, w in enumerate(weeks)}
        self._col: Dict[str, int] = {c: j for j, c in enumerate(self.columns)}
        self.values.setflags(write=False)

    # -- basic access -----------------------------------------------------

    def __contains__(self, week: EpiWeek) -> bool:
        return week in self._row

    def row_of(self, week: EpiWeek) -> int:
        try:
            return self._row[week]
        except KeyError:
            raise PanelError(f"week {week} not in panel") from None

    def col_of(self, column: str) -> int:
        try:
            return self._col[column]
        except KeyError:
            raise PanelError(f"column {column!r} not in panel") from None

    def at(self, week: EpiWeek, column: str) -> float:
        return float(self.values[self.row_of(week), self.col_of(column)])

    def row(self, week: EpiWeek, columns: Sequence[str] | None = None) -> np.ndarray:
        r = self.values[self.row_of(week)]
        if columns is None:
            return r.copy()
        return r[[self.col_of(c) for c in columns]].copy()

    def series(self, column: str) -> np.ndarray:
        return self.values[:, self.col_of(column)].copy()

    def select(self, columns: Sequence[str]) -> "WeeklyPanel":
        idx = [self.col_of(c) for c in columns]
        return WeeklyPanel(self.weeks, list(columns), self.values[:, idx])

    def window_before(self, week: EpiWeek, n: int) -> "WeeklyPanel":
        """The n rows strictly before ``week`` (which must be in the index)."""
        r = self.row_of(week)
        if r < n:
            raise PanelError(f"only {r} weeks of history before {week}, need {n}")
        return WeeklyPanel(self.weeks[r - n : r], self.columns, self.values[r - n : r])

    def through(self, week: EpiWeek) -> "WeeklyPanel":
        r = self.row_of(week)
        return WeeklyPanel(self.weeks[: r + 1], self.columns, self.values[: r + 1])

    def is_contiguous(self) -> bool:
        return all(a.next() == b for a, b in zip(self.weeks, self.weeks[1:]))

    def reindex_weeks(self, weeks: Sequence[EpiWeek], fill: float = 0.0) -> "WeeklyPanel":
        out = np.full((len(weeks), len(self.columns)), fill, dtype=np.float64)
        for i, w in enumerate(weeks):
            j = self._row.get(w)
            if j is not None:
                out[i] = self.values[j]
        return WeeklyPanel(weeks, self.columns, out)

    def to_frame(self) -> pd.DataFrame:
        index = pd.MultiIndex.from_tuples(
            [(w.year, w.week) for w in self.weeks], names=["year", "week"]
        )
        return pd.DataFrame(self.values.copy(), index=index, columns=self.columns)

    def __repr__(self) -> str:
        span = f"{self.weeks[0]}..{self.weeks[-1]}" if self.weeks else "empty"
        return f"WeeklyPanel({span}, {len(self.columns)} columns)"


# -- ingestion -------------------------------------------------------------


def _read_csv(path: str | Path, required: set) -> pd.DataFrame:
    df = pd.read_csv(path)
    missing = required - set(df.columns)
    if missing:
        raise PanelError(f"{path}: missing columns {sorted(missing)}")
    return df


def _week_index(df: pd.DataFrame, path) -> List[EpiWeek]:
    pairs = sorted(set(zip(df["year"].astype(int), df["week"].astype(int))))
    try:
        return [EpiWeek(y, w).validate() for y, w in pairs]
    except ValueError as exc:
        raise PanelError(f"{path}: {exc}") from None


def parse_ili_csv(path: str | Path, registry: GeoRegistry | None = None) -> WeeklyPanel:
    """Parse a ``year,week,geo,ili_percent`` file into one panel.

    Every (week, geo) cell must be present: CDC reports are complete, and a
    silent gap would corrupt the increment targets downstream. Values are
    percents in [0, 100).
    """
    df = _read_csv(path, {"year", "week", "geo", "ili_percent"})
    if df.empty:
        raise PanelError(f"{path}: no rows")
    bad_geo = set(df["geo"].astype(str)) & EXCLUDED_GEOS
    if bad_geo:
        raise PanelError(f"{path}: excluded geography {sorted(bad_geo)} present")
    if registry is not None:
        known = set(registry.states) | set(registry.regions) | {NATIONAL}
        unknown = set(df["geo"].astype(str)) - known
        if unknown:
            raise PanelError(f"{path}: unknown geographies {sorted(unknown)}")
    vals = pd.to_numeric(df["ili_percent"], errors="coerce")
    if vals.isna().any():
        rows = df.loc[vals.isna()].head(3)
        raise PanelError(f"{path}: non-numeric ili_percent, e.g. {rows.to_dict('records')}")
    if ((vals < 0) | (vals >= 100)).any():
        bad = df.loc[(vals < 0) | (vals >= 100)].head(3)
        raise PanelError(f"{path}: ili_percent outside [0, 100), e.g. {bad.to_dict('records')}")
    weeks = _week_index(df, path)
    geos = sorted(set(df["geo"].astype(str)))
    wide = df.pivot_table(index=["year", "week"], columns="geo", values="ili_percent")
    wide = wide.reindex(
        pd.MultiIndex.from_tuples([(w.year, w.week) for w in weeks]), columns=geos
    )
    if wide.isna().any().any():
        holes = [
            (int(y), int(w), g)
            for (y, w), row in wide.iterrows()
            for g in wide.columns[row.isna()]
        ]
        raise PanelError(f"{path}: missing %ILI cells, e.g. {holes[:3]}")
    return WeeklyPanel(weeks, geos, wide.to_numpy())


def parse_trends_csv(path: str | Path) -> Dict[str, WeeklyPanel]:
    """Parse a ``year,week,geo,term,volume`` file into one panel per geography.

    Weeks missing inside a geography's span are filled with 0 (Google's own
    encoding for inadequate volume). Volumes must lie in [0, 100].
    """
    df = _read_csv(path, {"year", "week", "geo", "term", "volume"})
    if df.empty:
        raise PanelError(f"{path}: no rows")
    vols = pd.to_numeric(df["volume"], errors="coerce")
    if vols.isna().any():
        raise PanelError(f"{path}: non-numeric volume")
    if ((vols < 0) | (vols > 100)).any():
        bad = df.loc[(vols < 0) | (vols > 100)].head(3)
        raise PanelError(f"{path}: volume outside [0, 100], e.g. {bad.to_dict('records')}")
    out: Dict[str, WeeklyPanel] = {}
    for geo, sub in df.groupby(df["geo"].astype(str)):
        weeks = _week_index(sub, path)
        full = week_range(weeks[0], weeks[-1])
        terms = sorted(set(sub["term"].astype(str)))
        wide = sub.pivot_table(index=["year", "week"], columns="term", values="volume")
        wide = wide.reindex(
            pd.MultiIndex.from_tuples([(w.year, w.week) for w in full]), columns=terms
        ).fillna(0.0)
        out[geo] = WeeklyPanel(full, terms, wide.to_numpy())
    return out


def load_trends_dir(directory: str | Path) -> Dict[str, WeeklyPanel]:
    """Ingest every ``*.csv`` under a directory and merge by geography."""
    directory = Path(directory)
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise PanelError(f"no CSV files under {directory}")
    merged: Dict[str, WeeklyPanel] = {}
    for f in files:
        for geo, panel in parse_trends_csv(f).items():
            if geo in merged:
                raise PanelError(f"geography {geo} appears in more than one trends file")
            merged[geo] = panel
    return merged


def write_panel_csv(panel: WeeklyPanel, path: str | Path, value_name: str, key_name: str) -> None:
    """Serialize a panel to long ``year,week,<key>,<value>`` rows."""
    rows = []
    for i, w in enumerate(panel.weeks):
        for j, c in enumerate(panel.columns):
            rows.append((w.year, w.week, c, panel.values[i, j]))
    df = pd.DataFrame(rows, columns=["year", "week", key_name, value_name])
    df.to_csv(path, index=False, float_format="%.12g")


# -- transforms ------------------------------------------------------------


def log1p_features(panel: WeeklyPanel) -> WeeklyPanel:
    """Map every volume x to ln(1 + x); rejects negative inputs."""
    if (panel.values < 0).any():
        raise PanelError("negative value passed to log1p transform")
    return WeeklyPanel(panel.weeks, panel.columns, np.log1p(panel.values))


def logit(p, floor: float | None = None):
    """Logit of a percent in (0, 100); optionally clamp into [floor, 100-floor] first.

    Scalar in, scalar out; arrays pass through elementwise.
    """
    p = np.asarray(p, dtype=np.float64)
    if floor is not None:
        p = np.clip(p, floor, 100.0 - floor)
    if np.any(p <= 0) or np.any(p >= 100):
        raise ValueError("logit requires percent values strictly inside (0, 100)")
    q = p / 100.0
    out = np.log(q / (1.0 - q))
    return float(out) if out.ndim == 0 else out


def inv_logit(y):
    """Exact inverse of :func:`logit`, returning percents in (0, 100)."""
    y = np.asarray(y, dtype=np.float64)
    out = 100.0 / (1.0 + np.exp(-y))
    return float(out) if out.ndim == 0 else out


def zero_fraction_report(panels: Dict[str, WeeklyPanel]) -> Dict[str, float]:
    """Fraction of zero cells per geography in raw search panels.

    High zero fractions flag geographies whose search data carry little
    signal; the national panel should sit near zero.
    """
    out = {}
    for geo, panel in panels.items():
        if panel.values.size == 0:
            raise PanelError(f"empty search panel for {geo}")
        out[geo] = float(np.mean(panel.values == 0))
    return out
