"""Regional enrichment of state-level search volumes.

State-level search panels are sparse; blending each state's raw volumes
with a population-weighted regional reconstruction (2/3 state, 1/3 region)
recovers signal before the log transform. Stand-alone states keep their raw
series untouched.

Blending happens on raw 0..100 volumes; the log1p transform comes after.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .geo import GeoRegistry
from .panels import PanelError, WeeklyPanel
from .weeks import EpiWeek

STATE_WEIGHT = 2.0 / 3.0
REGION_WEIGHT = 1.0 / 3.0


@dataclass(frozen=True)
class EnrichedFeatures:
    """Per-state search panel after (or deliberately without) blending."""

    panel: WeeklyPanel
    enriched: bool


def _union_terms(panels: Sequence[WeeklyPanel]) -> List[str]:
    terms: List[str] = []
    seen = set()
    for p in panels:
        for t in p.columns:
            if t not in seen:
                seen.add(t)
                terms.append(t)
    return sorted(terms)


def reconstruct_regional_series(
    state_panels: Dict[str, WeeklyPanel],
    registry: GeoRegistry,
    weeks: Sequence[EpiWeek],
) -> Dict[str, WeeklyPanel]:
    """Population-weighted average of member-state volumes, per region.

    Terms absent at a member state count as zero series, consistent with the
    zero-as-missing volume encoding. Weights are pop_s / sum(pop) over the
    member states present in ``state_panels``.
    """
    out: Dict[str, WeeklyPanel] = {}
    for region in registry.regions:
        members = [s for s in registry.region_members(region) if s in state_panels]
        if not members:
            raise PanelError(f"region {region} has no member state with search data")
        terms = _union_terms([state_panels[s] for s in members])
        pops = np.array([registry.population[s] for s in members])
        weights = pops / pops.sum()
        acc = np.zeros((len(weeks), len(terms)))
        for w_s, s in zip(weights, members):
            panel = state_panels[s].reindex_weeks(weeks, fill=0.0)
            cols = {t: j for j, t in enumerate(panel.columns)}
            for j, t in enumerate(terms):
                if t in cols:
                    acc[:, j] += w_s * panel.values[:, cols[t]]
        out[region] = WeeklyPanel(weeks, terms, acc)
    return out


def blend_state_regional(
    state_panel: WeeklyPanel,
    region_panel: WeeklyPanel,
    geo: str,
    registry: GeoRegistry,
) -> EnrichedFeatures:
    """2/3 state + 1/3 region per term and week; stand-alone states pass through raw."""
    if geo in registry.standalone:
        return EnrichedFeatures(state_panel, enriched=False)
    if state_panel.weeks != region_panel.weeks:
        raise PanelError(f"state and regional panels misaligned for {geo}")
    terms = _union_terms([state_panel, region_panel])
    blended = np.zeros((len(state_panel.weeks), len(terms)))
    s_cols = {t: j for j, t in enumerate(state_panel.columns)}
    r_cols = {t: j for j, t in enumerate(region_panel.columns)}
    for j, t in enumerate(terms):
        s = state_panel.values[:, s_cols[t]] if t in s_cols else 0.0
        r = region_panel.values[:, r_cols[t]] if t in r_cols else 0.0
        blended[:, j] = STATE_WEIGHT * s + REGION_WEIGHT * r
    return EnrichedFeatures(WeeklyPanel(state_panel.weeks, terms, blended), enriched=True)


def enrich_all_states(
    state_panels: Dict[str, WeeklyPanel],
    registry: GeoRegistry,
    weeks: Sequence[EpiWeek],
    enabled: bool = True,
) -> Dict[str, EnrichedFeatures]:
    """Blend every state's raw volumes with its region; reusable ablation switch."""
    aligned = {s: p.reindex_weeks(weeks, fill=0.0) for s, p in state_panels.items()}
    if not enabled:
        return {s: EnrichedFeatures(p, enriched=False) for s, p in aligned.items()}
    regional = reconstruct_regional_series(state_panels, registry, weeks)
    out: Dict[str, EnrichedFeatures] = {}
    for s, panel in aligned.items():
        if s not in registry.region_of:
            raise PanelError(f"search panel for unknown geography {s}")
        out[s] = blend_state_regional(panel, regional[registry.region_of[s]], s, registry)
    return out
