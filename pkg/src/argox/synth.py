"""Synthetic surveillance worlds for end-to-end testing.

Generates a latent logit-%ILI field with a shared seasonal cycle and a
spatially correlated AR(1) disturbance, then derives everything the real
pipeline ingests: state/regional/national %ILI files, per-geography search
volume files (noisy monotone transforms of the latent field, max-normalized
to 0..100 integers with configurable zero-inflation), and a registry.

All randomness flows from a single seed; identical configs produce
identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import pandas as pd

from .geo import NATIONAL
from .weeks import EpiWeek, week_range


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_states: int = 20
    n_weeks: int = 260
    n_regions: int = 4
    n_terms: int = 10
    n_standalone: int = 2          # marked in the registry, taken from the end
    spatial_corr: float = 0.6      # equicorrelation of weekly innovations
    search_noise: float = 0.5      # log-scale noise in search volumes
    zero_inflation: float = 0.3    # P(cell forced to 0) per state
    national_zero_inflation: float = 0.01
    ar_coef: float = 0.8
    season_amplitude: float = 0.9
    noise_scale: float = 0.5
    baseline_logit: float = -4.2   # ~1.5 %ILI
    start_year: int = 2010
    start_week: int = 40
    zero_inflation_by_state: Optional[Dict[str, float]] = None

    def state_names(self):
        return [f"S{i + 1:02d}" for i in range(self.n_states)]


@dataclass
class SynthWorld:
    config: SynthConfig
    weeks: list
    states: list
    regions: Dict[str, list]
    populations: Dict[str, float]
    ili: pd.DataFrame       # long: year, week, geo, ili_percent
    trends: Dict[str, pd.DataFrame]
    paths: Dict[str, Path] = field(default_factory=dict)


def _latent_field(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(cfg.n_weeks)
    season = cfg.season_amplitude * np.cos(2.0 * np.pi * (t - 18.0) / 52.0)
    corr = (1.0 - cfg.spatial_corr) * np.eye(cfg.n_states) + cfg.spatial_corr * np.ones(
        (cfg.n_states, cfg.n_states)
    )
    chol = np.linalg.cholesky(corr)
    u = np.zeros((cfg.n_weeks, cfg.n_states))
    innov_scale = np.sqrt(1.0 - cfg.ar_coef**2)
    u[0] = cfg.noise_scale * (chol @ rng.standard_normal(cfg.n_states))
    for i in range(1, cfg.n_weeks):
        shock = cfg.noise_scale * innov_scale * (chol @ rng.standard_normal(cfg.n_states))
        u[i] = cfg.ar_coef * u[i - 1] + shock
    return cfg.baseline_logit + season[:, None] + u


def _search_volumes(latent: np.ndarray, n_terms: int, noise: float,
                    zero_p: float, rng: np.random.Generator) -> np.ndarray:
    """Max-normalized integer volumes for one geography (weeks x terms)."""
    z = (latent - latent.mean()) / max(latent.std(), 1e-12)
    gains = rng.uniform(0.5, 1.5, size=n_terms)
    offsets = rng.normal(0.0, 0.3, size=n_terms)
    eps = rng.standard_normal((latent.shape[0], n_terms))
    raw = np.exp(offsets[None, :] + gains[None, :] * z[:, None] + noise * eps)
    vols = np.rint(100.0 * raw / raw.max(axis=0, keepdims=True))
    if zero_p > 0:
        vols[rng.random(vols.shape) < zero_p] = 0.0
    return np.clip(vols, 0.0, 100.0)


def generate_synthetic(cfg: SynthConfig, outdir: str | Path | None = None) -> SynthWorld:
    """Build one synthetic world; write its data files when outdir is given."""
    if cfg.n_states < cfg.n_regions:
        raise ValueError("need at least one state per region")
    if not 0.0 <= cfg.spatial_corr < 1.0:
        raise ValueError("spatial correlation must lie in [0, 1)")
    if cfg.search_noise < 0 or not 0.0 <= cfg.zero_inflation <= 1.0:
        raise ValueError("invalid noise or zero-inflation parameter")
    rng = np.random.default_rng(cfg.seed)
    states = cfg.state_names()
    weeks = week_range(
        EpiWeek(cfg.start_year, cfg.start_week),
        EpiWeek(cfg.start_year, cfg.start_week).add(cfg.n_weeks - 1),
    )
    regions: Dict[str, list] = {f"R{r + 1}": [] for r in range(cfg.n_regions)}
    for i, s in enumerate(states):
        regions[f"R{(i % cfg.n_regions) + 1}"].append(s)
    populations = {s: float(np.round(rng.uniform(0.5e6, 1.2e7))) for s in states}

    latent = _latent_field(cfg, rng)
    pct = 100.0 / (1.0 + np.exp(-latent))  # weeks x states

    pops = np.array([populations[s] for s in states])
    weight = pops / pops.sum()
    national_pct = pct @ weight
    regional_pct = {}
    for r, members in regions.items():
        idx = [states.index(s) for s in members]
        w = pops[idx] / pops[idx].sum()
        regional_pct[r] = pct[:, idx] @ w

    ili_rows = []
    for i, wk in enumerate(weeks):
        for j, s in enumerate(states):
            ili_rows.append((wk.year, wk.week, s, pct[i, j]))
        for r in sorted(regions, key=lambda x: int(x[1:])):
            ili_rows.append((wk.year, wk.week, r, regional_pct[r][i]))
        ili_rows.append((wk.year, wk.week, NATIONAL, national_pct[i]))
    ili = pd.DataFrame(ili_rows, columns=["year", "week", "geo", "ili_percent"])

    zero_by_state = dict(cfg.zero_inflation_by_state or {})
    terms = [f"term{k + 1:02d}" for k in range(cfg.n_terms)]
    trends: Dict[str, pd.DataFrame] = {}
    for j, s in enumerate(states):
        zp = zero_by_state.get(s, cfg.zero_inflation)
        vols = _search_volumes(latent[:, j], cfg.n_terms, cfg.search_noise, zp, rng)
        trends[s] = _volume_frame(weeks, s, terms, vols)
    national_latent = np.log(national_pct / (100.0 - national_pct))
    nat_vols = _search_volumes(
        national_latent,
        cfg.n_terms,
        cfg.search_noise / np.sqrt(cfg.n_states),
        cfg.national_zero_inflation,
        rng,
    )
    trends[NATIONAL] = _volume_frame(weeks, NATIONAL, terms, nat_vols)

    world = SynthWorld(cfg, weeks, states, regions, populations, ili, trends)
    if outdir is not None:
        world.paths = write_world(world, outdir)
    return world


def _volume_frame(weeks, geo, terms, vols) -> pd.DataFrame:
    rows = [
        (wk.year, wk.week, geo, term, int(vols[i, k]))
        for i, wk in enumerate(weeks)
        for k, term in enumerate(terms)
    ]
    return pd.DataFrame(rows, columns=["year", "week", "geo", "term", "volume"])


def write_world(world: SynthWorld, outdir: str | Path) -> Dict[str, Path]:
    outdir = Path(outdir)
    trends_dir = outdir / "trends"
    trends_dir.mkdir(parents=True, exist_ok=True)
    cfg = world.config
    paths = {"ili": outdir / "ili.csv", "registry": outdir / "registry.csv",
             "trends_dir": trends_dir}
    world.ili.to_csv(paths["ili"], index=False, float_format="%.10g")
    standalone = set(world.states[len(world.states) - cfg.n_standalone :])
    reg_rows = []
    for r in sorted(world.regions, key=lambda x: int(x[1:])):
        for s in world.regions[r]:
            reg_rows.append((s, r, int(world.populations[s]), int(s in standalone)))
    pd.DataFrame(reg_rows, columns=["geo", "region", "population", "standalone"]).sort_values(
        "geo"
    ).to_csv(paths["registry"], index=False)
    for geo, frame in world.trends.items():
        frame.to_csv(trends_dir / f"{geo}.csv", index=False)
    return paths
