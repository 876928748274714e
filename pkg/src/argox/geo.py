"""Geography registry: state-level units, HHS regions, populations.

The registry is a data file rather than hard-coded tables so synthetic
panels with arbitrary geography counts can reuse the whole pipeline. The
real US configuration (51 state-level units = 50 states minus FL, plus DC
and NYC; 10 HHS regions; national unit "US") ships as a package asset.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, List

NATIONAL = "US"

US_STATE_CODES = frozenset(
    """AL AK AZ AR CA CO CT DE DC FL GA HI ID IL IN IA KS KY LA ME MD MA MI MN
    MS MO MT NE NV NH NJ NM NY NYC NC ND OH OK OR PA RI SC SD TN TX UT VT VA
    WA WV WI WY""".split()
)

# FL reports no state-level ILI and is excluded from every panel.
EXCLUDED_GEOS = frozenset({"FL"})

# Non-contiguous units are always modeled stand-alone regardless of routing.
NONCONTIGUOUS = frozenset({"HI", "AK"})

_REGION_RE = re.compile(r"^R([1-9][0-9]*)$")


class RegistryError(ValueError):
    """Raised when a registry file violates its invariants."""


@dataclass(frozen=True)
class GeoRegistry:
    """Immutable mapping of state-level geographies to regions and weights."""

    region_of: Dict[str, str]
    population: Dict[str, float]
    standalone: FrozenSet[str]

    states: tuple = field(init=False)
    regions: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(sorted(self.region_of)))
        object.__setattr__(
            self,
            "regions",
            tuple(sorted(set(self.region_of.values()), key=_region_number)),
        )

    @property
    def all_geos(self) -> List[str]:
        """States, then regions, then the national unit."""
        return list(self.states) + list(self.regions) + [NATIONAL]

    def region_members(self, region: str) -> List[str]:
        """State-level members of one region, sorted by code."""
        if region not in self.regions:
            raise RegistryError(f"unknown region {region!r}")
        return [s for s in self.states if self.region_of[s] == region]

    def connected_states(self) -> List[str]:
        """States pooled by the joint second step (everything not stand-alone)."""
        return [s for s in self.states if s not in self.standalone]

    def with_standalone(self, standalone: FrozenSet[str]) -> "GeoRegistry":
        unknown = set(standalone) - set(self.states)
        if unknown:
            raise RegistryError(f"stand-alone set names unknown geographies {sorted(unknown)}")
        return GeoRegistry(dict(self.region_of), dict(self.population), frozenset(standalone))


def _region_number(code: str) -> int:
    m = _REGION_RE.match(code)
    return int(m.group(1)) if m else 0


def load_registry(path: str | Path, full_us: bool | None = None) -> GeoRegistry:
    """Load a ``geo,region,population,standalone`` CSV into a registry.

    ``full_us=None`` auto-detects: if every geography code is a real US code,
    the file must contain the complete 51-unit configuration. Pass False to
    allow a deliberate US subset, True to force the check.
    """
    region_of: Dict[str, str] = {}
    population: Dict[str, float] = {}
    standalone = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"geo", "region", "population", "standalone"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise RegistryError(f"registry must have columns {sorted(required)}")
        for row in reader:
            geo = row["geo"].strip()
            if geo in EXCLUDED_GEOS:
                raise RegistryError(f"excluded geography {geo} (no ILI data)")
            if geo in region_of:
                raise RegistryError(f"duplicate geography {geo}")
            region = row["region"].strip()
            if not _REGION_RE.match(region):
                raise RegistryError(f"unknown region {region!r} for {geo} (expected R<k>)")
            pop = float(row["population"])
            if not pop > 0:
                raise RegistryError(f"non-positive population for {geo}")
            region_of[geo] = region
            population[geo] = pop
            if row["standalone"].strip() not in {"0", "1"}:
                raise RegistryError(f"standalone flag for {geo} must be 0 or 1")
            if row["standalone"].strip() == "1":
                standalone.add(geo)
    if not region_of:
        raise RegistryError("registry file is empty")

    if full_us is None:
        full_us = set(region_of) <= US_STATE_CODES
    if full_us:
        expected = US_STATE_CODES - EXCLUDED_GEOS
        missing = expected - set(region_of)
        extra = set(region_of) - expected
        if missing or extra:
            raise RegistryError(
                f"US registry must list exactly the 51 state-level geographies; "
                f"missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        if region_of["NYC"] != region_of["NY"]:
            raise RegistryError("NYC must share NY's HHS region")
    return GeoRegistry(region_of, population, frozenset(standalone))


def default_registry() -> GeoRegistry:
    """The shipped US configuration (51 units, 10 HHS regions)."""
    asset = resources.files("argox").joinpath("data/us_registry.csv")
    with resources.as_file(asset) as path:
        return load_registry(path, full_us=True)


def write_registry(registry: GeoRegistry, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["geo", "region", "population", "standalone"])
        for geo in registry.states:
            writer.writerow(
                [
                    geo,
                    registry.region_of[geo],
                    f"{registry.population[geo]:g}",
                    int(geo in registry.standalone),
                ]
            )
