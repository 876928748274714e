import numpy as np
import pytest

from argox.geo import GeoRegistry
from argox.panels import WeeklyPanel
from argox.weeks import EpiWeek, week_range


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240317)


@pytest.fixture
def small_registry():
    """Three-state, two-region toy registry with one stand-alone state."""
    return GeoRegistry(
        region_of={"S01": "R1", "S02": "R1", "S03": "R2"},
        population={"S01": 1e6, "S02": 3e6, "S03": 2e6},
        standalone=frozenset({"S03"}),
    )


def make_panel(start, n_weeks, columns, values):
    weeks = week_range(start, start.add(n_weeks - 1))
    return WeeklyPanel(weeks, columns, np.asarray(values, dtype=float))


@pytest.fixture
def week0():
    return EpiWeek(2014, 40)


def random_psd(rng, m, scale=1.0):
    """Random symmetric positive definite matrix (independent construction)."""
    a = rng.standard_normal((m, m + 3))
    return scale * (a @ a.T) / (m + 3) + 1e-6 * np.eye(m)


def simulate_structured_world(rng, target_cov, err_state, err_regional, err_national,
                              rho, n_weeks):
    """Draw (targets, stacks, error panels) exactly from the assumed structure.

    The increment process is a stationary vector AR(1) with lag-one
    autocovariance rho * target_cov; the three per-resolution error series
    are independent Gaussians. Stacks follow the fixed block layout.
    """
    m = target_cov.shape[0]
    chol_s = np.linalg.cholesky(target_cov)
    chol_innov = np.linalg.cholesky((1.0 - rho**2) * target_cov)
    chols_err = [np.linalg.cholesky(e + 1e-14 * np.eye(m))
                 for e in (err_state, err_regional, err_national)]
    z = np.empty((n_weeks + 1, m))
    z[0] = chol_s @ rng.standard_normal(m)
    for t in range(1, n_weeks + 1):
        z[t] = rho * z[t - 1] + chol_innov @ rng.standard_normal(m)
    errors = [c @ rng.standard_normal((m, n_weeks)) for c in chols_err]
    errors = [e.T for e in errors]
    targets = z[1:]
    stacks = np.hstack(
        [z[:-1], targets + errors[0], targets + errors[1], targets + errors[2]]
    )
    return targets, stacks, errors[0], errors[1], errors[2]
