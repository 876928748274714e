"""Second step: pool multi-resolution estimates through a structured BLP.

The weekly target is the vector of %ILI increments. Four predictor blocks
are stacked per geography: last week's increment, and the state, regional,
and national first-step estimates each expressed as an increment over last
week's %ILI. Their joint covariance is not estimated freely (4m x 4m from
~104 weeks would be hopeless); it is assembled from a small set of
components under two assumptions: stationary increments with a single
lag-one autocorrelation, and independence between the increment process
and each resolution's estimation error.

A ridge-inspired shrinkage (averaging the structured covariance with its
empirical diagonal) stabilizes the solve; the half factors cancel so the
predictor equals using (cov + diag) unhalved, an identity the tests pin.

Stand-alone states skip cross-state pooling entirely: a scalar version of
the same predictor runs on (own increment, own search estimate, national
estimate) with fully empirical moments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .geo import GeoRegistry
from .linalg import ShrunkBlp, build_shrunk_blp, condition_number, factor_spd
from .panels import PanelError, WeeklyPanel
from .weeks import EpiWeek

STACK_BLOCKS = 4
PERCENT_FLOOR = 0.01
RHO_EDGE = 1e-6
RHO_GRID = 64
RHO_TOL = 1e-6
Z95 = 1.96


class SecondStepError(ValueError):
    pass


class Estimate(NamedTuple):
    point: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


# -- targets and predictor stacks -------------------------------------------


def build_increments(ili: WeeklyPanel, geos: Sequence[str]) -> WeeklyPanel:
    """Week-over-week %ILI differences; requires a gap-free week index."""
    if not ili.is_contiguous():
        raise PanelError("increment targets need consecutive weeks")
    if len(ili.weeks) < 2:
        raise PanelError("need at least two weeks to difference")
    sub = ili.select(list(geos))
    return WeeklyPanel(sub.weeks[1:], sub.columns, np.diff(sub.values, axis=0))


def build_predictor_stack(
    week: EpiWeek,
    ili: WeeklyPanel,
    first_step: WeeklyPanel,
    registry: GeoRegistry,
    geos: Sequence[str],
) -> np.ndarray:
    """Stack the four predictor blocks for one week, in fixed block order.

    Regional and national estimates are broadcast to the member states.
    """
    prev_w = week.prev()
    prev2_w = prev_w.prev()
    p_prev = ili.row(prev_w, geos)
    p_prev2 = ili.row(prev2_w, geos)
    fs_now = first_step.row(week)
    cols = {c: j for j, c in enumerate(first_step.columns)}
    state = np.array([fs_now[cols[g]] for g in geos])
    regional = np.array([fs_now[cols[registry.region_of[g]]] for g in geos])
    national = np.full(len(geos), fs_now[cols["US"]])
    return np.concatenate(
        [p_prev - p_prev2, state - p_prev, regional - p_prev, national - p_prev]
    )


# -- component moments -------------------------------------------------------


@dataclass(frozen=True)
class ComponentMoments:
    """Window moments feeding the structured covariance."""

    mean_target: np.ndarray       # mean increment, length m
    mean_stack: np.ndarray        # mean predictor stack, length 4m
    target_cov: np.ndarray        # m x m increment covariance
    err_state_cov: np.ndarray     # m x m state-estimate error covariance
    err_regional_cov: np.ndarray  # m x m regional broadcast error covariance
    err_national_cov: np.ndarray  # m x m national broadcast error covariance
    stack_diag: np.ndarray        # empirical stack variances, length 4m
    joint_corr: np.ndarray        # empirical correlation of (target, stack)


def _sample_cov(a: np.ndarray) -> np.ndarray:
    return np.atleast_2d(np.cov(a, rowvar=False, ddof=1))


def _safe_corr(cov: np.ndarray) -> np.ndarray:
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    ok = sd > 0
    denom = np.where(ok, sd, 1.0)
    corr = cov / np.outer(denom, denom)
    corr[~ok, :] = 0.0
    corr[:, ~ok] = 0.0
    np.fill_diagonal(corr, 1.0)
    return corr


def estimate_components(
    targets: np.ndarray,
    stacks: np.ndarray,
    state_errors: np.ndarray,
    regional_errors: np.ndarray,
    national_errors: np.ndarray,
) -> ComponentMoments:
    """Sample means and covariances over one training window.

    Error covariances are taken around their own sample means, consistent
    with the mean-centered predictor.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    stacks = np.atleast_2d(np.asarray(stacks, dtype=np.float64))
    n, m = targets.shape
    if n < 2:
        raise SecondStepError(f"need >= 2 window observations, got {n}")
    if stacks.shape != (n, STACK_BLOCKS * m):
        raise SecondStepError(
            f"stack shape {stacks.shape} does not match {n} x {STACK_BLOCKS * m}"
        )
    joint = np.hstack([targets, stacks])
    return ComponentMoments(
        mean_target=targets.mean(axis=0),
        mean_stack=stacks.mean(axis=0),
        target_cov=_sample_cov(targets),
        err_state_cov=_sample_cov(state_errors),
        err_regional_cov=_sample_cov(regional_errors),
        err_national_cov=_sample_cov(national_errors),
        stack_diag=stacks.var(axis=0, ddof=1),
        joint_corr=_safe_corr(_sample_cov(joint)),
    )


# -- structured covariance ----------------------------------------------------


def assemble_structured_cov(
    target_cov: np.ndarray,
    err_state_cov: np.ndarray,
    err_regional_cov: np.ndarray,
    err_national_cov: np.ndarray,
    rho: float,
) -> tuple:
    """Cross and stack covariance under the stationarity/independence structure.

    cross = [rho*S | S | S | S]; the stack is a 4x4 block matrix whose first
    row/column off-diagonal blocks are rho*S, whose remaining off-diagonal
    blocks are S, and whose diagonal is (S, S+E_state, S+E_reg, S+E_nat).
    """
    s = np.asarray(target_cov, dtype=np.float64)
    m = s.shape[0]
    for name, e in (("state", err_state_cov), ("regional", err_regional_cov),
                    ("national", err_national_cov)):
        if np.shape(e) != (m, m):
            raise SecondStepError(f"{name} error covariance must be {m}x{m}")
    rs = rho * s
    cross = np.hstack([rs, s, s, s])
    stack = np.block(
        [
            [s, rs, rs, rs],
            [rs, s + err_state_cov, s, s],
            [rs, s, s + err_regional_cov, s],
            [rs, s, s, s + err_national_cov],
        ]
    )
    return cross, stack


def structured_joint_corr(
    target_cov, err_state_cov, err_regional_cov, err_national_cov, rho: float
) -> np.ndarray:
    """Correlation matrix of (target, stack) implied by the structure."""
    cross, stack = assemble_structured_cov(
        target_cov, err_state_cov, err_regional_cov, err_national_cov, rho
    )
    joint = np.block([[np.atleast_2d(target_cov), cross], [cross.T, stack]])
    return _safe_corr(joint)


def estimate_rho(
    empirical_corr: np.ndarray,
    target_cov: np.ndarray,
    err_state_cov: np.ndarray,
    err_regional_cov: np.ndarray,
    err_national_cov: np.ndarray,
) -> float:
    """Autocorrelation minimizing the Frobenius gap to the empirical correlation.

    The objective is not assumed unimodal: a 64-point grid scan brackets the
    best region first, then golden-section search refines to 1e-6.
    """

    def objective(rho: float) -> float:
        diff = structured_joint_corr(
            target_cov, err_state_cov, err_regional_cov, err_national_cov, rho
        ) - empirical_corr
        return float(np.linalg.norm(diff))

    grid = np.linspace(RHO_EDGE, 1.0 - RHO_EDGE, RHO_GRID)
    values = [objective(r) for r in grid]
    k = int(np.argmin(values))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, RHO_GRID - 1)]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = objective(c), objective(d)
    while b - a > RHO_TOL:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = objective(d)
    return float(np.clip((a + b) / 2.0, RHO_EDGE, 1.0 - RHO_EDGE))


# -- predictors ---------------------------------------------------------------


def _clamp_percent(p: np.ndarray, floor: float) -> np.ndarray:
    return np.clip(p, floor, 100.0 - floor)


class JointSecondStep(BaseEstimator):
    """Structured-covariance shrunk BLP over the connected geographies.

    fit() consumes aligned window matrices (rows = weeks): increments,
    predictor stacks, and the three per-resolution error panels. predict()
    turns one week's stack plus last week's %ILI into point estimates with
    95% intervals.
    """

    def __init__(self, floor: float = PERCENT_FLOOR):
        self.floor = floor

    def fit(self, targets, stacks, state_errors, regional_errors, national_errors):
        comps = estimate_components(
            targets, stacks, state_errors, regional_errors, national_errors
        )
        rho = estimate_rho(
            comps.joint_corr,
            comps.target_cov,
            comps.err_state_cov,
            comps.err_regional_cov,
            comps.err_national_cov,
        )
        cross, stack_cov = assemble_structured_cov(
            comps.target_cov,
            comps.err_state_cov,
            comps.err_regional_cov,
            comps.err_national_cov,
            rho,
        )
        blp = build_shrunk_blp(
            comps.mean_target,
            comps.mean_stack,
            comps.target_cov,
            cross,
            stack_cov,
            comps.stack_diag,
        )
        self.components_ = comps
        self.rho_ = rho
        self.cross_cov_ = cross
        self.stack_cov_ = stack_cov
        self.blp_: ShrunkBlp = blp
        self.jitter_ = blp.system.jitter
        self.condition_ = condition_number(0.5 * stack_cov + 0.5 * np.diag(comps.stack_diag))
        self.n_geos_ = comps.mean_target.shape[0]
        return self

    def predict(self, stack_now: np.ndarray, prev_ili: np.ndarray) -> Estimate:
        stack_now = np.asarray(stack_now, dtype=np.float64)
        prev_ili = np.asarray(prev_ili, dtype=np.float64)
        point = _clamp_percent(prev_ili + self.blp_.point(stack_now), self.floor)
        half = self.blp_.halfwidth(Z95)
        return Estimate(point, point - half, point + half)


class StandaloneSecondStep(BaseEstimator):
    """Scalar pooled predictor for one isolated state.

    The 3-long stack is (own last increment, own search estimate minus last
    %ILI, national estimate minus last %ILI); all moments are plain sample
    moments, and the same half/half diagonal shrinkage and jitter policy
    apply as in the joint model.
    """

    def __init__(self, floor: float = PERCENT_FLOOR):
        self.floor = floor

    def fit(self, targets, stacks):
        targets = np.asarray(targets, dtype=np.float64).ravel()
        stacks = np.atleast_2d(np.asarray(stacks, dtype=np.float64))
        n = targets.shape[0]
        if n < 2:
            raise SecondStepError(f"need >= 2 window observations, got {n}")
        if stacks.shape != (n, 3):
            raise SecondStepError(f"stand-alone stacks must be {n}x3, got {stacks.shape}")
        self.mean_target_ = float(targets.mean())
        self.mean_stack_ = stacks.mean(axis=0)
        self.target_var_ = float(targets.var(ddof=1))
        centered_t = targets - self.mean_target_
        centered_s = stacks - self.mean_stack_
        self.cross_cov_ = centered_t @ centered_s / (n - 1)        # 1x3 row
        self.stack_cov_ = _sample_cov(stacks)
        self.stack_diag_ = np.diag(np.diag(self.stack_cov_))
        self._system = factor_spd(0.5 * self.stack_cov_ + 0.5 * self.stack_diag_)
        self.jitter_ = self._system.jitter
        solved = self._system.solve(0.5 * self.cross_cov_)
        self.error_var_ = max(self.target_var_ - float(0.5 * self.cross_cov_ @ solved), 0.0)
        return self

    def predict(self, stack_now: np.ndarray, prev_ili: float) -> Estimate:
        stack_now = np.asarray(stack_now, dtype=np.float64).ravel()
        incr = self.mean_target_ + float(
            0.5 * self.cross_cov_ @ self._system.solve(stack_now - self.mean_stack_)
        )
        point = float(_clamp_percent(np.asarray(prev_ili + incr), self.floor))
        half = Z95 * np.sqrt(self.error_var_)
        return Estimate(np.array([point]), np.array([point - half]), np.array([point + half]))


def standalone_stack(
    week: EpiWeek, geo: str, ili: WeeklyPanel, first_step: WeeklyPanel
) -> np.ndarray:
    """(own last increment, own search estimate - prev, national - prev)."""
    prev_w = week.prev()
    p_prev = ili.at(prev_w, geo)
    p_prev2 = ili.at(prev_w.prev(), geo)
    return np.array(
        [
            p_prev - p_prev2,
            first_step.at(week, geo) - p_prev,
            first_step.at(week, "US") - p_prev,
        ]
    )
