"""Multi-resolution state-level %ILI nowcasting.

Two-step pipeline: penalized search-volume regressions per geography
produce raw estimates at state, regional, and national resolution; a
structured-covariance best linear predictor then pools them, with isolated
states handled by a scalar stand-alone variant. Includes a rolling-origin
backtest harness, naive and VAR benchmarks, and interval estimation.
"""

from .backtest import BacktestConfig, run_backtest
from .enrichment import blend_state_regional, enrich_all_states, reconstruct_regional_series
from .evaluation import correlation, coverage_rate, mae, mse, naive_estimate, var1_estimate
from .first_step import (
    FirstStepConfig,
    first_step_panel,
    fit_national_first_step,
    fit_regional_first_step,
    fit_state_first_step,
)
from .geo import GeoRegistry, default_registry, load_registry
from .lasso import LassoRegression, kkt_residual, lambda_path, select_lambda, soft_threshold
from .panels import (
    WeeklyPanel,
    inv_logit,
    load_trends_dir,
    log1p_features,
    logit,
    parse_ili_csv,
    parse_trends_csv,
    zero_fraction_report,
)
from .routing import multiple_correlation_r2, select_standalone
from .second_step import (
    JointSecondStep,
    StandaloneSecondStep,
    assemble_structured_cov,
    build_increments,
    build_predictor_stack,
    estimate_components,
    estimate_rho,
)
from .synth import SynthConfig, generate_synthetic
from .weeks import EpiWeek, parse_week, season_slices, week_range

__version__ = "0.1.0"

__all__ = [
    "BacktestConfig",
    "EpiWeek",
    "FirstStepConfig",
    "GeoRegistry",
    "JointSecondStep",
    "LassoRegression",
    "StandaloneSecondStep",
    "SynthConfig",
    "WeeklyPanel",
    "assemble_structured_cov",
    "blend_state_regional",
    "build_increments",
    "build_predictor_stack",
    "correlation",
    "coverage_rate",
    "default_registry",
    "enrich_all_states",
    "estimate_components",
    "estimate_rho",
    "first_step_panel",
    "fit_national_first_step",
    "fit_regional_first_step",
    "fit_state_first_step",
    "generate_synthetic",
    "inv_logit",
    "kkt_residual",
    "lambda_path",
    "load_registry",
    "load_trends_dir",
    "log1p_features",
    "logit",
    "mae",
    "mse",
    "multiple_correlation_r2",
    "naive_estimate",
    "parse_ili_csv",
    "parse_trends_csv",
    "parse_week",
    "reconstruct_regional_series",
    "run_backtest",
    "season_slices",
    "select_lambda",
    "select_standalone",
    "soft_threshold",
    "var1_estimate",
    "week_range",
    "zero_fraction_report",
]
