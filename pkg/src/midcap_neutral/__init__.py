"""Point-in-time mid-cap dollar-neutral long-short research engine."""

from .backtest import (
    BacktestPhaseResult,
    BacktestReport,
    PhaseSpec,
    compare_benchmark,
    compute_sharpe,
    permutation_sharpes,
    prepare_phase,
    evaluate_phase,
    run_phase,
    run_protocol,
)
from .config import Config, dump_config, load_config, parse_config
from .errors import PipelineError
from .features import FEATURE_NAMES, compute_features
from .optimizer import OptimizerParams, PortfolioWeights, normalize_gross, solve_dollar_neutral, weights_to_positions
from .panel import PointInTimePanel, as_of, build_panel, forward_fill, merge_link, midcap_filter
from .preprocess import FeatureMatrix, PreprocessReport, fit_feature_selection, standardize_and_clip
from .signals import estimate_sigma, fit_return_model, score_mu
from .synthetic import generate_synthetic

__all__ = [
    "BacktestPhaseResult", "BacktestReport", "Config", "FEATURE_NAMES", "FeatureMatrix",
    "OptimizerParams", "PhaseSpec", "PipelineError", "PointInTimePanel", "PortfolioWeights",
    "PreprocessReport", "as_of", "build_panel", "compare_benchmark", "compute_features",
    "compute_sharpe", "dump_config", "estimate_sigma", "evaluate_phase", "fit_feature_selection",
    "fit_return_model", "forward_fill", "generate_synthetic", "load_config", "merge_link",
    "midcap_filter", "normalize_gross", "parse_config", "permutation_sharpes", "prepare_phase",
    "run_phase", "run_protocol", "score_mu", "solve_dollar_neutral", "standardize_and_clip",
    "weights_to_positions",
]
