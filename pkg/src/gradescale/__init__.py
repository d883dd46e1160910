"""Bayesian inference of climbing grade scales from whole-history ascent logbooks."""

__version__ = "0.1.0"

from .grades import GradeSystem, GradeValue, convert_for_report, format_grade, parse_grade
from .logbook import (
    AscentRecord,
    GameMode,
    PreparedDataset,
    TickPolicy,
    aggregate_sessions,
    filter_climbers,
    ingest,
    paginate,
    prepare,
)
from .model import (
    ModelConfig,
    ParameterState,
    Posterior,
    expected_failures,
    grad_log_posterior,
    log_posterior,
    p_from_failures,
    p_send,
)
from .regression import empirical_odds, fit_climber_slope, fit_community_exponential
from .sampler import PosteriorTrace, SamplerConfig, sample
from .simulate import SimSpec, simulate
from .summary import hpd_interval, summarize

__all__ = [
    "AscentRecord", "GameMode", "GradeSystem", "GradeValue", "ModelConfig",
    "ParameterState", "Posterior", "PosteriorTrace", "PreparedDataset",
    "SamplerConfig", "SimSpec", "TickPolicy", "aggregate_sessions",
    "convert_for_report", "empirical_odds", "expected_failures", "filter_climbers",
    "fit_climber_slope", "fit_community_exponential", "format_grade",
    "grad_log_posterior", "hpd_interval", "ingest", "log_posterior",
    "p_from_failures", "p_send", "paginate", "parse_grade", "prepare", "sample",
    "simulate", "summarize",
]
