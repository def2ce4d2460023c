"""Variational gap estimation and dispersion-based gap bounds."""

__version__ = "0.1.0"

from .bounds import (
    GapBoundReport,
    corollary_bound,
    diagnose,
    empirical_population_report,
    prop1_check,
    prop2_bound,
)
from .estimators import EstimateResult, EstimatorConfig, bias_variance_sweep, elbo_estimate, iwlb_estimate, iwlb_samples
from .models import (
    GaussianLinearModel,
    LogNormalRatioModel,
    ProposalParams,
    exact_elbo_gap,
    exact_log_evidence,
    sample_log_weights,
)
from .stats import Coupling, DispersionStats, LogWeightBatch, Scale, dispersion_stats, empirical_median, log_sum_exp

__all__ = [
    "Coupling", "DispersionStats", "EstimateResult", "EstimatorConfig", "GapBoundReport",
    "GaussianLinearModel", "LogNormalRatioModel", "LogWeightBatch", "ProposalParams", "Scale",
    "bias_variance_sweep", "corollary_bound", "diagnose", "dispersion_stats", "elbo_estimate",
    "empirical_median", "empirical_population_report", "exact_elbo_gap", "exact_log_evidence",
    "iwlb_estimate", "iwlb_samples", "log_sum_exp", "prop1_check", "prop2_bound", "sample_log_weights",
]
