"""Stochastic gradient variational Bayes with gamma variational posteriors."""

from gammavi.errors import DomainError, NonFiniteGradientError, SolverError
from gammavi.reparam import Regime, ReparamResult, gamma_quantile, sample_and_grad
from gammavi.engine import (
    FitTrace,
    VariationalState,
    elbo_estimate,
    fit_gamma_sgvb,
    fit_map,
    fit_normal_sgvb,
)
from gammavi.optim import OptimizerConfig

__all__ = [
    "DomainError",
    "FitTrace",
    "NonFiniteGradientError",
    "OptimizerConfig",
    "Regime",
    "ReparamResult",
    "SolverError",
    "VariationalState",
    "elbo_estimate",
    "fit_gamma_sgvb",
    "fit_map",
    "fit_normal_sgvb",
    "gamma_quantile",
    "sample_and_grad",
]

__version__ = "0.1.0"
