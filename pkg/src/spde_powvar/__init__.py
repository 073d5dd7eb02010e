"""Power-variation estimation of drift and volatility in the stochastic heat
equation ``u_t = theta u_xx + sigma W'(x)`` driven by space-only white noise."""

from .errors import (
    AccuracyError,
    DegenerateSampleError,
    DomainError,
    NumericalError,
    SizeError,
)
from .estimators import ESTIMATOR_IDS, EstimateReport, estimate
from .kernels import ModelParams, SamplingScheme, mu_factor, q_expectations
from .montecarlo import ExperimentConfig, McSummary, run_consistency, run_normality
from .simulate import FieldSample, load_field

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "DegenerateSampleError",
    "DomainError",
    "NumericalError",
    "SizeError",
    "ESTIMATOR_IDS",
    "EstimateReport",
    "estimate",
    "ModelParams",
    "SamplingScheme",
    "mu_factor",
    "q_expectations",
    "ExperimentConfig",
    "McSummary",
    "run_consistency",
    "run_normality",
    "FieldSample",
    "load_field",
]
