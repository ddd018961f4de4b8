"""Likelihood inference for mean-field interacting spiking neurons.

Exact simulation by thinning, the path likelihood with its derivatives, the
mean-field limit, a box-constrained MLE and Monte Carlo checks of local
asymptotic normality.
"""
from ._backend import BACKEND
from .estimator import EstimatorOptions, MleResult, mle, standardized_error
from .likelihood import (LanTerms, hessian, lan_decompose, lan_decompose_many, log_likelihood_ratio,
                         observed_info, score)
from .limit import LimitEnsemble, identifiability, limiting_fisher, solve_limit
from .model import (AffineSigmoidRate, ConfigError, ConstantRate, Dirac, LinearDrift, ModelSpec,
                    NoReset, ParameterDomainError, ResetToZero, SoftplusClampRate, ThetaBox,
                    TruncatedGaussian, Uniform, ZeroDrift, model_from_config)
from .simulator import TrajectoryRecord, empirical_measure, replay_all, replay_state, simulate

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AffineSigmoidRate", "ConfigError", "ConstantRate", "Dirac", "EstimatorOptions",
    "LanTerms", "LimitEnsemble", "LinearDrift", "MleResult", "ModelSpec", "NoReset",
    "ParameterDomainError", "ResetToZero", "SoftplusClampRate", "ThetaBox", "TrajectoryRecord",
    "TruncatedGaussian", "Uniform", "ZeroDrift", "empirical_measure", "hessian", "identifiability",
    "lan_decompose", "lan_decompose_many", "limiting_fisher", "log_likelihood_ratio", "mle",
    "model_from_config", "observed_info", "replay_all", "replay_state", "score", "simulate",
    "solve_limit", "standardized_error",
]
