"""Distributed nonparametric regression under per-machine bit budgets."""

from ._backend import BACKEND
from .harness import MatchedPrior, SweepSpec, estimate_risk, fit_slope, regime_experiment, run_sweep
from .lowerbound import LowerBoundInstance, PriorSpec, bound_report, solve_optimization
from .model import (CoefficientSequence, GaussianPrior, PolynomialDecay, ProblemConfig, Regime,
                    SingleSpike, ValidationError, classify_regime, make_config, sample_coefficients)
from .protocol import central_decode, local_encode, plan
from .quantizer import QuantizerSpec, decode_value, encode_value

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CoefficientSequence", "GaussianPrior", "LowerBoundInstance", "MatchedPrior",
    "PolynomialDecay", "PriorSpec", "ProblemConfig", "QuantizerSpec", "Regime", "SingleSpike",
    "SweepSpec", "ValidationError", "bound_report", "central_decode", "classify_regime",
    "decode_value", "encode_value", "estimate_risk", "fit_slope", "local_encode", "make_config",
    "plan", "regime_experiment", "run_sweep", "sample_coefficients", "solve_optimization",
]
