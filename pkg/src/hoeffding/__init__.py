"""Hoeffding tests for Markov-modulated symbol streams with Monte-Carlo thresholds."""

from __future__ import annotations

from .divergence import DivergenceWorkspace, gradient_h, hessian_h, relative_entropy
from .errors import (ConfigurationError, ConvergenceError, DegenerateFeatureWarning,
                     DegenerateReferenceError, HoeffdingError, InputError, NumericalError,
                     SchemaError, UnreliableQuantileWarning, ValidationError)
from .markov import (Alphabet, EmpiricalLaw, SymbolSequence, TransitionModel, empirical_law,
                     lift_transition, pair_encode, simulate_counts, simulate_path,
                     simulate_states, stationary_law)
from .threshold import (SampleCache, ThresholdEstimate, covariance, estimate_threshold_ordinary,
                        estimate_threshold_robust, fit_reference, ordinary_cache,
                        quantile_threshold, sanov_threshold)

__version__ = "0.1.0"

__all__ = [
    "Alphabet", "ConfigurationError", "ConvergenceError", "DegenerateFeatureWarning",
    "DegenerateReferenceError", "DivergenceWorkspace", "EmpiricalLaw", "HoeffdingError",
    "InputError", "NumericalError", "SampleCache", "SchemaError", "SymbolSequence",
    "ThresholdEstimate", "TransitionModel", "UnreliableQuantileWarning", "ValidationError",
    "covariance", "empirical_law", "estimate_threshold_ordinary", "estimate_threshold_robust",
    "fit_reference", "gradient_h", "hessian_h", "lift_transition", "ordinary_cache", "pair_encode",
    "quantile_threshold", "relative_entropy", "sanov_threshold", "simulate_counts",
    "simulate_path", "simulate_states", "stationary_law",
]
