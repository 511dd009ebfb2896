"""Density evolution for LDPC and multi-edge-type LDPC ensembles on the BI-AWGN channel."""

from .channel import ChannelSpec, ebn0_to_sigma, sigma_to_ebn0
from .density import Grid, QuantizedDensity, error_probability, gaussian_density, mean, variance
from .ensemble import (METHODS, EnsembleSyntaxError, EnsembleValidationError, MetEnsemble,
                       cost_model, edge_perspective, load_ensemble, parse_ensemble, rate)
from .full_de import DeConfig, DeTrace, run_full_de
from .gauss_approx import run_approx
from .hybrid import HybridConfig, run_hybrid
from .threshold import ThresholdResult, find_threshold, shannon_sigma, threshold_error

__all__ = [
    "ChannelSpec", "ebn0_to_sigma", "sigma_to_ebn0",
    "Grid", "QuantizedDensity", "error_probability", "gaussian_density", "mean", "variance",
    "METHODS", "EnsembleSyntaxError", "EnsembleValidationError", "MetEnsemble", "cost_model",
    "edge_perspective", "load_ensemble", "parse_ensemble", "rate",
    "DeConfig", "DeTrace", "run_full_de", "run_approx", "HybridConfig", "run_hybrid",
    "ThresholdResult", "find_threshold", "shannon_sigma", "threshold_error",
]
