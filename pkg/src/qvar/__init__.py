"""Quadratic-variation estimation of the local scale of Gaussian processes."""
from .calculus import remainder_power_closed, remainder_quadrature, series_R2
from .estimator import (EstimateReport, aggregate, asymptotic_R_matrix, estimate_C,
                        estimate_C_aggregated, exact_variation_moments, exact_variation_shape,
                        normalized_asymptotic_variance, quadratic_variation)
from .models import model_from_dict
from .seqalg import VariationSequence, daubechies, elementary, order, parse_sequence, validate_clt
from .simulate import PathSample, SimConfig, sample_paths

__version__ = "0.1.0"

__all__ = [
    "EstimateReport", "PathSample", "SimConfig", "VariationSequence", "aggregate",
    "asymptotic_R_matrix", "daubechies", "elementary", "estimate_C", "estimate_C_aggregated",
    "exact_variation_moments", "exact_variation_shape", "model_from_dict", "normalized_asymptotic_variance", "order",
    "parse_sequence", "quadratic_variation", "remainder_power_closed", "remainder_quadrature",
    "sample_paths", "series_R2", "validate_clt",
]
