"""Benchmark problems, the singular reference path and the 1-D DP oracle."""

from .dp_oracle import DpGrid, DpResult, dp_oracle_1d
from .models import (
    REGISTRY,
    build_problem,
    exact_simple_trajectory,
    hyper_sensitive,
    simple_control,
    singular,
    singular_base,
    toy_drift,
    toy_drift_exact,
    toy_quadratic,
    toy_quadratic_exact,
)
from .reference import QuadratureError, reference_singular, singular_exponent

__all__ = [
    "DpGrid",
    "DpResult",
    "QuadratureError",
    "REGISTRY",
    "build_problem",
    "dp_oracle_1d",
    "exact_simple_trajectory",
    "hyper_sensitive",
    "reference_singular",
    "simple_control",
    "singular",
    "singular_base",
    "singular_exponent",
    "toy_drift",
    "toy_drift_exact",
    "toy_quadratic",
    "toy_quadratic_exact",
]
