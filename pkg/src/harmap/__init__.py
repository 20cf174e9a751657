"""Harmonic maps and symmetric 2-tensors on flat tori with arbitrary periodic metrics."""

from .config import ConfigError, RunConfig, load_config
from .decompositions import DecompositionResult, alpha_split, berger_ebin, york
from .expression import ExpressionError, parse_expression
from .geometry import GeometryError, MetricField, curvature_bundle
from .grid_field import Grid, TensorField
from .harmonic_classes import build_k_basis, classify
from .maps import ExpressionMetric, GridMetric, TorusMap, energy, theorem1_residual
from .report import CheckReport
from .solver import LinearSolveSpec, least_squares_solve

__all__ = [
    "CheckReport", "ConfigError", "DecompositionResult", "ExpressionError", "ExpressionMetric",
    "GeometryError", "Grid", "GridMetric", "LinearSolveSpec", "MetricField", "RunConfig",
    "TensorField", "TorusMap", "alpha_split", "berger_ebin", "build_k_basis", "classify",
    "curvature_bundle", "energy", "least_squares_solve", "load_config", "parse_expression",
    "theorem1_residual", "york",
]
__version__ = "0.1.0"
