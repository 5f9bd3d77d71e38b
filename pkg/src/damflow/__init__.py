"""Conformal maps of an octagonal dam seepage domain through genus-2 Riemann theta functions."""

from .cuts import CutSpec, ExtendedParams, kappa_sweep, solve_cut_params
from .flow import FlowSpec, RectModel, aspect_ratio, lambda_modulus, trace_equipotential, trace_streamline
from .param_solver import SolverConfig, SolverError, residual, solve_params
from .polygon import P_TEST, GeometryError, PolygonSpec
from .sc_map import MappingError, MappingParams, SCMap
from .sc_oracle import cross_validate

__version__ = "0.1.0"

__all__ = [
    "CutSpec", "ExtendedParams", "FlowSpec", "GeometryError", "MappingError", "MappingParams",
    "P_TEST", "PolygonSpec", "RectModel", "SCMap", "SolverConfig", "SolverError",
    "aspect_ratio", "cross_validate", "kappa_sweep", "lambda_modulus", "residual",
    "solve_cut_params", "solve_params", "trace_equipotential", "trace_streamline",
]
