"""Log-periodic power-law crash analysis: scaling estimates, constrained fits, simulators."""

from .data_io import PriceSeries, export_fit, ingest_csv
from .fitting import FitResult, FitSpec, fit, goodness, objective, reduce_linear
from .model import CrashProcessParams, DomainError, LpplParams, hazard_eval, integrated_log_price, lppl_eval, lppl_from_hazard
from .scaling import detect_minima, estimate_lambda, estimate_tc, omega_from_lambda, scaling_from_minima

__version__ = "0.1.0"

__all__ = [
    "CrashProcessParams", "DomainError", "FitResult", "FitSpec", "LpplParams", "PriceSeries",
    "detect_minima", "estimate_lambda", "estimate_tc", "export_fit", "fit", "goodness",
    "hazard_eval", "ingest_csv", "integrated_log_price", "lppl_eval", "lppl_from_hazard",
    "objective", "omega_from_lambda", "reduce_linear", "scaling_from_minima",
]
