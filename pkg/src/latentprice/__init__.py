"""Latent efficient price with a tick-grid micro-drift: simulation, filtering and estimation."""

__version__ = "0.1.0"

from .dataio import (
    DataError,
    EstimationResult,
    MarketPath,
    SessionConfig,
    load_dataset,
    load_result,
    load_ticks,
    resample,
    save_result,
    write_dataset,
)
from .likelihood import MleResult, ParamGrid, grid_search_mle, invert_beta, log_likelihood
from .model import ModelParams, big_sigma, bid_ask, chi, mu, phi, psi
from .moments import (
    SigmaHatConfig,
    estimate_epsilon,
    estimate_sigma_bar2,
    estimate_sigma_hat,
    solve_epsilon,
    wide_spread_fraction,
)
from .pipeline import AxisSpec, estimate_session
from .quadrature import Quadrature, QuadratureError
from .simulate import SimConfig, mean_exit_time_mc, simulate_path
from .zakai import FilterDiagnosticError, FilterGrid, FilterOutput, filter_step, run_filter

__all__ = [
    "AxisSpec", "DataError", "EstimationResult", "FilterDiagnosticError", "FilterGrid", "FilterOutput",
    "MarketPath", "MleResult", "ModelParams", "ParamGrid", "Quadrature", "QuadratureError",
    "SessionConfig", "SigmaHatConfig", "SimConfig", "big_sigma", "bid_ask", "chi",
    "estimate_epsilon", "estimate_session", "estimate_sigma_bar2", "estimate_sigma_hat",
    "filter_step", "grid_search_mle", "invert_beta", "load_dataset", "load_result", "load_ticks",
    "log_likelihood", "mean_exit_time_mc", "mu", "phi", "psi", "resample", "run_filter",
    "save_result", "simulate_path", "solve_epsilon", "wide_spread_fraction", "write_dataset",
]
