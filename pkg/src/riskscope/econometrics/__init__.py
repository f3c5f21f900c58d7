"""Estimation engine: high-dimensional FE panel OLS with cluster-robust
inference, variance decomposition, rolling windows, Fama-MacBeth, and
portfolio sorts."""

from .core import (
    OLSFit,
    RegressionResult,
    absorb_fixed_effects,
    cluster_robust_se,
    newey_west_cov,
    newey_west_se_mean,
    ols,
    panel_regression,
    trim,
    winsorize,
)
from .decompose import VarianceDecomposition, variance_decomposition
from .fmb import FMBResult, annualize_exposure, fama_macbeth
from .portfolio import (
    AlphaResult,
    PortfolioResult,
    assign_quantile_bins,
    five_factor_alpha,
    quintile_portfolios,
)
from .rolling import rolling_regression

__all__ = [
    "OLSFit",
    "RegressionResult",
    "absorb_fixed_effects",
    "cluster_robust_se",
    "newey_west_cov",
    "newey_west_se_mean",
    "ols",
    "panel_regression",
    "trim",
    "winsorize",
    "VarianceDecomposition",
    "variance_decomposition",
    "FMBResult",
    "annualize_exposure",
    "fama_macbeth",
    "AlphaResult",
    "PortfolioResult",
    "assign_quantile_bins",
    "five_factor_alpha",
    "quintile_portfolios",
    "rolling_regression",
]
