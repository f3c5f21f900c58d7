"""Quintile portfolio formation and five-factor alpha estimation.

Annualized exposures for year y form portfolios on March 31 of year y+1,
held for the twelve months April y+1 through March y+2. Quintile
membership is percentile-rank binning: with n firms ranked 0..n-1 by
(exposure, firm_id), rank r lands in bin floor(n_bins * r / n), so bin
sizes never differ by more than one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import EstimationError, FormationError, MissingColumnError
from .core import newey_west_cov, ols

FACTOR_COLUMNS = ("MKT_RF", "SMB", "HML", "RMW", "CMA", "RF")


def assign_quantile_bins(values: pd.Series, n_bins: int = 5) -> pd.Series:
    """Bin index 1..n_bins per observation, ties broken by the index."""
    n = len(values)
    pos = np.lexsort((values.index.to_numpy(), values.to_numpy(dtype=float)))
    ranks = np.empty(n, dtype=np.int64)
    ranks[pos] = np.arange(n)
    return pd.Series(ranks * n_bins // n + 1, index=values.index)


@dataclass
class PortfolioResult:
    assignments: pd.DataFrame  # firm_id, year, exposure, quintile
    monthly: pd.DataFrame  # index month, columns q1..qn + hml
    skipped_years: list = field(default_factory=list)


def quintile_portfolios(
    annual: pd.DataFrame,
    monthly_returns: pd.DataFrame,
    n_quintiles: int = 5,
    min_firms: int = 5,
    hold_months: int = 12,
) -> PortfolioResult:
    """Equal-weighted exposure-sorted portfolios.

    ``annual`` has firm_id, year, exposure (already excluding zero or
    missing annualized exposures); ``monthly_returns`` has firm_id, month
    (as pandas monthly Period), ret. Formation years with fewer than
    ``min_firms`` eligible firms are skipped and reported; if every year
    fails, a FormationError is raised.
    """
    for col in ("firm_id", "year", "exposure"):
        if col not in annual.columns:
            raise MissingColumnError(col, "annual exposures")
    for col in ("firm_id", "month", "ret"):
        if col not in monthly_returns.columns:
            raise MissingColumnError(col, "monthly returns")

    assignments = []
    skipped: list = []
    for year, group in annual.dropna(subset=["exposure"]).groupby("year", sort=True):
        eligible = group.drop_duplicates("firm_id").set_index("firm_id")["exposure"]
        if len(eligible) < min_firms:
            skipped.append(year)
            continue
        bins = assign_quantile_bins(eligible, n_quintiles)
        frame = bins.rename("quintile").reset_index()
        frame["year"] = year
        frame["exposure"] = eligible.loc[frame["firm_id"]].to_numpy()
        assignments.append(frame)
    if not assignments:
        raise FormationError(
            f"no formation year has >= {min_firms} eligible firms (skipped: {skipped})"
        )
    assigned = pd.concat(assignments, ignore_index=True)

    holdings = []
    for _, row in assigned.iterrows():
        start = pd.Period(f"{int(row['year']) + 1}-04", freq="M")
        for offset in range(hold_months):
            holdings.append(
                {"firm_id": row["firm_id"], "month": start + offset, "quintile": row["quintile"]}
            )
    held = pd.DataFrame(holdings)
    merged = held.merge(monthly_returns, on=["firm_id", "month"], how="inner")
    avg = merged.groupby(["month", "quintile"])["ret"].mean().unstack("quintile")
    avg = avg.reindex(columns=range(1, n_quintiles + 1))
    avg.columns = [f"q{q}" for q in range(1, n_quintiles + 1)]
    avg["hml"] = avg[f"q{n_quintiles}"] - avg["q1"]
    return PortfolioResult(assignments=assigned, monthly=avg.sort_index(), skipped_years=skipped)


@dataclass
class AlphaResult:
    alpha: float  # monthly, same units as the inputs (percent)
    se: float
    t: float
    n_months: int
    loadings: dict[str, float]


def five_factor_alpha(
    portfolio: pd.Series,
    factors: pd.DataFrame,
    nw_lag: int = 3,
    min_overlap: int = 24,
) -> AlphaResult:
    """Intercept of excess portfolio returns on the five factors.

    Portfolio returns and the factor file must be in the same units
    (percent per month); the t-value is Newey-West with Bartlett weights.
    """
    for col in FACTOR_COLUMNS:
        if col not in factors.columns:
            raise MissingColumnError(col, "factor file")
    joined = pd.concat([portfolio.rename("port"), factors[list(FACTOR_COLUMNS)]], axis=1, join="inner").dropna()
    n = len(joined)
    if n < min_overlap:
        raise EstimationError(
            f"five-factor alpha needs >= {min_overlap} overlapping months, found {n}"
        )
    slopes = [c for c in FACTOR_COLUMNS if c != "RF"]
    y = (joined["port"] - joined["RF"]).to_numpy(dtype=float)
    X = np.column_stack([np.ones(n), joined[slopes].to_numpy(dtype=float)])
    names = ["alpha", *slopes]
    fit = ols(y, X, names)
    if "alpha" not in fit.names:
        raise EstimationError("five-factor alpha: intercept dropped as collinear")
    cov = newey_west_cov(fit.design, fit.residuals, nw_lag)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    idx = fit.names.index("alpha")
    alpha, alpha_se = float(fit.coef[idx]), float(se[idx])
    t = alpha / alpha_se if alpha_se > 0 else float("nan")
    loadings = {nm: float(c) for nm, c in zip(fit.names, fit.coef) if nm != "alpha"}
    return AlphaResult(alpha=alpha, se=alpha_se, t=t, n_months=n, loadings=loadings)
