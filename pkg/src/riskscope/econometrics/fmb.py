"""Fama-MacBeth cross-sectional regressions with Newey-West inference."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from ..errors import EstimationError, MissingColumnError
from .core import newey_west_se_mean, ols


def annualize_exposure(quarterly_values: Sequence[float]) -> float | None:
    """Mean exposure over the quarters available in a firm-year.

    Returns None (the excluded sentinel) when no values are available or
    when the mean is zero: all-zero years carry no risk discussion and
    are dropped before taking logs downstream.
    """
    values = [float(v) for v in quarterly_values if v is not None and np.isfinite(v)]
    if not values:
        return None
    mean = float(np.mean(values))
    if mean == 0.0:
        return None
    return mean


@dataclass
class FMBResult:
    names: list[str]
    mean_coef: np.ndarray
    se: np.ndarray
    t: np.ndarray
    n_periods: int
    n_skipped: int
    avg_adj_r2: float
    coef_by_period: pd.DataFrame  # one row per usable period

    def coef_for(self, name: str) -> float:
        return float(self.mean_coef[self.names.index(name)])

    def t_for(self, name: str) -> float:
        return float(self.t[self.names.index(name)])


def fama_macbeth(
    data: pd.DataFrame,
    y: str,
    regressors: Sequence[str],
    period_col: str = "month",
    nw_lag: int = 3,
) -> FMBResult:
    """Per-period OLS of y on the regressors, averaged over periods.

    Periods with fewer than K+2 usable rows or with a rank-deficient
    cross-section are skipped and counted. Standard errors are Newey-West
    on the coefficient time series with Bartlett weights.
    """
    for col in (y, *regressors, period_col):
        if col not in data.columns:
            raise MissingColumnError(col, "fama-macbeth panel")
    names = ["const", *regressors]
    k = len(names)
    coef_rows = []
    adj_r2s = []
    periods = []
    skipped = 0
    for period, group in data.groupby(period_col, sort=True):
        sub = group[[y, *regressors]].dropna()
        n = len(sub)
        if n < k + 2:
            skipped += 1
            continue
        X = np.column_stack([np.ones(n), sub[list(regressors)].to_numpy(dtype=float)])
        try:
            fit = ols(sub[y].to_numpy(dtype=float), X, names)
        except EstimationError:
            skipped += 1
            continue
        if fit.dropped:
            skipped += 1
            continue
        coef_rows.append(fit.coef)
        periods.append(period)
        y_vals = sub[y].to_numpy(dtype=float)
        tss = float(((y_vals - y_vals.mean()) ** 2).sum())
        ssr = float((fit.residuals**2).sum())
        r2 = 1.0 - ssr / tss if tss > 0 else np.nan
        adj_r2s.append(1.0 - (1.0 - r2) * (n - 1) / (n - k))
    if not coef_rows:
        raise EstimationError("fama-macbeth: no usable periods")
    coef_by_period = pd.DataFrame(coef_rows, index=periods, columns=names)
    mean_coef = coef_by_period.mean(axis=0).to_numpy()
    if len(coef_rows) == 1:
        se = np.full(k, np.nan)
    else:
        se = np.array([newey_west_se_mean(coef_by_period[c].to_numpy(), nw_lag) for c in names])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = mean_coef / se
    return FMBResult(
        names=names,
        mean_coef=mean_coef,
        se=se,
        t=t,
        n_periods=len(coef_rows),
        n_skipped=skipped,
        avg_adj_r2=float(np.mean(adj_r2s)),
        coef_by_period=coef_by_period,
    )
