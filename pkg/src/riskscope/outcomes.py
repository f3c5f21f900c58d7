"""Dependent variables: abnormal/realized volatility, the capital
investment recursion, and risk-response activity indicators.

Volatility windows are positional over trading days. The call-date anchor
is the first trading date on or after the call date; the post window runs
from +6 to +28 positions and the pre window from -257 to -6, each with
its own minimum-observation requirement.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import DataError, DegenerateSeriesError, InsufficientDataError

POST_WINDOW = (6, 28)
PRE_WINDOW = (-257, -6)
MIN_POST_OBS = 10
MIN_PRE_OBS = 60
DEFAULT_DEPRECIATION = 0.10


@dataclass(frozen=True)
class ReturnSeries:
    """Daily firm returns aligned with market returns on common trading dates."""

    firm_id: str
    dates: np.ndarray  # datetime64[D], strictly increasing
    firm: np.ndarray
    market: np.ndarray

    @classmethod
    def align(cls, firm_id: str, firm: pd.Series, market: pd.Series) -> "ReturnSeries":
        """Inner-join firm and market daily returns on date."""
        joined = pd.concat({"firm": firm, "market": market}, axis=1, join="inner").dropna()
        dates = joined.index.to_numpy(dtype="datetime64[D]")
        if len(dates) > 1 and not (dates[1:] > dates[:-1]).all():
            raise DataError(f"returns for {firm_id} are not strictly increasing in date")
        return cls(firm_id, dates, joined["firm"].to_numpy(), joined["market"].to_numpy())

    def anchor_position(self, call_date: date) -> int:
        """Index of the first trading date >= call_date."""
        pos = int(np.searchsorted(self.dates, np.datetime64(call_date, "D"), side="left"))
        if pos >= len(self.dates):
            raise InsufficientDataError(
                f"{self.firm_id}: no trading dates on or after {call_date}"
            )
        return pos


def _window_slice(series: ReturnSeries, call_date: date, window: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    anchor = series.anchor_position(call_date)
    lo = max(anchor + window[0], 0)
    hi = min(anchor + window[1], len(series.dates) - 1)
    if hi < lo:
        return np.empty(0), np.empty(0)
    return series.firm[lo : hi + 1], series.market[lo : hi + 1]


def market_model_rmse(
    series: ReturnSeries,
    call_date: date,
    window: tuple[int, int],
    min_obs: int,
) -> float:
    """RMSE of residuals from r_firm = b0 + b1 r_market over the window."""
    y, m = _window_slice(series, call_date, window)
    n = len(y)
    if n < min_obs:
        raise InsufficientDataError(
            f"{series.firm_id}: window {window} has {n} obs, needs {min_obs}"
        )
    x = np.column_stack([np.ones(n), m])
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ beta
    return float(np.sqrt(np.mean(resid**2)))


def abnormal_volatility(
    series: ReturnSeries,
    call_date: date,
    post_window: tuple[int, int] = POST_WINDOW,
    pre_window: tuple[int, int] = PRE_WINDOW,
    min_post_obs: int = MIN_POST_OBS,
    min_pre_obs: int = MIN_PRE_OBS,
) -> float:
    """Post-call RMSE over pre-call RMSE, minus one."""
    pre = market_model_rmse(series, call_date, pre_window, min_pre_obs)
    post = market_model_rmse(series, call_date, post_window, min_post_obs)
    if pre == 0.0:
        raise DegenerateSeriesError(f"{series.firm_id}: pre-call RMSE is zero at {call_date}")
    return post / pre - 1.0


def realized_volatility(returns: pd.Series, quarter_end: date, horizon_days: int = 90) -> float:
    """Sample std of daily returns in (quarter_end, quarter_end + horizon]."""
    start = pd.Timestamp(quarter_end)
    stop = start + timedelta(days=horizon_days)
    window = returns[(returns.index > start) & (returns.index <= stop)].dropna()
    if len(window) < 2:
        raise InsufficientDataError(
            f"realized volatility window after {quarter_end} has {len(window)} obs"
        )
    return float(window.std(ddof=1))


def capital_path(
    initial_ppe: float,
    quarters: Sequence[tuple[float, float]],
    depreciation: float = DEFAULT_DEPRECIATION,
) -> np.ndarray:
    """Capital stock entering each quarter, plus the final end-of-sample value.

    K entering the first quarter is the initial PP&E; afterwards
    K_next = K * (1 - depreciation) * (1 + inflation) + capex.
    """
    if initial_ppe <= 0:
        raise DataError("initial PP&E must be positive")
    path = np.empty(len(quarters) + 1)
    path[0] = initial_ppe
    for t, (capex, rho) in enumerate(quarters):
        path[t + 1] = path[t] * (1.0 - depreciation) * (1.0 + rho) + capex
    return path


def investment_series(
    initial_ppe: float,
    quarters: Sequence[tuple[float, float]],
    depreciation: float = DEFAULT_DEPRECIATION,
) -> np.ndarray:
    """Per-quarter investment ratios capex_t / K_{t-1}.

    Quarters where the entering capital stock is not positive yield NaN
    and the recursion continues.
    """
    path = capital_path(initial_ppe, quarters, depreciation)
    ratios = np.empty(len(quarters))
    for t, (capex, _rho) in enumerate(quarters):
        ratios[t] = capex / path[t] if path[t] > 0 else np.nan
    return ratios


def compound_inflation(monthly_changes: Sequence[float]) -> float:
    """Quarterly inflation from monthly PPI changes, by compounding."""
    rate = 1.0
    for m in monthly_changes:
        rate *= 1.0 + m
    return rate - 1.0


INDICATOR_MAP = {
    "lobby_amount": "lobby_any",
    "green_patents": "green_patent_any",
    "ai_patents": "ai_patent_any",
}


def activity_indicators(counts: pd.DataFrame, index: pd.DataFrame) -> pd.DataFrame:
    """0/1 indicators per firm-quarter; rows absent from counts are 0.

    ``counts`` has firm_id, quarter, and any of the INDICATOR_MAP source
    columns; ``index`` fixes the (firm_id, quarter) universe.
    """
    keys = ["firm_id", "quarter"]
    out = index[keys].drop_duplicates().copy()
    present = [c for c in INDICATOR_MAP if c in counts.columns]
    for col in present:
        values = pd.to_numeric(counts[col], errors="coerce")
        if (values.dropna() < 0).any():
            raise DataError(f"negative values in {col}")
    merged = out.merge(counts[keys + present], on=keys, how="left")
    for col in present:
        out[INDICATOR_MAP[col]] = (merged[col].fillna(0) > 0).astype(int).to_numpy()
    return out
