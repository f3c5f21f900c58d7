"""Four-quarter rolling panel regressions for the risk-importance trend."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import pandas as pd

from ..errors import EstimationError, MissingColumnError
from .core import panel_regression


def rolling_regression(
    data: pd.DataFrame,
    y: str,
    risk_cols: Sequence[str],
    controls: Sequence[str] = (),
    window: int = 4,
    fe: Sequence = ("quarter", "industry"),
    joint: bool = False,
    quarter_col: str = "quarter",
    cluster: str = "firm_id",
    winsor_bounds: tuple[float, float] = (0.01, 0.99),
) -> pd.DataFrame:
    """One row per (window, risk regressor) with coefficient and t-value.

    ``joint=False`` estimates each risk regressor in its own model;
    ``joint=True`` includes all of them simultaneously. Windows whose
    estimation fails are emitted with missing values so the run continues.
    """
    if quarter_col not in data.columns:
        raise MissingColumnError(quarter_col, "rolling regression")
    quarters = sorted(data[quarter_col].dropna().unique())
    if len(quarters) < window:
        raise EstimationError(
            f"rolling regression needs >= {window} distinct quarters, found {len(quarters)}"
        )
    rows = []
    for i in range(len(quarters) - window + 1):
        span = quarters[i : i + window]
        sub = data[data[quarter_col].isin(span)]
        specs = [list(risk_cols)] if joint else [[rc] for rc in risk_cols]
        for regressors in specs:
            try:
                res = panel_regression(
                    sub,
                    y,
                    regressors,
                    controls=controls,
                    fe=fe,
                    cluster=cluster,
                    winsor_bounds=winsor_bounds,
                )
            except EstimationError:
                res = None
            for rc in regressors:
                if res is not None and rc in res.names:
                    coef, t, n = res.coef_for(rc), res.t_for(rc), res.n
                else:
                    coef, t, n = np.nan, np.nan, 0
                rows.append(
                    {
                        "start": span[0],
                        "end": span[-1],
                        "regressor": rc,
                        "coef": coef,
                        "t": t,
                        "n": n,
                    }
                )
    return pd.DataFrame(rows, columns=["start", "end", "regressor", "coef", "t", "n"])
