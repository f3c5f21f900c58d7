"""Variance decomposition of a measure into time, industry,
time-by-industry, and firm-level components via incremental R-squared."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..errors import DecompositionError, MissingColumnError
from .core import _factor_codes, absorb_fixed_effects


@dataclass
class VarianceDecomposition:
    measure: str
    time_fe: float  # stage-1 shares, percent
    industry_fe: float
    time_industry_fe: float
    firm_level: float
    firm_fe: float  # stage-2 pair, percent of firm-level residual variation
    remaining: float
    n: int

    @property
    def stage1_sum(self) -> float:
        return self.time_fe + self.industry_fe + self.time_industry_fe + self.firm_level

    @property
    def stage2_sum(self) -> float:
        return self.firm_fe + self.remaining


def _ssr_after_absorption(y: np.ndarray, factors) -> tuple[float, np.ndarray]:
    resid = absorb_fixed_effects(y[:, None], factors)[:, 0]
    return float((resid**2).sum()), resid


def variance_decomposition(
    data: pd.DataFrame,
    measure: str,
    time_col: str = "quarter",
    industry_col: str = "industry",
    firm_col: str = "firm_id",
) -> VarianceDecomposition:
    """Sequential R-squared attribution for one measure.

    Stage 1 adds time FE, then industry FE, then their interaction; the
    unexplained remainder is the implied firm-level share, so the four
    entries sum to 100 by construction. Stage 2 regresses the stage-1
    residual on firm FE and reports that R-squared with its complement.
    """
    for col in (measure, time_col, industry_col, firm_col):
        if col not in data.columns:
            raise MissingColumnError(col, "variance decomposition")
    sub = data[[measure, time_col, industry_col, firm_col]].dropna()
    y = sub[measure].to_numpy(dtype=float)
    n = len(y)
    if n < 2:
        raise DecompositionError("variance decomposition needs at least 2 rows")
    tss = float(((y - y.mean()) ** 2).sum())
    if tss == 0.0:
        raise DecompositionError(f"measure {measure!r} is constant")

    time_codes = _factor_codes(sub, (time_col,))
    industry_codes = _factor_codes(sub, (industry_col,))
    cell_codes = _factor_codes(sub, (time_col, industry_col))
    firm_codes = _factor_codes(sub, (firm_col,))

    ssr_time, _ = _ssr_after_absorption(y, [time_codes])
    ssr_time_ind, _ = _ssr_after_absorption(y, [time_codes, industry_codes])
    # the interaction nests both mains, so one combined factor spans the
    # full time/industry/time-x-industry dummy space exactly
    ssr_cells, resid = _ssr_after_absorption(y, [cell_codes])

    r2_time = 1.0 - ssr_time / tss
    r2_time_ind = 1.0 - ssr_time_ind / tss
    r2_cells = 1.0 - ssr_cells / tss

    share_time = 100.0 * r2_time
    share_industry = 100.0 * (r2_time_ind - r2_time)
    share_interaction = 100.0 * (r2_cells - r2_time_ind)
    share_firm_level = 100.0 - (share_time + share_industry + share_interaction)

    tss_resid = float(((resid - resid.mean()) ** 2).sum())
    if tss_resid == 0.0:
        raise DecompositionError(
            "no residual variation left for the firm-level stage"
        )
    ssr_firm, _ = _ssr_after_absorption(resid, [firm_codes])
    firm_fe = 100.0 * (1.0 - ssr_firm / tss_resid)
    remaining = 100.0 - firm_fe

    return VarianceDecomposition(
        measure=measure,
        time_fe=share_time,
        industry_fe=share_industry,
        time_industry_fe=share_interaction,
        firm_level=share_firm_level,
        firm_fe=firm_fe,
        remaining=remaining,
        n=n,
    )
