"""Panel OLS with absorbed fixed effects and cluster-robust inference.

Conventions pinned here (and in the test suite):

- Quantiles for winsorizing/trimming use linear interpolation of order
  statistics (numpy's default, the "type 7" rule).
- Fixed effects are absorbed by iterated within-group demeaning
  (alternating projections) to a 1e-10 max-change tolerance.
- Cluster-robust covariance is the CR1 sandwich with small-sample factor
  G/(G-1) * (N-1)/(N-K), where K counts slopes plus absorbed-FE degrees
  of freedom. With singleton clusters this reduces to HC1.
- Newey-West uses Bartlett weights w_j = 1 - j/(L+1) and a T/(T-K)
  degrees-of-freedom correction, so at lag 0 the standard error of a
  series mean reduces to sd/sqrt(T).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
import scipy.linalg

from ..errors import (
    ConvergenceError,
    EstimationError,
    InferenceError,
    MissingColumnError,
)

ABSORB_TOL = 1e-10
ABSORB_MAX_ITER = 10_000


def winsorize(values, p_low: float = 0.01, p_high: float = 0.99) -> np.ndarray:
    """Clamp values outside the [p_low, p_high] empirical quantiles.

    Missing values are ignored when computing the quantiles and preserved
    in the output.
    """
    x = np.asarray(values, dtype=float).copy()
    mask = np.isfinite(x)
    if not mask.any():
        raise EstimationError("winsorize: no non-missing values")
    lo = np.quantile(x[mask], p_low)
    hi = np.quantile(x[mask], p_high)
    x[mask] = np.clip(x[mask], lo, hi)
    return x


def trim(values, p_low: float = 0.01, p_high: float = 0.99) -> np.ndarray:
    """Like winsorize, but values outside the quantiles become missing."""
    x = np.asarray(values, dtype=float).copy()
    mask = np.isfinite(x)
    if not mask.any():
        raise EstimationError("trim: no non-missing values")
    lo = np.quantile(x[mask], p_low)
    hi = np.quantile(x[mask], p_high)
    x[mask & ((x < lo) | (x > hi))] = np.nan
    return x


@dataclass
class OLSFit:
    coef: np.ndarray  # for kept columns only
    names: list[str]
    dropped: list[str]
    residuals: np.ndarray
    fitted: np.ndarray
    design: np.ndarray  # kept columns of X, for covariance assembly


def ols(y: np.ndarray, X: np.ndarray, names: Sequence[str]) -> OLSFit:
    """Least squares via rank-revealing (pivoted) QR.

    Collinear columns are dropped deterministically and reported by name
    rather than resolved by a pseudo-inverse.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    if n == 0:
        raise EstimationError("ols: zero usable rows")
    if n < k:
        raise EstimationError(f"ols: {n} rows < {k} columns")
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(n, k) * np.finfo(float).eps if diag.size and diag[0] > 0 else 0.0
    rank = int((diag > tol).sum())
    if rank == 0:
        raise EstimationError("ols: design matrix has rank zero")
    kept_positions = np.sort(piv[:rank])
    dropped_positions = np.sort(piv[rank:])
    beta_perm = scipy.linalg.solve_triangular(R[:rank, :rank], Q[:, :rank].T @ y)
    coef = np.empty(rank)
    # map pivot-ordered coefficients back to original column order
    order = {p: i for i, p in enumerate(piv[:rank])}
    for out_i, pos in enumerate(kept_positions):
        coef[out_i] = beta_perm[order[pos]]
    design = X[:, kept_positions]
    fitted = design @ coef
    residuals = y - fitted
    return OLSFit(
        coef=coef,
        names=[names[int(p)] for p in kept_positions],
        dropped=[names[int(p)] for p in dropped_positions],
        residuals=residuals,
        fitted=fitted,
        design=design,
    )


def _demean_once(Z: np.ndarray, codes: np.ndarray, n_levels: int) -> None:
    counts = np.bincount(codes, minlength=n_levels).astype(float)
    for j in range(Z.shape[1]):
        sums = np.bincount(codes, weights=Z[:, j], minlength=n_levels)
        Z[:, j] -= (sums / counts)[codes]


def absorb_fixed_effects(
    columns: np.ndarray,
    factors: Sequence[np.ndarray],
    tol: float = ABSORB_TOL,
    max_iter: int = ABSORB_MAX_ITER,
) -> np.ndarray:
    """Within-transform the columns over one or more factors.

    One factor demeans exactly in a single pass; multiple factors use
    alternating projections until the largest column change over a sweep
    falls below ``tol``.
    """
    Z = np.array(columns, dtype=float, copy=True)
    if Z.ndim == 1:
        Z = Z[:, None]
    codes = [(np.asarray(f, dtype=np.int64), int(np.asarray(f).max()) + 1) for f in factors]
    for f, n_levels in codes:
        if len(f) != Z.shape[0]:
            raise EstimationError("absorb_fixed_effects: factor length mismatch")
    if len(codes) == 1:
        f, n_levels = codes[0]
        _demean_once(Z, f, n_levels)
        return Z
    delta = np.inf
    for _ in range(max_iter):
        previous = Z.copy()
        for f, n_levels in codes:
            _demean_once(Z, f, n_levels)
        delta = float(np.max(np.abs(Z - previous))) if Z.size else 0.0
        if delta < tol:
            return Z
    raise ConvergenceError(
        f"fixed-effect absorption did not converge (last delta {delta:.3e})", last_delta=delta
    )


def absorbed_degrees_of_freedom(factors: Sequence[np.ndarray]) -> int:
    """Parameters spanned by the absorbed factors, grand mean included.

    Single factor: its level count. Two factors: levels1 + levels2 minus
    the number of connected components of the bipartite level graph (the
    exact rank). Three or more: 1 + sum(levels - 1), the standard
    approximation.
    """
    if not factors:
        return 0
    levels = [int(np.asarray(f).max()) + 1 for f in factors]
    if len(factors) == 1:
        return levels[0]
    if len(factors) == 2:
        f1 = np.asarray(factors[0], dtype=np.int64)
        f2 = np.asarray(factors[1], dtype=np.int64)
        parent = list(range(levels[0] + levels[1]))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in zip(f1, f2 + levels[0]):
            ra, rb = find(int(a)), find(int(b))
            if ra != rb:
                parent[ra] = rb
        components = len({find(i) for i in set(f1.tolist()) | set((f2 + levels[0]).tolist())})
        return levels[0] + levels[1] - components
    return 1 + sum(lv - 1 for lv in levels)


def cluster_robust_se(
    X: np.ndarray,
    residuals: np.ndarray,
    clusters: np.ndarray,
    dof_absorbed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """CR1 sandwich standard errors; returns (se, covariance)."""
    X = np.asarray(X, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    codes, _ = pd.factorize(np.asarray(clusters), sort=True)
    n, k = X.shape
    n_clusters = int(codes.max()) + 1 if len(codes) else 0
    if n_clusters < 2:
        raise InferenceError("cluster-robust inference needs at least 2 clusters")
    k_total = k + dof_absorbed
    if n <= k_total:
        raise InferenceError(f"no residual degrees of freedom (N={n}, K={k_total})")
    scores = np.zeros((n_clusters, k))
    np.add.at(scores, codes, X * residuals[:, None])
    meat = scores.T @ scores
    bread = np.linalg.inv(X.T @ X)
    correction = (n_clusters / (n_clusters - 1)) * ((n - 1) / (n - k_total))
    cov = correction * bread @ meat @ bread
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return se, cov


def newey_west_se_mean(series: np.ndarray, lag: int) -> float:
    """Newey-West standard error of a series mean (Bartlett kernel).

    With the T/(T-1) correction this equals sd/sqrt(T) at lag 0.
    """
    c = np.asarray(series, dtype=float)
    T = len(c)
    if T < 2:
        return float("nan")
    c = c - c.mean()
    s = float(c @ c) / T
    for j in range(1, min(lag, T - 1) + 1):
        w = 1.0 - j / (lag + 1.0)
        s += 2.0 * w * float(c[j:] @ c[:-j]) / T
    return float(np.sqrt(max(s, 0.0) / (T - 1)))


def newey_west_cov(X: np.ndarray, residuals: np.ndarray, lag: int) -> np.ndarray:
    """HAC covariance for time-series OLS, Bartlett weights, T/(T-K) dof."""
    X = np.asarray(X, dtype=float)
    u = X * np.asarray(residuals, dtype=float)[:, None]
    T, k = X.shape
    S = u.T @ u / T
    for j in range(1, min(lag, T - 1) + 1):
        w = 1.0 - j / (lag + 1.0)
        gamma = u[j:].T @ u[:-j] / T
        S += w * (gamma + gamma.T)
    bread = np.linalg.inv(X.T @ X)
    cov = T * bread @ S @ bread
    if T > k:
        cov *= T / (T - k)
    return cov


@dataclass
class RegressionResult:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    t: np.ndarray
    n: int
    r2: float
    adj_r2: float
    absorbed: str
    dropped: list[str] = field(default_factory=list)
    dof_absorbed: int = 0

    def coef_for(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    def t_for(self, name: str) -> float:
        return float(self.t[self.names.index(name)])

    def se_for(self, name: str) -> float:
        return float(self.se[self.names.index(name)])


def _factor_columns(fe: Sequence) -> list[tuple[str, ...]]:
    return [(f,) if isinstance(f, str) else tuple(f) for f in fe]


def _factor_codes(sub: pd.DataFrame, fe_cols: tuple[str, ...]) -> np.ndarray:
    if len(fe_cols) == 1:
        codes, _ = pd.factorize(sub[fe_cols[0]], sort=True)
    else:
        key = pd.MultiIndex.from_frame(sub[list(fe_cols)])
        codes, _ = pd.factorize(key, sort=True)
    return codes.astype(np.int64)


def panel_regression(
    data: pd.DataFrame,
    y: str,
    regressors: Sequence[str],
    controls: Sequence[str] = (),
    fe: Sequence = (),
    cluster: str | None = "firm_id",
    winsorize_cols: Sequence[str] | None = None,
    winsor_bounds: tuple[float, float] = (0.01, 0.99),
) -> RegressionResult:
    """Winsorize, absorb fixed effects, run OLS, attach clustered SEs.

    ``fe`` entries are column names or tuples of names (interactions).
    ``winsorize_cols`` defaults to outcome + regressors + controls; pass
    an empty sequence to skip winsorizing.
    """
    fe_specs = _factor_columns(fe)
    fe_flat = sorted({c for spec in fe_specs for c in spec})
    used = [y, *regressors, *controls, *fe_flat]
    if cluster is not None:
        used.append(cluster)
    for col in dict.fromkeys(used):
        if col not in data.columns:
            raise MissingColumnError(col, "panel")
    sub = data[list(dict.fromkeys(used))].dropna()
    if sub.empty:
        raise EstimationError("empty estimation sample after listwise deletion")
    sub = sub.copy()

    if winsorize_cols is None:
        winsorize_cols = [y, *regressors, *controls]
    for col in dict.fromkeys(winsorize_cols):
        sub[col] = winsorize(sub[col].to_numpy(dtype=float), *winsor_bounds)

    x_names = list(regressors) + [c for c in controls if c not in regressors]
    yx = sub[[y, *x_names]].to_numpy(dtype=float)

    if fe_specs:
        factors = [_factor_codes(sub, spec) for spec in fe_specs]
        demeaned = absorb_fixed_effects(yx, factors)
        dof_absorbed = absorbed_degrees_of_freedom(factors)
        design = demeaned[:, 1:]
        outcome = demeaned[:, 0]
        names = x_names
        absorbed_desc = " + ".join("#".join(spec) for spec in fe_specs)
    else:
        design = np.column_stack([np.ones(len(sub)), yx[:, 1:]])
        outcome = yx[:, 0]
        names = ["const", *x_names]
        dof_absorbed = 0
        absorbed_desc = "none"

    fit = ols(outcome, design, names)

    cluster_labels = (
        sub[cluster].to_numpy() if cluster is not None else np.arange(len(sub))
    )
    se, _ = cluster_robust_se(fit.design, fit.residuals, cluster_labels, dof_absorbed)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = fit.coef / se

    y_raw = sub[y].to_numpy(dtype=float)
    tss = float(((y_raw - y_raw.mean()) ** 2).sum())
    ssr = float((fit.residuals**2).sum())
    n = len(sub)
    k_total = len(fit.coef) + dof_absorbed
    r2 = 1.0 - ssr / tss if tss > 0 else float("nan")
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / (n - k_total) if n > k_total else float("nan")

    return RegressionResult(
        names=fit.names,
        coef=fit.coef,
        se=se,
        t=t,
        n=n,
        r2=r2,
        adj_r2=adj_r2,
        absorbed=absorbed_desc,
        dropped=fit.dropped,
        dof_absorbed=dof_absorbed,
    )
