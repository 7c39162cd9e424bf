"""
Expected returns and return covariance for one rebalance date.

Expected returns come from a pooled ridge regression of next-month returns
on the standardized features.  The covariance is the trailing sample
covariance of monthly returns, shrunk toward its own diagonal, with a small
ridge added only when the result is not safely positive definite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from .errors import AlignmentError, EmptyUniverseError, InsufficientDataError, SingularFitError
from .panel import PointInTimePanel
from .preprocess import FeatureMatrix, rank_correlation

logger = logging.getLogger(__name__)

MU_MODELS = ("ridge", "fama_macbeth", "rank_ic")


@dataclass
class ReturnModel:
    beta: pd.Series
    intercept: float
    n_observations: int
    method: str = "ridge"


@dataclass
class SignalEstimate:
    date: pd.Timestamp
    ids: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    beta: pd.Series
    diagnostics: dict = field(default_factory=dict)


def _ridge(x: np.ndarray, y: np.ndarray, ridge: float) -> tuple[np.ndarray, float]:
    """Per-observation ridge: (X'X/n + ridge*I) b = X'y/n on centered data."""
    n, k = x.shape
    xm = x.mean(axis=0)
    ym = y.mean()
    xc = x - xm
    gram = xc.T @ xc / n + ridge * np.eye(k)
    rhs = xc.T @ (y - ym) / n
    if ridge == 0 and np.linalg.matrix_rank(xc) < k:
        raise SingularFitError("features are collinear on the training sample; set ridge > 0")
    try:
        beta = scipy.linalg.solve(gram, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        raise SingularFitError("normal equations are singular; set ridge > 0") from None
    return beta, float(ym - xm @ beta)


def fit_return_model(
    features: pd.DataFrame,
    forward_returns,
    ridge: float = 1e-3,
    method: str = "ridge",
    dates=None,
) -> ReturnModel:
    """Fit feature coefficients for next-month returns on pooled training rows.

    Parameters
    ----------
    features : DataFrame
        Pooled (date, stock) observations of standardized features.
    forward_returns : array-like
        Next-month return for each row.
    ridge : float
        Penalty per observation in z-unit scale, so duplicating every row
        leaves the fit unchanged.
    method : {"ridge", "fama_macbeth", "rank_ic"}
        ``fama_macbeth`` averages per-date ridge slopes; ``rank_ic`` uses the
        mean per-date rank IC of each feature as its coefficient (a score,
        not a return forecast).
    dates : array-like, optional
        Row dates; required by the per-date methods.
    """
    if method not in MU_MODELS:
        raise ValueError(f"unknown mu model {method!r}, expected one of {MU_MODELS}")
    x = features.to_numpy(dtype=float)
    y = np.asarray(forward_returns, dtype=float)
    n, k = x.shape
    if len(y) != n:
        raise AlignmentError(f"{n} feature rows but {len(y)} forward returns")
    if ridge == 0 and n <= k:
        raise SingularFitError(f"{n} observations for {k} features with ridge = 0; set ridge > 0")
    if n < 10 * k:
        raise InsufficientDataError(f"need at least {10 * k} pooled observations for {k} features, got {n}")

    if method == "ridge":
        beta, intercept = _ridge(x, y, ridge)
    else:
        if dates is None:
            raise ValueError(f"method {method!r} needs per-row dates")
        dates = np.asarray(dates)
        slopes, icepts = [], []
        for d in np.unique(dates):
            rows = dates == d
            if rows.sum() <= k:
                continue
            if method == "fama_macbeth":
                b, c = _ridge(x[rows], y[rows], max(ridge, 1e-12))
            else:
                b = np.array([rank_correlation(x[rows, j], y[rows]) for j in range(k)])
                c = 0.0
            slopes.append(b)
            icepts.append(c)
        if not slopes:
            raise InsufficientDataError("no training date has more stocks than features")
        beta = np.mean(slopes, axis=0)
        intercept = float(np.mean(icepts))
    return ReturnModel(pd.Series(beta, index=list(features.columns)), intercept, n, method)


def score_mu(matrix: FeatureMatrix | pd.DataFrame, beta: pd.Series) -> np.ndarray:
    """Expected returns ``x_i . beta`` (no intercept); missing entries count as zero."""
    if isinstance(matrix, FeatureMatrix):
        names, values = list(matrix.feature_names), matrix.values
    else:
        names, values = list(matrix.columns), matrix.to_numpy(dtype=float)
    if set(names) != set(beta.index) or len(names) != len(beta):
        raise AlignmentError(f"feature columns {names} do not match coefficients {list(beta.index)}")
    b = beta.reindex(names).to_numpy(dtype=float)
    return np.nan_to_num(values, nan=0.0) @ b


@dataclass
class CovarianceEstimate:
    ids: np.ndarray
    sigma: np.ndarray
    diagnostics: dict

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.sigma, index=self.ids, columns=self.ids)


def return_window(view: PointInTimePanel, ids, window_months: int = 36) -> pd.DataFrame:
    """Monthly ``ret`` for ``ids`` over the trailing window ending at the view date.

    Rows are the last ``window_months`` panel dates, columns are ids; absent
    observations are NaN.
    """
    t = view.as_of_date if view.as_of_date is not None else view.frame["date"].max()
    rows_end = view.rows_until(t)
    calendar = view.dates[view.dates <= t][-window_months:]
    ids = np.asarray(ids)
    out = np.full((len(calendar), len(ids)), np.nan)
    if len(calendar):
        start = int(np.searchsorted(view._date_values, np.datetime64(calendar[0]), "left"))
        sub = view.frame.iloc[start:rows_end]
        col = pd.Index(ids).get_indexer(sub["permno"].to_numpy())
        row = calendar.get_indexer(sub["date"].to_numpy())
        hit = col >= 0
        out[row[hit], col[hit]] = sub["ret"].to_numpy(dtype=float)[hit]
    return pd.DataFrame(out, index=calendar, columns=ids)


def shrink_to_diagonal(sample: np.ndarray, shrinkage: float) -> np.ndarray:
    """``(1 - s) * S + s * diag(S)``; the diagonal is left exactly as in ``S``."""
    out = (1.0 - shrinkage) * sample
    np.fill_diagonal(out, np.diag(sample))
    return out


def estimate_sigma(
    view: PointInTimePanel,
    ids,
    window_months: int = 36,
    shrinkage: float = 0.1,
    min_observations: int = 12,
    ridge_eps: float = 1e-6,
    max_condition: float = 1e8,
) -> CovarianceEstimate:
    """Shrunk trailing covariance of monthly returns for the ids with enough history.

    Ids with fewer than ``min_observations`` returns in the window are
    dropped; remaining gaps are filled with the id's own window mean.  If the
    shrunk matrix has a non-positive eigenvalue or a condition number above
    ``max_condition``, ``ridge_eps * trace(S) / n`` is added to the diagonal.
    """
    if window_months < 2:
        raise ValueError("window_months must be at least 2")
    wide = return_window(view, ids, window_months)
    counts = wide.notna().sum(axis=0)
    kept = counts[counts >= min_observations].index
    if len(kept) == 0 or len(wide) < 2:
        t = view.as_of_date
        raise EmptyUniverseError(
            f"no security has {min_observations} returns in the {window_months}-month window"
            + (f" ending {t:%Y-%m-%d}" if t is not None else "")
        )
    r = wide[kept].to_numpy(dtype=float)
    col_mean = np.nanmean(r, axis=0)
    gaps = np.isnan(r)
    r[gaps] = np.take(col_mean, np.nonzero(gaps)[1])

    dev = r - r.mean(axis=0)
    # a constant series has exactly zero variance, not round-off noise
    dev[:, np.ptp(r, axis=0) == 0] = 0.0
    sample = dev.T @ dev / (len(r) - 1)
    sigma = shrink_to_diagonal(sample, shrinkage)
    n = sigma.shape[0]
    eig = np.linalg.eigvalsh(sigma)
    cond = np.inf if eig[0] <= 0 else eig[-1] / eig[0]
    ridge_applied = 0.0
    if eig[0] <= 0 or cond > max_condition:
        scale = np.trace(sample) / n
        ridge_applied = ridge_eps * (scale if scale > 0 else 1.0)
        sigma = sigma + ridge_applied * np.eye(n)
        eig = eig + ridge_applied
        cond = eig[-1] / eig[0]
    sigma = 0.5 * (sigma + sigma.T)
    diagnostics = {
        "condition_number": float(cond),
        "shrinkage": float(shrinkage),
        "ridge_applied": float(ridge_applied),
        "observations": int(len(wide)),
        "excluded_short_history": int(len(wide.columns) - len(kept)),
        "imputed_cells": int(gaps.sum()),
    }
    return CovarianceEstimate(kept.to_numpy(), sigma, diagnostics)
