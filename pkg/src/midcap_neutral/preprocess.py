"""
Cross-sectional standardization and multicollinearity pruning.

The model matrix for one date is built by median-imputing each feature
within the cross-section, converting to z-scores with the population
standard deviation and clipping at +/- ``z_clip``.  Feature selection runs
once per fit window on the pooled training matrix: greedy VIF elimination
first, then one representative per group of highly correlated features.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy.sparse.csgraph import connected_components
from scipy.stats import rankdata

from .errors import EmptyMatrixError, InsufficientDataError

# relative scale under which a cross-sectional std counts as zero
_ZERO_STD_RTOL = 1e-12
# 1 - R^2 at or below this is perfect collinearity
_PERFECT_FIT_TOL = 1e-12
# above this condition number VIFs are computed by per-column least squares
_FAST_PATH_MAX_COND = 1e8


@dataclass
class FeatureMatrix:
    """One date's standardized, clipped cross-section."""

    date: pd.Timestamp | None
    ids: np.ndarray
    feature_names: list[str]
    values: np.ndarray
    dropped_features: list[tuple[str, str]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=pd.Index(self.ids, name="permno"), columns=self.feature_names)


@dataclass
class PreprocessReport:
    candidates: list[str] = field(default_factory=list)
    vif_table: dict[str, float] = field(default_factory=dict)
    elimination_order: list[tuple[str, float]] = field(default_factory=list)
    correlation_groups: list[dict] = field(default_factory=list)
    dropped_features: list[tuple[str, str]] = field(default_factory=list)
    surviving: list[str] = field(default_factory=list)
    n_observations: int = 0

    def to_dict(self) -> dict:
        out = asdict(self)
        # JSON has no infinity literal
        out["elimination_order"] = [
            {"feature": name, "vif": _json_float(v)} for name, v in self.elimination_order
        ]
        out["vif_table"] = {k: _json_float(v) for k, v in self.vif_table.items()}
        out["dropped_features"] = [{"feature": n, "reason": r} for n, r in self.dropped_features]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _json_float(x: float):
    return "inf" if np.isinf(x) else float(x)


def standardize_and_clip(
    raw: pd.DataFrame,
    z_clip: float = 3.0,
    date=None,
) -> FeatureMatrix:
    """Median-impute, z-score (population std) and clip each column of ``raw``.

    ``raw`` is one cross-section: rows are securities (index = permno),
    columns are features.  Columns with fewer than two observed values or
    zero dispersion are dropped as degenerate.
    """
    values = raw.to_numpy(dtype=float, copy=True)
    names = list(raw.columns)
    keep, dropped = [], []
    n_obs = np.sum(np.isfinite(values), axis=0)
    for j, name in enumerate(names):
        if n_obs[j] < 2:
            dropped.append((name, "degenerate"))
            continue
        col = values[:, j]
        col[~np.isfinite(col)] = np.median(col[np.isfinite(col)])
        mean = col.mean()
        std = col.std()
        if std <= _ZERO_STD_RTOL * max(1.0, abs(mean)):
            dropped.append((name, "degenerate"))
            continue
        values[:, j] = np.clip((col - mean) / std, -z_clip, z_clip)
        keep.append(j)
    if not keep:
        when = f" on {pd.Timestamp(date):%Y-%m-%d}" if date is not None else ""
        raise EmptyMatrixError(f"every feature is degenerate{when}")
    return FeatureMatrix(
        date=None if date is None else pd.Timestamp(date),
        ids=raw.index.to_numpy(),
        feature_names=[names[j] for j in keep],
        values=values[:, keep],
        dropped_features=dropped,
    )


def variance_inflation(values: np.ndarray) -> np.ndarray:
    """VIF of every column: 1 / (1 - R^2) from an OLS fit on the other columns plus an intercept."""
    x = np.asarray(values, dtype=float)
    n, k = x.shape
    out = np.ones(k)
    if k < 2:
        return out
    xc = x - x.mean(axis=0)
    gram = xc.T @ xc
    scale = np.sqrt(np.diag(gram))
    if np.all(scale > 0):
        corr = gram / np.outer(scale, scale)
        if np.linalg.cond(corr) < _FAST_PATH_MAX_COND:
            # well conditioned: VIF_j is the j-th diagonal entry of the inverse correlation matrix
            return np.diag(np.linalg.inv(corr)).copy()
    for j in range(k):
        y = xc[:, j]
        sst = y @ y
        if sst <= 0.0:
            out[j] = np.inf
            continue
        others = np.delete(xc, j, axis=1)
        coef, *_ = np.linalg.lstsq(others, y, rcond=None)
        resid = y - others @ coef
        unexplained = (resid @ resid) / sst
        out[j] = np.inf if unexplained <= _PERFECT_FIT_TOL else 1.0 / unexplained
    return out


def vif_prune(
    matrix: pd.DataFrame,
    threshold: float = 10.0,
    report: PreprocessReport | None = None,
) -> tuple[list[str], PreprocessReport]:
    """Remove the largest-VIF feature until every VIF is at most ``threshold``.

    Ties on the largest VIF (including several infinite ones) remove the
    feature that comes later in column order.
    """
    report = report if report is not None else PreprocessReport()
    names = list(matrix.columns)
    if len(matrix) < len(names) + 1:
        raise InsufficientDataError(
            f"VIF needs at least {len(names) + 1} rows for {len(names)} features, got {len(matrix)}"
        )
    values = matrix.to_numpy(dtype=float)
    alive = list(range(len(names)))
    while len(alive) > 1:
        vif = variance_inflation(values[:, alive])
        top = vif.max()
        if not top > threshold:
            break
        j = int(np.flatnonzero(vif == top)[-1])
        report.elimination_order.append((names[alive[j]], float(top)))
        report.dropped_features.append((names[alive[j]], "vif"))
        del alive[j]
    final = variance_inflation(values[:, alive])
    report.vif_table = {names[a]: float(v) for a, v in zip(alive, final)}
    return [names[a] for a in alive], report


def rank_correlation(x: np.ndarray, y: np.ndarray) -> float:
    """Spearman correlation (average ranks for ties); 0 when either side is constant."""
    rx = rankdata(x)
    ry = rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    den = np.sqrt((rx @ rx) * (ry @ ry))
    return float(rx @ ry / den) if den > 0 else 0.0


def correlation_prune(
    matrix: pd.DataFrame,
    forward_returns,
    threshold: float = 0.8,
    report: PreprocessReport | None = None,
) -> tuple[list[str], PreprocessReport]:
    """Keep one feature per connected group of |Pearson| > ``threshold`` edges.

    The kept feature has the largest absolute rank correlation with the
    forward returns; exact ties go to the alphabetically first name.
    """
    report = report if report is not None else PreprocessReport()
    names = list(matrix.columns)
    if len(names) < 2:
        return names, report
    values = matrix.to_numpy(dtype=float)
    y = np.asarray(forward_returns, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(values, rowvar=False)
    corr = np.nan_to_num(corr, nan=0.0)
    adjacency = np.abs(corr) > threshold
    np.fill_diagonal(adjacency, False)
    n_groups, labels = connected_components(adjacency, directed=False)

    drop = set()
    for g in range(n_groups):
        members = [names[j] for j in np.flatnonzero(labels == g)]
        if len(members) < 2:
            continue
        ic = {m: abs(rank_correlation(values[:, names.index(m)], y)) for m in members}
        best = min(members, key=lambda m: (-ic[m], m))
        report.correlation_groups.append(
            {"members": members, "representative": best, "abs_rank_ic": ic}
        )
        for m in members:
            if m != best:
                drop.add(m)
                report.dropped_features.append((m, "correlation"))
    return [n for n in names if n not in drop], report


def fit_feature_selection(
    matrix: pd.DataFrame,
    forward_returns,
    vif_threshold: float = 10.0,
    corr_threshold: float = 0.8,
) -> tuple[list[str], PreprocessReport]:
    """VIF elimination followed by correlation-group pruning on a training matrix."""
    report = PreprocessReport(candidates=list(matrix.columns), n_observations=len(matrix))
    survivors, report = vif_prune(matrix, vif_threshold, report)
    survivors, report = correlation_prune(matrix[survivors], forward_returns, corr_threshold, report)
    report.vif_table = {
        name: float(v)
        for name, v in zip(survivors, variance_inflation(matrix[survivors].to_numpy(dtype=float)))
    }
    report.surviving = survivors
    return survivors, report


def apply_feature_list(fm: FeatureMatrix, features: list[str]) -> FeatureMatrix:
    """Project a standardized cross-section onto a frozen feature list.

    A frozen feature that was degenerate on this date enters as zeros, the
    value its median-imputed entries would have taken.
    """
    pos = {n: j for j, n in enumerate(fm.feature_names)}
    values = np.zeros((len(fm.ids), len(features)))
    for k, name in enumerate(features):
        if name in pos:
            values[:, k] = fm.values[:, pos[name]]
    dropped = [d for d in fm.dropped_features if d[0] in features]
    return FeatureMatrix(fm.date, fm.ids, list(features), values, dropped)
