"""
Three-phase walk-forward backtest with monthly rebalancing.

Each phase fits feature selection and the return model on its fit window,
then walks its evaluation window one month at a time.  On rebalance date
``t`` only ``as_of(panel, t)`` is consulted to form weights; the realized
return is ``w_t . ret_{t+1}`` using the next panel date.  Returns are keyed
by the date they are realized, and a month is evaluated when that date
falls inside the evaluation window, so no phase ever reads a return dated
after its window.

Work that does not depend on the fitted model (standardized cross-sections,
covariance estimates, next-month returns) is prepared once per month in a
:class:`MonthContext` and shared between phases and permutation runs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .config import PHASE_NAMES, Config
from .errors import (
    AlignmentError,
    EmptyMatrixError,
    EmptyUniverseError,
    InsufficientDataError,
    MissingRangeError,
    UndefinedSharpeError,
)
from .features import FEATURE_NAMES, compute_features
from .optimizer import OptimizerParams, PortfolioWeights, normalize_gross, solve_dollar_neutral
from .panel import PointInTimePanel, as_of, midcap_mask
from .preprocess import (
    FeatureMatrix,
    PreprocessReport,
    apply_feature_list,
    correlation_prune,
    standardize_and_clip,
    variance_inflation,
    vif_prune,
)
from .signals import CovarianceEstimate, ReturnModel, estimate_sigma, fit_return_model, score_mu

logger = logging.getLogger(__name__)

MONTHS_PER_YEAR = 12


@dataclass(frozen=True)
class PhaseSpec:
    name: str
    fit_start: pd.Timestamp
    fit_end: pd.Timestamp
    eval_start: pd.Timestamp
    eval_end: pd.Timestamp

    def __post_init__(self):
        for attr in ("fit_start", "fit_end", "eval_start", "eval_end"):
            object.__setattr__(self, attr, pd.Timestamp(getattr(self, attr)))
        if self.name not in PHASE_NAMES:
            raise ValueError(f"phase name must be one of {PHASE_NAMES}, got {self.name!r}")
        if self.fit_start > self.fit_end or self.eval_start > self.eval_end:
            raise ValueError(f"{self.name}: date ranges are not ordered")
        if self.name != "train" and not self.fit_end < self.eval_start:
            raise ValueError(f"{self.name}: fit window must end before evaluation starts")

    @property
    def in_sample(self) -> bool:
        return self.eval_start <= self.fit_end

    @classmethod
    def from_config(cls, config: Config, name: str) -> "PhaseSpec":
        return cls(name, *config.phase_dates(name))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "fit_start": f"{self.fit_start:%Y-%m-%d}",
            "fit_end": f"{self.fit_end:%Y-%m-%d}",
            "eval_start": f"{self.eval_start:%Y-%m-%d}",
            "eval_end": f"{self.eval_end:%Y-%m-%d}",
            "in_sample": self.in_sample,
        }


# -- performance statistics -----------------------------------------------------


def compute_sharpe(monthly_returns, periods_per_year: int = MONTHS_PER_YEAR) -> float:
    """Annualized Sharpe: mean / sample std (ddof=1) * sqrt(12), risk-free rate 0."""
    r = np.asarray(monthly_returns, dtype=float)
    if r.size < 2:
        raise InsufficientDataError(f"Sharpe needs at least 2 returns, got {r.size}")
    sd = r.std(ddof=1)
    if not sd > 0:
        raise UndefinedSharpeError("return series has zero standard deviation")
    return float(r.mean() / sd * np.sqrt(periods_per_year))


def compare_benchmark(portfolio: pd.Series, benchmark: pd.Series) -> pd.DataFrame:
    """Inner-join two monthly return series and compound each."""
    joined = pd.concat([portfolio.rename("portfolio"), benchmark.rename("benchmark")], axis=1, join="inner")
    joined = joined.dropna()
    if joined.empty:
        raise AlignmentError("portfolio and benchmark returns share no dates")
    joined["excess"] = joined["portfolio"] - joined["benchmark"]
    joined["cum_portfolio"] = (1.0 + joined["portfolio"]).cumprod() - 1.0
    joined["cum_benchmark"] = (1.0 + joined["benchmark"]).cumprod() - 1.0
    return joined


def turnover(weights_history: dict) -> float:
    """Mean of sum |w_t - w_{t-1}| over consecutive rebalances (0 with fewer than two)."""
    series = [w.to_series() for _, w in sorted(weights_history.items())]
    if len(series) < 2:
        return 0.0
    moves = []
    for prev, cur in zip(series[:-1], series[1:]):
        idx = prev.index.union(cur.index)
        moves.append(float((cur.reindex(idx, fill_value=0.0) - prev.reindex(idx, fill_value=0.0)).abs().sum()))
    return float(np.mean(moves))


# -- per-date building blocks -----------------------------------------------------


def standardized_cross_section(frame_t: pd.DataFrame, config: Config, date) -> FeatureMatrix:
    """Features of one date's mid-cap rows, standardized over that cross-section.

    All candidate features are returned; callers project onto a frozen list.
    """
    feats = compute_features(frame_t).set_index("permno")[FEATURE_NAMES]
    fm = standardize_and_clip(feats, config.z_clip, date)
    return apply_feature_list(fm, FEATURE_NAMES)


@dataclass
class TrainingPool:
    """Pooled (date, permno) training rows with next-month return labels."""

    features: pd.DataFrame
    labels: np.ndarray
    dates: np.ndarray
    candidates: list[str]
    dropped: list[tuple[str, str]]
    _vif_cache: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.labels)

    def vif_selection(self, threshold: float) -> tuple[list[str], PreprocessReport]:
        """VIF pruning of the candidates; label-free, so cached across label permutations."""
        if threshold not in self._vif_cache:
            report = PreprocessReport(candidates=list(self.candidates), n_observations=len(self))
            report.dropped_features.extend(self.dropped)
            self._vif_cache[threshold] = vif_prune(self.features, threshold, report)
        survivors, report = self._vif_cache[threshold]
        return list(survivors), report


def build_training_pool(panel: PointInTimePanel, fit_start, fit_end, config: Config) -> TrainingPool:
    """Stack standardized mid-cap cross-sections over the fit window.

    A row dated ``t`` is labelled with the return dated at the next panel
    date; both must lie inside ``[fit_start, fit_end]``.  Only data up to
    ``fit_end`` is read.
    """
    fit_start, fit_end = pd.Timestamp(fit_start), pd.Timestamp(fit_end)
    frame = as_of(panel, fit_end).frame
    frame = frame[frame["date"] >= fit_start]
    calendar = pd.DatetimeIndex(np.unique(frame["date"].to_numpy()))
    if len(calendar) < 2:
        raise MissingRangeError(f"fit window {fit_start:%Y-%m-%d}..{fit_end:%Y-%m-%d} has fewer than 2 dates")
    rets = frame.set_index(["date", "permno"])["ret"]

    mids = frame[midcap_mask(frame, config.midcap_min, config.midcap_max) & (frame["date"] < calendar[-1])]
    # features are row-local, so one pass over the window equals per-date passes
    feats = compute_features(mids).set_index("permno")[FEATURE_NAMES]
    next_date = calendar[calendar.get_indexer(mids["date"].to_numpy()) + 1]
    labels_all = rets.reindex(pd.MultiIndex.from_arrays([next_date, mids["permno"].to_numpy()])).to_numpy()
    row_dates = mids["date"].to_numpy()
    bounds = np.flatnonzero(np.r_[True, row_dates[1:] != row_dates[:-1], True])

    blocks, labels, dates = [], [], []
    ever_used = np.zeros(len(FEATURE_NAMES), dtype=bool)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        t = pd.Timestamp(row_dates[lo])
        y = labels_all[lo:hi]
        ok = np.isfinite(y)
        if hi - lo < 2 or not ok.any():
            continue
        try:
            fm = standardize_and_clip(feats.iloc[lo:hi], config.z_clip, t)
        except EmptyMatrixError:
            logger.info("training date %s skipped: every feature degenerate", t.date())
            continue
        ever_used |= np.isin(FEATURE_NAMES, fm.feature_names)
        full = apply_feature_list(fm, FEATURE_NAMES)
        blocks.append(full.values[ok])
        labels.append(y[ok])
        dates.append(np.full(ok.sum(), row_dates[lo]))
    if not blocks:
        raise InsufficientDataError("no labelled training rows in the fit window")
    x = pd.DataFrame(np.vstack(blocks), columns=FEATURE_NAMES)
    candidates = [f for f, used in zip(FEATURE_NAMES, ever_used) if used]
    dropped = [(f, "degenerate") for f, used in zip(FEATURE_NAMES, ever_used) if not used]
    return TrainingPool(x[candidates], np.concatenate(labels), np.concatenate(dates), candidates, dropped)


@dataclass
class MonthContext:
    """Everything about one rebalance that does not depend on the fitted model."""

    date: pd.Timestamp
    realized_date: pd.Timestamp
    ids: np.ndarray
    features: FeatureMatrix
    covariance: CovarianceEstimate
    next_returns: np.ndarray
    delisted: list[int]


def prepare_month(panel: PointInTimePanel, t, t_next, config: Config) -> MonthContext:
    """Build the model-independent inputs for rebalancing at ``t``.

    Raises :class:`EmptyUniverseError` or :class:`EmptyMatrixError` when the
    month cannot be traded.
    """
    t, t_next = pd.Timestamp(t), pd.Timestamp(t_next)
    view = as_of(panel, t)
    cs = view.cross_section(t)
    cs = cs[midcap_mask(cs, config.midcap_min, config.midcap_max)]
    if cs.empty:
        raise EmptyUniverseError(f"no mid-cap securities on {t:%Y-%m-%d}")
    fm = standardized_cross_section(cs, config, t)
    cov = estimate_sigma(
        view,
        fm.ids,
        window_months=config.cov_window_months,
        shrinkage=config.shrinkage,
        min_observations=config.min_history_months,
    )
    order = {pid: i for i, pid in enumerate(fm.ids)}
    rows = np.array([order[pid] for pid in cov.ids], dtype=int)
    fm = FeatureMatrix(t, cov.ids, fm.feature_names, fm.values[rows], fm.dropped_features)

    nxt = panel.cross_section(t_next).set_index("permno")["ret"]
    next_ret = nxt.reindex(cov.ids).to_numpy(dtype=float)
    gone = ~np.isfinite(next_ret)
    delisted = [int(p) for p in cov.ids[gone]]
    next_ret = np.where(gone, 0.0, next_ret)
    return MonthContext(t, t_next, cov.ids, fm, cov, next_ret, delisted)


def rebalance_schedule(panel: PointInTimePanel, eval_start, eval_end) -> list[tuple[pd.Timestamp, pd.Timestamp]]:
    """(rebalance date, realization date) pairs with realization inside the window."""
    calendar = panel.dates
    pairs = []
    for prev, cur in zip(calendar[:-1], calendar[1:]):
        if eval_start <= cur <= eval_end:
            pairs.append((prev, cur))
    return pairs


def check_coverage(panel: PointInTimePanel, spec: PhaseSpec) -> None:
    calendar = panel.dates
    if len(calendar) == 0:
        raise MissingRangeError("panel is empty")
    first, last = calendar[0], calendar[-1]

    def month(ts):
        return ts.year * 12 + ts.month

    if month(first) > month(spec.fit_start) or month(last) < month(spec.eval_end):
        raise MissingRangeError(
            f"{spec.name} phase needs panel dates {spec.fit_start:%Y-%m} to {spec.eval_end:%Y-%m}, "
            f"panel covers {first:%Y-%m} to {last:%Y-%m}"
        )


# -- phase evaluation -------------------------------------------------------------


@dataclass
class PhaseData:
    """Model-independent inputs of one phase: training pool plus month contexts."""

    spec: PhaseSpec
    pool: TrainingPool
    months: list[MonthContext]
    gaps: list[tuple[str, str]]
    config: Config


@dataclass
class BacktestPhaseResult:
    phase: PhaseSpec
    monthly_returns: pd.Series
    weights_history: dict
    sharpe_annualized: float
    sharpe_monthly: float
    cumulative_return: float
    turnover: float
    preprocess: PreprocessReport
    model: ReturnModel
    gaps: list[tuple[str, str]] = field(default_factory=list)
    delist_log: list[tuple[str, int]] = field(default_factory=list)
    benchmark: pd.DataFrame | None = None

    def summary(self) -> dict:
        out = {
            "phase": self.phase.to_dict(),
            "months": int(len(self.monthly_returns)),
            "sharpe_annualized": self.sharpe_annualized,
            "sharpe_monthly": self.sharpe_monthly,
            "cumulative_return": self.cumulative_return,
            "mean_monthly_return": float(self.monthly_returns.mean()),
            "turnover": self.turnover,
            "max_neutrality_residual": max(
                (w.neutrality_residual for w in self.weights_history.values()), default=0.0
            ),
            "surviving_features": list(self.preprocess.surviving),
            "beta": {k: float(v) for k, v in self.model.beta.items()},
            "training_observations": self.model.n_observations,
            "skipped_months": [{"date": d, "reason": r} for d, r in self.gaps],
            "delisted_positions": len(self.delist_log),
            "preprocess": self.preprocess.to_dict(),
        }
        if self.benchmark is not None:
            out["benchmark"] = {
                "months": int(len(self.benchmark)),
                "cumulative_portfolio": float(self.benchmark["cum_portfolio"].iloc[-1]),
                "cumulative_benchmark": float(self.benchmark["cum_benchmark"].iloc[-1]),
                "mean_excess": float(self.benchmark["excess"].mean()),
            }
        return out

    def returns_frame(self) -> pd.DataFrame:
        frame = self.monthly_returns.rename("portfolio").to_frame()
        if self.benchmark is not None:
            frame = frame.join(self.benchmark[["benchmark", "excess"]], how="left")
        frame.index.name = "date"
        return frame

    def weights_frame(self) -> pd.DataFrame:
        rows = []
        for t, w in sorted(self.weights_history.items()):
            rows.append(pd.DataFrame({"date": t, "permno": w.ids, "weight": w.w}))
        if not rows:
            return pd.DataFrame(columns=["date", "permno", "weight"])
        return pd.concat(rows, ignore_index=True)


def prepare_phase(
    panel: PointInTimePanel,
    spec: PhaseSpec,
    config: Config,
    month_cache: dict | None = None,
    pool_cache: dict | None = None,
) -> PhaseData:
    """Build the training pool and every evaluation month of one phase."""
    check_coverage(panel, spec)
    key = (spec.fit_start, spec.fit_end)
    if pool_cache is not None and key in pool_cache:
        pool = pool_cache[key]
    else:
        pool = build_training_pool(panel, spec.fit_start, spec.fit_end, config)
        if pool_cache is not None:
            pool_cache[key] = pool

    months, gaps = [], []
    schedule = rebalance_schedule(panel, spec.eval_start, spec.eval_end)
    if not schedule:
        raise MissingRangeError(f"{spec.name}: no rebalance dates in the evaluation window")
    for t, t_next in schedule:
        if month_cache is not None and t in month_cache:
            ctx = month_cache[t]
        else:
            try:
                ctx = prepare_month(panel, t, t_next, config)
            except (EmptyUniverseError, EmptyMatrixError) as exc:
                ctx = exc
            if month_cache is not None:
                month_cache[t] = ctx
        if isinstance(ctx, Exception):
            logger.info("%s: month %s skipped: %s", spec.name, t.date(), ctx)
            gaps.append((f"{t:%Y-%m-%d}", str(ctx)))
            continue
        months.append(ctx)
    return PhaseData(spec, pool, months, gaps, config)


def evaluate_phase(
    data: PhaseData,
    labels: np.ndarray | None = None,
    benchmark: pd.Series | None = None,
) -> BacktestPhaseResult:
    """Fit on the training pool and trade every prepared month.

    ``labels`` replaces the training forward returns (used for permutation
    tests); by default the true labels are used.
    """
    config = data.config
    pool = data.pool
    y = pool.labels if labels is None else np.asarray(labels, dtype=float)

    vif_survivors, vif_report = pool.vif_selection(config.vif_threshold)
    report = PreprocessReport(
        candidates=list(vif_report.candidates),
        elimination_order=list(vif_report.elimination_order),
        dropped_features=list(vif_report.dropped_features),
        n_observations=vif_report.n_observations,
    )
    survivors, report = correlation_prune(pool.features[vif_survivors], y, config.corr_threshold, report)
    report.vif_table = dict(
        zip(survivors, map(float, variance_inflation(pool.features[survivors].to_numpy(dtype=float))))
    )
    report.surviving = survivors
    model = fit_return_model(
        pool.features[survivors], y, ridge=config.ridge_mu, method=config.mu_model, dates=pool.dates
    )

    params = OptimizerParams(config.risk_aversion, config.gross_target, config.max_weight)
    returns, history, delists = {}, {}, []
    for ctx in data.months:
        fm = apply_feature_list(ctx.features, survivors)
        mu = score_mu(fm, model.beta)
        raw = solve_dollar_neutral(mu, ctx.covariance.sigma, params, ids=ctx.ids, date=ctx.date)
        w = normalize_gross(raw, params)
        history[ctx.date] = w
        returns[ctx.realized_date] = float(w.w @ ctx.next_returns)
        delists.extend((f"{ctx.realized_date:%Y-%m-%d}", p) for p in ctx.delisted)

    monthly = pd.Series(returns, dtype=float).sort_index()
    monthly.index.name = "date"
    sharpe = compute_sharpe(monthly.to_numpy())
    comparison = None
    if benchmark is not None:
        try:
            comparison = compare_benchmark(monthly, benchmark)
        except AlignmentError as exc:
            logger.warning("%s: benchmark comparison skipped: %s", data.spec.name, exc)
    return BacktestPhaseResult(
        phase=data.spec,
        monthly_returns=monthly,
        weights_history=history,
        sharpe_annualized=sharpe,
        sharpe_monthly=sharpe / np.sqrt(MONTHS_PER_YEAR),
        cumulative_return=float(np.prod(1.0 + monthly.to_numpy()) - 1.0),
        turnover=turnover(history),
        preprocess=report,
        model=model,
        gaps=list(data.gaps),
        delist_log=delists,
        benchmark=comparison,
    )


def run_phase(
    panel: PointInTimePanel,
    spec: PhaseSpec,
    config: Config,
    benchmark: pd.Series | None = None,
) -> BacktestPhaseResult:
    """Fit on ``spec``'s fit window and walk its evaluation window."""
    return evaluate_phase(prepare_phase(panel, spec, config), benchmark=benchmark)


@dataclass
class BacktestReport:
    phases: dict[str, BacktestPhaseResult]
    config: Config

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "phases": {name: res.summary() for name, res in self.phases.items()},
            "sharpe": {name: res.sharpe_annualized for name, res in self.phases.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def run_protocol(
    panel: PointInTimePanel,
    config: Config,
    benchmark: pd.Series | None = None,
) -> BacktestReport:
    """Train (in-sample), validate and test phases with a refit before test."""
    months: dict = {}
    pools: dict = {}
    results = {}
    for name in PHASE_NAMES:
        spec = PhaseSpec.from_config(config, name)
        data = prepare_phase(panel, spec, config, month_cache=months, pool_cache=pools)
        results[name] = evaluate_phase(data, benchmark=benchmark)
    return BacktestReport(results, config)


def permutation_sharpes(data: PhaseData, n_permutations: int = 200, seed: int = 0) -> np.ndarray:
    """Annualized Sharpe of the phase with training labels randomly permuted.

    Shuffling breaks the feature/return link in the fit while leaving the
    features, covariances and realized returns untouched.
    """
    rng = np.random.default_rng(seed)
    out = np.empty(n_permutations)
    for k in range(n_permutations):
        labels = rng.permutation(data.pool.labels)
        try:
            out[k] = evaluate_phase(data, labels=labels).sharpe_annualized
        except UndefinedSharpeError:
            out[k] = 0.0
    return out
