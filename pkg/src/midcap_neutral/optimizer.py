r"""
Dollar-neutral mean-variance weights.

Solves

.. math::

    \max_w \; w'\mu - A\, w'\Sigma w \quad \text{s.t.} \quad 1'w = 0

in closed form.  Stationarity gives :math:`2A\Sigma w = \mu - \lambda 1` and
the budget constraint fixes :math:`\lambda = 1'\Sigma^{-1}\mu / 1'\Sigma^{-1}1`,
so two Cholesky solves are enough.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from .errors import DegenerateUniverseError, NotPositiveDefiniteError, PositionError


@dataclass
class OptimizerParams:
    risk_aversion: float = 2.0
    gross_target: float = 1.0
    max_weight: float | None = None

    def __post_init__(self):
        if not self.risk_aversion > 0:
            raise ValueError(f"risk_aversion must be positive, got {self.risk_aversion}")
        if not self.gross_target > 0:
            raise ValueError(f"gross_target must be positive, got {self.gross_target}")


@dataclass
class PortfolioWeights:
    date: pd.Timestamp | None
    ids: np.ndarray
    w: np.ndarray
    neutrality_residual: float
    gross: float
    objective_value: float
    multiplier: float = 0.0
    kkt_residual: float = 0.0
    raw_objective_value: float | None = None
    zero_portfolio: bool = False
    flags: list[str] = field(default_factory=list)

    def to_series(self) -> pd.Series:
        return pd.Series(self.w, index=pd.Index(self.ids, name="permno"), name="weight")

    @property
    def long_dollars(self) -> float:
        return float(self.w[self.w > 0].sum())

    @property
    def short_dollars(self) -> float:
        return float(-self.w[self.w < 0].sum())


def objective(w: np.ndarray, mu: np.ndarray, sigma: np.ndarray, risk_aversion: float) -> float:
    return float(w @ mu - risk_aversion * (w @ sigma @ w))


def solve_dollar_neutral(
    mu,
    sigma,
    params: OptimizerParams | None = None,
    ids=None,
    date=None,
) -> PortfolioWeights:
    """Unique maximizer of ``w'mu - A w'Sigma w`` subject to ``sum(w) = 0``.

    ``mu`` is shifted by its first entry before solving.  The optimum does
    not depend on a common shift, and this keeps ``mu = c * 1`` mapping to an
    exactly zero portfolio.
    """
    params = params or OptimizerParams()
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    n = mu.shape[0]
    if sigma.shape != (n, n):
        raise ValueError(f"mu has {n} entries but sigma is {sigma.shape}")
    if n < 2:
        raise DegenerateUniverseError(f"dollar-neutral portfolio needs at least 2 securities, got {n}")
    try:
        factor = scipy.linalg.cho_factor(sigma, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        raise NotPositiveDefiniteError(
            "covariance is not positive definite; regularize it before optimizing"
        ) from None

    anchor = mu[0]
    centered = mu - anchor
    ones = np.ones(n)
    inv_ones = scipy.linalg.cho_solve(factor, ones)
    inv_mu = scipy.linalg.cho_solve(factor, centered)
    lam = (ones @ inv_mu) / (ones @ inv_ones)
    w = scipy.linalg.cho_solve(factor, centered - lam * ones) / (2.0 * params.risk_aversion)
    # one refinement step along the constraint normal: keeps 1'w at round-off
    w -= (w.sum() / inv_ones.sum()) * inv_ones

    a = params.risk_aversion
    kkt = np.max(np.abs(2.0 * a * sigma @ w - centered + lam * ones))
    obj = objective(w, mu, sigma, a)
    return PortfolioWeights(
        date=None if date is None else pd.Timestamp(date),
        ids=np.arange(n) if ids is None else np.asarray(ids),
        w=w,
        neutrality_residual=float(abs(w.sum())),
        gross=float(np.abs(w).sum()),
        objective_value=obj,
        multiplier=float(lam + anchor),
        kkt_residual=float(kkt),
        raw_objective_value=obj,
        zero_portfolio=not np.any(w),
    )


def normalize_gross(weights: PortfolioWeights, params: OptimizerParams | None = None) -> PortfolioWeights:
    """Rescale so that long and short books are each ``gross_target`` of capital.

    A zero portfolio is returned unchanged with ``zero_portfolio`` set.  An
    optional ``max_weight`` cap clips positions and re-centers them on zero.
    """
    params = params or OptimizerParams()
    if weights.gross == 0:
        return PortfolioWeights(
            weights.date, weights.ids, weights.w.copy(), weights.neutrality_residual, 0.0,
            weights.objective_value, weights.multiplier, weights.kkt_residual,
            weights.raw_objective_value, True, [*weights.flags, "zero_portfolio"],
        )
    w = weights.w * (2.0 * params.gross_target / weights.gross)
    flags = list(weights.flags)
    if params.max_weight is not None:
        capped = np.clip(w, -params.max_weight, params.max_weight)
        if not np.array_equal(capped, w):
            flags.append("max_weight_applied")
            w = capped - capped.mean()
    return PortfolioWeights(
        date=weights.date,
        ids=weights.ids,
        w=w,
        neutrality_residual=float(abs(w.sum())),
        gross=float(np.abs(w).sum()),
        objective_value=weights.objective_value,
        multiplier=weights.multiplier,
        kkt_residual=weights.kkt_residual,
        raw_objective_value=weights.raw_objective_value,
        zero_portfolio=False,
        flags=flags,
    )


@dataclass
class Positions:
    shares: pd.Series
    long_dollars: float
    short_dollars: float
    rounded_imbalance: float


def weights_to_positions(weights: PortfolioWeights, prices, capital: float) -> Positions:
    """Signed whole-share positions, truncated toward zero.

    ``prices`` is a mapping or Series keyed by id.  The dollar imbalance left
    by rounding is reported, not corrected.
    """
    if not capital > 0:
        raise ValueError(f"capital must be positive, got {capital}")
    prices = pd.Series(prices, dtype=float)
    px = prices.reindex(weights.ids).to_numpy(dtype=float)
    active = weights.w != 0
    bad = active & ~(np.isfinite(px) & (px > 0))
    if bad.any():
        missing = weights.ids[bad][0]
        raise PositionError(f"no positive price for id {missing} with weight {weights.w[bad][0]:.6g}")
    dollars = weights.w * capital
    with np.errstate(divide="ignore", invalid="ignore"):
        shares = np.where(active, np.trunc(dollars / px), 0.0)
    held = np.where(active, shares * px, 0.0)
    return Positions(
        shares=pd.Series(shares.astype(np.int64), index=pd.Index(weights.ids, name="permno"), name="shares"),
        long_dollars=float(dollars[dollars > 0].sum()),
        short_dollars=float(-dollars[dollars < 0].sum()),
        rounded_imbalance=float(held.sum()),
    )
