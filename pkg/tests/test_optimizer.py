import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_spd
from midcap_neutral.errors import DegenerateUniverseError, NotPositiveDefiniteError, PositionError
from midcap_neutral.optimizer import (
    OptimizerParams,
    PortfolioWeights,
    normalize_gross,
    objective,
    solve_dollar_neutral,
    weights_to_positions,
)


def grid_best(mu, sigma, a, step=1e-4):
    """Brute-force maximum over the plane sum(w) = 0 for n = 2 or 3.

    The optimum has a non-negative objective (w = 0 is feasible), which bounds
    its norm by |mu| / (a * smallest eigenvalue); the grid covers that box.
    """
    mu = np.asarray(mu, float)
    bound = np.linalg.norm(mu) / (a * np.linalg.eigvalsh(sigma)[0])
    axis = np.arange(-bound, bound + step, step)
    if len(mu) == 2:
        w = np.column_stack([axis, -axis])
    else:
        g1, g2 = np.meshgrid(axis, axis, indexing="ij")
        w = np.column_stack([g1.ravel(), g2.ravel(), -(g1.ravel() + g2.ravel())])
    vals = w @ mu - a * np.einsum("ij,jk,ik->i", w, sigma, w)
    return vals.max()


def test_two_asset_identity_case():
    res = solve_dollar_neutral([0.10, -0.10], np.eye(2), OptimizerParams(risk_aversion=2.0))
    np.testing.assert_allclose(res.w, [0.025, -0.025], atol=1e-15)
    assert res.multiplier == pytest.approx(0.0, abs=1e-15)


def test_equal_expected_returns_give_exactly_zero_weights():
    sigma = random_spd(np.random.default_rng(0), 5)
    for c in (0.0, 0.013, -7.5):
        res = solve_dollar_neutral(np.full(5, c), sigma)
        assert np.all(res.w == 0.0)
        assert res.zero_portfolio


def test_three_asset_diagonal_case_beats_grid():
    mu = np.array([0.06, 0.00, -0.06])
    sigma = np.diag([1.0, 2.0, 4.0])
    res = solve_dollar_neutral(mu, sigma, OptimizerParams(2.0))
    lam = (0.06 - 0.06 / 4) / (1 + 0.5 + 0.25)
    np.testing.assert_allclose(res.w, (mu - lam) / np.diag(sigma) / 4.0, atol=1e-15)
    best = grid_best(mu, sigma, 2.0)
    assert res.objective_value >= best - 1e-12


def test_not_positive_definite_is_rejected():
    with pytest.raises(NotPositiveDefiniteError, match="regularize"):
        solve_dollar_neutral([0.1, 0.0], np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_single_asset_is_degenerate():
    with pytest.raises(DegenerateUniverseError):
        solve_dollar_neutral([0.1], np.eye(1))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        solve_dollar_neutral([0.1, 0.2, 0.3], np.eye(2))


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        OptimizerParams(risk_aversion=0.0)
    with pytest.raises(ValueError):
        OptimizerParams(gross_target=-1.0)


instance = st.tuples(st.integers(0, 2**31), st.integers(2, 30))


@settings(max_examples=60, deadline=None)
@given(instance)
def test_neutral_and_kkt(inst):
    seed, n = inst
    rng = np.random.default_rng(seed)
    mu = rng.normal(0, 0.02, n)
    sigma = random_spd(rng, n)
    res = solve_dollar_neutral(mu, sigma)
    assert res.neutrality_residual <= 1e-10
    assert abs(res.long_dollars - res.short_dollars) <= 1e-10
    lam = res.multiplier
    assert np.max(np.abs(4.0 * sigma @ res.w - mu + lam)) <= 1e-8


@settings(max_examples=40, deadline=None)
@given(instance, st.integers(0, 2**31))
def test_zero_sum_perturbation_lowers_objective(inst, pseed):
    seed, n = inst
    rng = np.random.default_rng(seed)
    mu = rng.normal(0, 0.02, n)
    sigma = random_spd(rng, n)
    res = solve_dollar_neutral(mu, sigma)
    d = np.random.default_rng(pseed).standard_normal(n)
    d -= d.mean()
    d *= 1e-3 / np.linalg.norm(d)
    assert objective(res.w + d, mu, sigma, 2.0) < objective(res.w, mu, sigma, 2.0)


@settings(max_examples=40, deadline=None)
@given(instance, st.floats(-1, 1))
def test_shift_invariance(inst, c):
    seed, n = inst
    rng = np.random.default_rng(seed)
    mu = rng.normal(0, 0.02, n)
    sigma = random_spd(rng, n)
    np.testing.assert_allclose(
        solve_dollar_neutral(mu + c, sigma).w, solve_dollar_neutral(mu, sigma).w, atol=1e-9, rtol=0
    )


@settings(max_examples=40, deadline=None)
@given(instance, st.floats(0.1, 50))
def test_weights_scale_with_inverse_risk_aversion(inst, a):
    seed, n = inst
    rng = np.random.default_rng(seed)
    mu = rng.normal(0, 0.02, n)
    sigma = random_spd(rng, n)
    w1 = solve_dollar_neutral(mu, sigma, OptimizerParams(a)).w
    w2 = solve_dollar_neutral(mu, sigma, OptimizerParams(2 * a)).w
    np.testing.assert_allclose(w2, w1 / 2, atol=1e-12, rtol=0)


# -- normalization ------------------------------------------------------------------


def weights(w):
    w = np.asarray(w, float)
    return PortfolioWeights(None, np.arange(len(w)), w, abs(w.sum()), np.abs(w).sum(), 0.123)


def test_normalize_scales_to_gross_target_per_side():
    out = normalize_gross(weights([0.025, -0.025]), OptimizerParams(gross_target=1.0))
    np.testing.assert_allclose(out.w, [1.0, -1.0])
    assert out.objective_value == 0.123


def test_zero_portfolio_is_flagged_not_scaled():
    out = normalize_gross(weights([0.0, 0.0]))
    assert out.zero_portfolio
    assert "zero_portfolio" in out.flags
    assert np.all(out.w == 0.0)


@settings(max_examples=40, deadline=None)
@given(instance, st.floats(0.1, 3.0))
def test_normalize_preserves_neutrality(inst, target):
    seed, n = inst
    rng = np.random.default_rng(seed)
    raw = solve_dollar_neutral(rng.normal(0, 0.02, n), random_spd(rng, n))
    out = normalize_gross(raw, OptimizerParams(gross_target=target))
    assert out.gross == pytest.approx(2 * target)
    assert out.neutrality_residual <= 1e-10
    assert out.long_dollars == pytest.approx(target)
    assert out.raw_objective_value == raw.objective_value


def test_max_weight_cap_is_applied_then_recentered():
    out = normalize_gross(weights([0.5, -0.1, -0.1, -0.3]), OptimizerParams(max_weight=0.5))
    assert "max_weight_applied" in out.flags
    assert abs(out.w.sum()) <= 1e-12


# -- positions ----------------------------------------------------------------------


def test_shares_from_weight_capital_and_price():
    w = PortfolioWeights(None, np.array([7, 8]), np.array([0.01, -0.01]), 0.0, 0.02, 0.0)
    pos = weights_to_positions(w, {7: 50.0, 8: 30.0}, 1e7)
    assert pos.shares[7] == 2000
    # -100000 / 30 = -3333.3 truncates toward zero
    assert pos.shares[8] == -3333


def test_zero_weights_hold_nothing():
    w = PortfolioWeights(None, np.array([1, 2]), np.zeros(2), 0.0, 0.0, 0.0)
    assert (weights_to_positions(w, {1: 10.0, 2: 10.0}, 1e6).shares == 0).all()


def test_missing_price_names_the_security():
    w = PortfolioWeights(None, np.array([1, 2]), np.array([0.5, -0.5]), 0.0, 1.0, 0.0)
    with pytest.raises(PositionError, match="2"):
        weights_to_positions(w, pd.Series({1: 10.0}), 1e6)


@settings(max_examples=40, deadline=None)
@given(instance, st.floats(1e4, 1e9))
def test_pre_rounding_dollars_balance(inst, capital):
    seed, n = inst
    rng = np.random.default_rng(seed)
    w = normalize_gross(solve_dollar_neutral(rng.normal(0, 0.02, n), random_spd(rng, n)))
    prices = pd.Series(rng.uniform(1, 500, n), index=w.ids)
    pos = weights_to_positions(w, prices, capital)
    assert abs(pos.long_dollars - pos.short_dollars) <= 1e-6 * capital
