import numpy as np
import pandas as pd
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from midcap_neutral.errors import EmptyMatrixError, InsufficientDataError
from midcap_neutral.preprocess import (
    FeatureMatrix,
    apply_feature_list,
    correlation_prune,
    fit_feature_selection,
    rank_correlation,
    standardize_and_clip,
    variance_inflation,
    vif_prune,
)


def ols_vif(x: np.ndarray, j: int) -> float:
    """Independent oracle: regress column j on the rest plus a constant via lstsq."""
    y = x[:, j]
    others = np.column_stack([np.ones(len(x)), np.delete(x, j, axis=1)])
    coef, *_ = np.linalg.lstsq(others, y, rcond=None)
    resid = y - others @ coef
    r2 = 1.0 - resid @ resid / ((y - y.mean()) @ (y - y.mean()))
    return 1.0 / (1.0 - r2)


def with_correlation(rng, corr: np.ndarray, n: int = 400) -> np.ndarray:
    """Sample whose sample correlation matrix equals ``corr`` exactly."""
    k = corr.shape[0]
    z = rng.standard_normal((n, k))
    z -= z.mean(axis=0)
    # whiten to an exactly orthonormal sample, then impose corr
    q, _ = np.linalg.qr(z)
    return q @ np.linalg.cholesky(corr).T * np.sqrt(n)


# -- standardize and clip ----------------------------------------------------------


def test_single_outlier_is_clipped_at_three():
    raw = pd.DataFrame({"x": [0.0] * 11 + [12.0]})
    fm = standardize_and_clip(raw)
    # mean 1, population std sqrt(132 / 12) = sqrt(11); unclipped z = 11 / sqrt(11)
    assert 11 / np.sqrt(11) == pytest.approx(3.3166, abs=1e-4)
    assert fm.values[-1, 0] == 3.0
    assert fm.values[0, 0] == pytest.approx(-1 / np.sqrt(11))
    # clipped value mapped back to raw units
    assert 1 + 3 * np.sqrt(11) == pytest.approx(10.95, abs=0.01)


def test_constant_column_is_dropped_as_degenerate():
    raw = pd.DataFrame({"x": [1.0, 2.0, 3.0], "c": [5.0, 5.0, 5.0]})
    fm = standardize_and_clip(raw)
    assert fm.feature_names == ["x"]
    assert fm.dropped_features == [("c", "degenerate")]


def test_single_observation_column_is_degenerate():
    raw = pd.DataFrame({"x": [1.0, 2.0, 3.0], "s": [np.nan, 4.0, np.nan]})
    assert standardize_and_clip(raw).feature_names == ["x"]


def test_all_degenerate_raises():
    with pytest.raises(EmptyMatrixError, match="2015-01-01"):
        standardize_and_clip(pd.DataFrame({"c": [1.0, 1.0]}), date="2015-01-01")


def test_missing_values_take_the_median_before_scaling():
    raw = pd.DataFrame({"x": [1.0, np.nan, 3.0, 10.0]})
    fm = standardize_and_clip(raw, z_clip=100)
    filled = np.array([1.0, 3.0, 3.0, 10.0])
    np.testing.assert_allclose(fm.values[:, 0], (filled - filled.mean()) / filled.std())


def test_standard_normal_inside_bounds_is_only_restandardized():
    rng = np.random.default_rng(3)
    x = np.clip(rng.standard_normal(200), -2.5, 2.5)
    fm = standardize_and_clip(pd.DataFrame({"x": x}))
    np.testing.assert_allclose(fm.values[:, 0], (x - x.mean()) / x.std(), atol=1e-12)


columns = hnp.arrays(
    np.float64,
    st.tuples(st.integers(3, 40), st.integers(1, 4)),
    elements=st.floats(-1e6, 1e6, allow_nan=False),
)


@given(columns)
def test_entries_within_clip_bounds(values):
    try:
        fm = standardize_and_clip(pd.DataFrame(values))
    except EmptyMatrixError:
        return
    assert np.all(np.abs(fm.values) <= 3.0 + 1e-12)


@given(columns)
def test_unclipped_columns_have_zero_mean_unit_std(values):
    try:
        fm = standardize_and_clip(pd.DataFrame(values), z_clip=np.inf)
    except EmptyMatrixError:
        return
    assert np.allclose(fm.values.mean(axis=0), 0.0, atol=1e-10)
    assert np.allclose(fm.values.std(axis=0), 1.0, atol=1e-10)


@given(hnp.arrays(np.float64, st.integers(3, 50), elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_clip_preserves_order(x):
    try:
        fm = standardize_and_clip(pd.DataFrame({"x": x}))
    except EmptyMatrixError:
        return
    z = fm.values[:, 0]
    order = np.argsort(x, kind="stable")
    assert np.all(np.diff(z[order]) >= -1e-12)


@given(hnp.arrays(np.float64, st.integers(1, 50), elements=st.floats(-10, 10, allow_nan=False)))
def test_clipping_is_idempotent(z):
    once = np.clip(z, -3, 3)
    assert np.array_equal(np.clip(once, -3, 3), once)


# -- VIF --------------------------------------------------------------------------


def test_orthogonal_features_have_unit_vif():
    x = with_correlation(np.random.default_rng(0), np.eye(2))
    np.testing.assert_allclose(variance_inflation(x), [1.0, 1.0], atol=1e-12)
    survivors, report = vif_prune(pd.DataFrame(x, columns=["a", "b"]))
    assert survivors == ["a", "b"]
    assert report.elimination_order == []


def test_correlation_090_gives_vif_5263():
    x = with_correlation(np.random.default_rng(1), np.array([[1.0, 0.9], [0.9, 1.0]]))
    expected = 1 / (1 - 0.81)
    assert expected == pytest.approx(5.263, abs=1e-3)
    assert ols_vif(x, 0) == pytest.approx(expected, rel=1e-9)
    np.testing.assert_allclose(variance_inflation(x), [expected, expected], rtol=1e-9)
    survivors, _ = vif_prune(pd.DataFrame(x, columns=["a", "b"]))
    assert survivors == ["a", "b"]


def test_exact_sum_is_removed_with_infinite_vif():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((2, 100))
    frame = pd.DataFrame({"a": a, "b": b, "c": a + b})
    survivors, report = vif_prune(frame)
    assert report.elimination_order[0] == ("c", np.inf)
    assert survivors == ["a", "b"]
    assert report.to_dict()["elimination_order"][0]["vif"] == "inf"


def test_identical_columns_drop_the_later_one():
    rng = np.random.default_rng(4)
    a, b = rng.standard_normal((2, 60))
    survivors, report = vif_prune(pd.DataFrame({"x": a, "y": b, "z": a}))
    assert [name for name, _ in report.elimination_order] == ["z"]
    assert survivors == ["x", "y"]


def test_vif_needs_more_rows_than_features():
    with pytest.raises(InsufficientDataError):
        vif_prune(pd.DataFrame(np.eye(3), columns=list("abc")))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(3, 6), st.floats(0.0, 0.98))
def test_vif_matches_ols_oracle(seed, k, mix):
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((120, k))
    x = base + mix * base[:, [0]] * rng.uniform(0.5, 1.5, k)
    got = variance_inflation(x)
    want = [ols_vif(x, j) for j in range(k)]
    np.testing.assert_allclose(got, want, rtol=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 7))
def test_vif_prune_leaves_all_below_threshold(seed, k):
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((150, k))
    x = base @ rng.standard_normal((k, k + 2))
    frame = pd.DataFrame(x, columns=[f"f{i}" for i in range(k + 2)])
    survivors, report = vif_prune(frame)
    vif = variance_inflation(frame[survivors].to_numpy())
    assert np.all(vif <= 10 + 1e-9)
    assert set(report.vif_table) == set(survivors)


# -- correlation groups ------------------------------------------------------------


def test_transitive_group_keeps_one_member():
    # A-C alone stays below the edge threshold; B links them
    corr = np.array([[1.0, 0.95, 0.7], [0.95, 1.0, 0.85], [0.7, 0.85, 1.0]])
    x = with_correlation(np.random.default_rng(5), corr)
    y = x[:, 1] + 0.01 * np.random.default_rng(6).standard_normal(len(x))
    survivors, report = correlation_prune(pd.DataFrame(x, columns=["A", "B", "C"]), y)
    assert survivors == ["B"]
    assert report.correlation_groups[0]["members"] == ["A", "B", "C"]
    assert sorted(report.dropped_features) == [("A", "correlation"), ("C", "correlation")]


def test_no_edges_keeps_everything():
    x = with_correlation(np.random.default_rng(7), np.eye(3))
    survivors, report = correlation_prune(pd.DataFrame(x, columns=list("abc")), x[:, 0])
    assert survivors == ["a", "b", "c"]
    assert report.correlation_groups == []


def test_equal_rank_ic_keeps_alphabetical_first():
    rng = np.random.default_rng(8)
    a = rng.standard_normal(50)
    frame = pd.DataFrame({"zeta": a, "alpha": a})
    survivors, _ = correlation_prune(frame, rng.standard_normal(50))
    assert survivors == ["alpha"]


def test_rank_correlation_matches_scipy():
    from scipy.stats import spearmanr

    rng = np.random.default_rng(9)
    x, y = rng.standard_normal((2, 30))
    x[:5] = 1.0
    assert rank_correlation(x, y) == pytest.approx(spearmanr(x, y).statistic, abs=1e-12)
    assert rank_correlation(np.ones(5), y[:5]) == 0.0


def test_feature_selection_is_deterministic():
    rng = np.random.default_rng(10)
    base = rng.standard_normal((300, 4))
    frame = pd.DataFrame(np.column_stack([base, base[:, 0] * 0.97 + 0.03 * base[:, 1]]), columns=list("abcde"))
    y = rng.standard_normal(300)
    first = fit_feature_selection(frame, y)[1].to_json()
    assert fit_feature_selection(frame, y)[1].to_json() == first


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_post_selection_audit(seed):
    rng = np.random.default_rng(seed)
    k = 6
    base = rng.standard_normal((200, k))
    mix = rng.uniform(-1, 1, (k, k + 3))
    frame = pd.DataFrame(base @ mix, columns=[f"f{i}" for i in range(k + 3)])
    assume(np.all(frame.std() > 0))
    survivors, report = fit_feature_selection(frame, rng.standard_normal(200))
    kept = frame[survivors].to_numpy()
    assert np.all(variance_inflation(kept) <= 10 + 1e-9)
    c = np.corrcoef(kept, rowvar=False) if len(survivors) > 1 else np.eye(1)
    assert np.all(np.abs(c[np.triu_indices(len(survivors), 1)]) <= 0.8 + 1e-9)
    assert report.surviving == survivors


# -- frozen feature lists ----------------------------------------------------------


def test_frozen_degenerate_feature_enters_as_zero():
    fm = FeatureMatrix(None, np.array([1, 2]), ["a"], np.array([[1.0], [-1.0]]), [("b", "degenerate")])
    out = apply_feature_list(fm, ["b", "a"])
    assert out.feature_names == ["b", "a"]
    np.testing.assert_array_equal(out.values, [[0.0, 1.0], [0.0, -1.0]])
