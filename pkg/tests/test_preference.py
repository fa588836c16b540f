from contextlib import nullcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import oracles
from exitbarrier.ingest import DataWarning, TagRelevanceMatrix, TimeBin, TimeBinnedRatings
from exitbarrier.preference import (
    PreferenceSeries,
    preference_series,
    revealed_preference,
    rolling_thresholds,
    thresholds_csv,
)


def _series(values, user=1):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    labels = tuple(f"c{i}" for i in range(values.shape[1]))
    return PreferenceSeries(user, labels, values, np.arange(values.shape[0]))


def test_single_item_full_relevance():
    rel = TagRelevanceMatrix(["i"], {(7, 0): 1.0})
    assert revealed_preference([(7, 4.0)], rel).tolist() == [4.0]


def test_single_item_zero_relevance():
    rel = TagRelevanceMatrix(["i"], {(7, 0): 0.0})
    assert revealed_preference([(7, 4.0)], rel).tolist() == [0.0]


def test_two_items_against_oracle():
    rel = TagRelevanceMatrix(["i"], {(7, 0): 0.5, (9, 0): 0.25})
    ratings = [(7, 4.0), (9, 2.0)]
    expected = oracles.revealed_preference(ratings, rel.relevance, 1)
    assert expected == [2.5]
    assert revealed_preference(TimeBin(0, 0, tuple(ratings)), rel).tolist() == expected


def test_series_rows_follow_bins():
    rel = TagRelevanceMatrix(["a", "b"], {(1, 0): 0.5, (2, 1): 1.0})
    b = TimeBin(0, 100, ((1, 4.0), (2, 1.0)))
    one = preference_series(TimeBinnedRatings(3, (b,)), rel)
    assert one.values.shape == (1, 2)
    assert one.values[0].tolist() == revealed_preference(b, rel).tolist()
    bins = tuple(TimeBin(t, 100 + t, b.ratings) for t in range(6))
    many = preference_series(TimeBinnedRatings(3, bins), rel)
    assert np.all(many.values == many.values[0])
    assert many.timestamps.tolist() == [100 + t for t in range(6)]


def test_series_random_vs_oracle():
    rng = np.random.default_rng(11)
    labels = ["a", "b", "c"]
    pairs = {(item, c): float(rng.random()) for item in range(8) for c in range(3) if rng.random() < 0.6}
    rel = TagRelevanceMatrix(labels, pairs)
    bins = []
    for t in range(12):
        n = int(rng.integers(1, 6))
        ratings = tuple((int(rng.integers(0, 10)), float(rng.integers(1, 11)) / 2) for _ in range(n))
        bins.append(TimeBin(t, t, ratings))
    series = preference_series(TimeBinnedRatings(1, tuple(bins)), rel)
    for t, b in enumerate(bins):
        assert series.values[t].tolist() == oracles.revealed_preference(b.ratings, rel.relevance, 3)


rating_lists = st.lists(st.tuples(st.integers(0, 9), st.floats(0, 5, allow_nan=False)), min_size=1, max_size=8)


@st.composite
def relevance_matrices(draw):
    n_cat = draw(st.integers(1, 4))
    values = draw(hnp.arrays(float, (10, n_cat), elements=st.floats(0, 1)))
    return TagRelevanceMatrix.from_dense([f"k{i}" for i in range(n_cat)], range(10), values)


@given(rating_lists, relevance_matrices(), st.floats(-10, 10, allow_nan=False))
def test_linear_in_ratings(ratings, rel, lam):
    base = revealed_preference(ratings, rel)
    scaled = revealed_preference([(i, r * lam) for i, r in ratings], rel)
    np.testing.assert_allclose(scaled, lam * base, rtol=1e-12, atol=1e-12)


@given(rating_lists, rating_lists, relevance_matrices())
def test_additive_over_disjoint_sets(first, second, rel):
    joined = revealed_preference(first + second, rel)
    parts = revealed_preference(first, rel) + revealed_preference(second, rel)
    np.testing.assert_allclose(joined, parts, rtol=1e-12, atol=1e-12)


def test_constant_series_collapses_band():
    th = rolling_thresholds(_series([3.0] * 10), nu=3)
    assert np.all(np.isnan(th.upper[:3]))
    assert np.all(th.upper[3:] == 3.0) and np.all(th.lower[3:] == 3.0)


def test_constant_non_representable_value_collapses_exactly():
    th = rolling_thresholds(_series([0.1] * 8), nu=4)
    assert np.all(th.upper[4:] == 0.1) and np.all(th.lower[4:] == 0.1)


def test_two_point_window():
    th = rolling_thresholds(_series([1.0, 3.0]), nu=1, k=2)
    assert th.mean[1, 0] == 2.0
    assert th.upper[1, 0] == 4.0
    assert th.lower[1, 0] == 0.0


def test_random_series_vs_window_oracle():
    rng = np.random.default_rng(5)
    values = rng.gamma(2.0, 3.0, size=(20, 3))
    series = _series(values)
    for nu in (1, 3, 7):
        th = rolling_thresholds(series, nu, k=2.0)
        for i in range(3):
            expect = oracles.window_thresholds(values[:, i].tolist(), nu, 2.0)
            for t, e in enumerate(expect):
                if e is None:
                    assert np.isnan(th.upper[t, i])
                else:
                    assert abs(th.upper[t, i] - e[0]) <= 1e-9
                    assert abs(th.lower[t, i] - e[1]) <= 1e-9
        np.testing.assert_allclose(th.upper_avg[nu:], th.upper[nu:].mean(axis=1), rtol=0, atol=1e-12)


def test_sample_std_option():
    values = [2.0, 5.0, 1.0, 4.0, 4.0]
    th = rolling_thresholds(_series(values), nu=2, k=1.5, ddof=1)
    expect = oracles.window_thresholds(values, 2, 1.5, sample=True)
    for t in range(2, 5):
        assert th.upper[t, 0] == pytest.approx(expect[t][0], abs=1e-12)


def test_horizon_too_long_warns():
    with pytest.warns(DataWarning):
        th = rolling_thresholds(_series([1.0, 2.0, 3.0]), nu=3)
    assert np.all(np.isnan(th.upper))


def test_parameter_validation():
    s = _series([1.0, 2.0, 3.0])
    for kwargs in ({"nu": 0}, {"nu": 1.5}, {"nu": 1, "k": 0}, {"nu": 1, "ddof": 2}):
        with pytest.raises(ValueError):
            rolling_thresholds(s, **kwargs)


series_values = hnp.arrays(
    float,
    st.tuples(st.integers(2, 30), st.integers(1, 3)),
    elements=st.one_of(st.just(0.0), st.floats(1e-6, 1e3)),
)


@settings(max_examples=150)
@given(series_values, st.integers(1, 6), st.floats(0.1, 4), st.sampled_from([0.5, 2.0, 3.0, 10.0]))
def test_threshold_properties(values, nu, k, lam):
    series = _series(values)
    with pytest.warns(DataWarning) if nu >= len(series) else nullcontext():
        th = rolling_thresholds(series, nu, k)
    defined = ~np.isnan(th.upper)
    assert not defined[:nu].any()
    assert np.all(th.upper[defined] >= th.lower[defined])
    np.testing.assert_allclose((th.upper - th.mean)[defined], (th.mean - th.lower)[defined], atol=1e-9, rtol=0)
    for t in range(nu, len(series)):
        window = values[t - nu:t + 1]
        flat = np.ptp(window, axis=0) == 0
        assert np.array_equal(th.upper[t] == th.lower[t], flat)
    if nu < len(series):
        with np.errstate(all="ignore"):
            scaled = rolling_thresholds(series.scaled(lam), nu, k)
        np.testing.assert_allclose(scaled.upper[defined], lam * th.upper[defined], rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(scaled.lower[defined], lam * th.lower[defined], rtol=1e-9, atol=1e-9 * lam * 1e3)
        np.testing.assert_allclose(scaled.upper_avg[nu:], lam * th.upper_avg[nu:], rtol=1e-9, atol=1e-9)


def test_thresholds_csv_layout():
    series = _series(np.array([[1.0, 2.0], [3.0, 2.0], [2.0, 4.0]]))
    csv_text = thresholds_csv(series, rolling_thresholds(series, 1))
    lines = csv_text.splitlines()
    assert lines[0] == "t,category,c,x,y,X_avg,Y_avg"
    assert len(lines) == 1 + 3 * 2
    assert lines[1] == "0,c0,1,,,,"
    assert lines[3].startswith("1,c0,3,4,0,")
