"""Revealed preference per category and rolling interaction thresholds."""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .ingest import DataWarning, TagRelevanceMatrix, TimeBin, TimeBinnedRatings

__all__ = [
    "PreferenceSeries",
    "ThresholdSeries",
    "revealed_preference",
    "preference_series",
    "rolling_thresholds",
    "thresholds_csv",
]


@dataclass(frozen=True)
class PreferenceSeries:
    """Revealed preference ``values[t, i]`` for step ``t`` and category ``i``."""

    user_id: int
    categories: tuple[str, ...]
    values: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.categories):
            raise ValueError("values must be (n_steps, n_categories)")
        if not np.all(np.isfinite(values)):
            raise ValueError("preference values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "categories", tuple(self.categories))
        ts = np.asarray(self.timestamps, dtype=np.int64)
        if ts.shape != (values.shape[0],):
            raise ValueError("one timestamp per step required")
        object.__setattr__(self, "timestamps", ts)

    def __len__(self):
        return self.values.shape[0]

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    def scaled(self, factor: float) -> "PreferenceSeries":
        return PreferenceSeries(self.user_id, self.categories, self.values * factor, self.timestamps)


@dataclass(frozen=True)
class ThresholdSeries:
    """Rolling bands; rows before ``nu`` are NaN (warm-up).

    ``upper``/``lower``/``mean`` are ``(n_steps, n_categories)``;
    ``upper_avg``/``lower_avg`` are the unweighted category averages.
    """

    upper: np.ndarray
    lower: np.ndarray
    mean: np.ndarray
    upper_avg: np.ndarray
    lower_avg: np.ndarray
    nu: int
    k: float
    ddof: int = 0

    def defined(self) -> np.ndarray:
        """Boolean mask of steps with thresholds."""
        return ~np.isnan(self.upper_avg)


def revealed_preference(bin_: TimeBin | Sequence[tuple[int, float]], relevance: TagRelevanceMatrix) -> np.ndarray:
    """Relevance-weighted rating sum for one step, one entry per category.

    Items without stored relevance contribute nothing. Terms are accumulated
    in the bin's rating order.
    """
    ratings = bin_.ratings if isinstance(bin_, TimeBin) else bin_
    out = np.zeros(relevance.n_categories)
    for item, rating in ratings:
        out += relevance.vector(item) * float(rating)
    return out


def preference_series(binned: TimeBinnedRatings, relevance: TagRelevanceMatrix) -> PreferenceSeries:
    if not binned.bins:
        raise ValueError(f"user {binned.user_id} has no bins")
    rows = [revealed_preference(b, relevance) for b in binned.bins]
    return PreferenceSeries(binned.user_id, relevance.categories, np.vstack(rows), binned.timestamps)


def rolling_thresholds(series: PreferenceSeries, nu: int, k: float = 2.0, ddof: int = 0) -> ThresholdSeries:
    """Mean +/- ``k`` standard deviations over the ``nu + 1`` steps ending at ``t``.

    The window includes the current step. ``ddof=0`` gives the population
    standard deviation, ``ddof=1`` the sample one. Lower bands are not
    clipped at zero.
    """
    if int(nu) != nu or nu < 1:
        raise ValueError("nu must be a positive integer")
    if not k > 0:
        raise ValueError("k must be positive")
    if ddof not in (0, 1):
        raise ValueError("ddof must be 0 or 1")
    nu = int(nu)
    c = series.values
    n_steps, n_cat = c.shape
    mean = np.full((n_steps, n_cat), np.nan)
    std = np.full((n_steps, n_cat), np.nan)
    if nu >= n_steps:
        warnings.warn(
            f"user {series.user_id}: horizon nu={nu} needs more than {n_steps} steps; no thresholds defined",
            DataWarning,
            stacklevel=2,
        )
    else:
        windows = sliding_window_view(c, nu + 1, axis=0)  # (n_steps - nu, n_cat, nu + 1)
        m = windows.mean(axis=-1)
        s = windows.std(axis=-1, ddof=ddof)
        flat = np.ptp(windows, axis=-1) == 0
        # exact collapse for constant windows; avoids rounding noise in the mean
        m[flat] = windows[..., 0][flat]
        s[flat] = 0.0
        mean[nu:] = m
        std[nu:] = s
    upper = mean + k * std
    lower = mean - k * std
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        upper_avg = upper.mean(axis=1) if n_cat else np.full(n_steps, np.nan)
        lower_avg = lower.mean(axis=1) if n_cat else np.full(n_steps, np.nan)
    for arr in (upper, lower, mean, upper_avg, lower_avg):
        arr.setflags(write=False)
    return ThresholdSeries(upper, lower, mean, upper_avg, lower_avg, nu, float(k), ddof)


def _cell(x: float) -> str:
    return "" if np.isnan(x) else format(float(x), ".9g")


def thresholds_csv(series: PreferenceSeries, thresholds: ThresholdSeries) -> str:
    """Long-format table ``t,category,c,x,y,X_avg,Y_avg``; warm-up cells are empty."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "category", "c", "x", "y", "X_avg", "Y_avg"])
    for t in range(len(series)):
        for i, label in enumerate(series.categories):
            w.writerow([
                t,
                label,
                _cell(series.values[t, i]),
                _cell(thresholds.upper[t, i]),
                _cell(thresholds.lower[t, i]),
                _cell(thresholds.upper_avg[t]),
                _cell(thresholds.lower_avg[t]),
            ])
    return buf.getvalue()
