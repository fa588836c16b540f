"""Exit-window detection and barrier-to-exit scores.

An exit window for category ``i`` opens at a step ``t_x`` where the revealed
preference lies strictly above the upper band, stays strictly inside the band
for every step in between, and closes at the first step ``t_y`` where it lies
strictly below the lower band. Its score is the sum of the preference values
from ``t_x`` through ``t_y`` inclusive.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .ingest import DataWarning
from .preference import PreferenceSeries, ThresholdSeries, rolling_thresholds

__all__ = [
    "MODES",
    "NO_EXIT",
    "ExitWindow",
    "CategoryResult",
    "BtEReport",
    "band_for_mode",
    "detect_exit_windows",
    "window_bte",
    "category_bte",
    "system_bte",
    "compute_bte",
]

MODES = ("per-category", "averaged")
NO_EXIT = "no-exit-observed"


@dataclass(frozen=True)
class ExitWindow:
    category: int
    t_x: int
    t_y: int
    values: tuple[float, ...]
    mode: str = "per-category"

    def __post_init__(self):
        if not self.t_x < self.t_y:
            raise ValueError("exit window needs t_x < t_y")
        # parsed reports carry bounds only, so values may be empty
        if self.values and len(self.values) != self.t_y - self.t_x + 1:
            raise ValueError("window values must cover t_x..t_y")

    def contains(self, step: int) -> bool:
        return self.t_x <= step <= self.t_y


def band_for_mode(thresholds: ThresholdSeries, category: int, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Upper and lower band a category is compared against."""
    if mode == "per-category":
        return thresholds.upper[:, category], thresholds.lower[:, category]
    if mode == "averaged":
        return thresholds.upper_avg, thresholds.lower_avg
    raise ValueError(f"unknown threshold mode {mode!r}; expected one of {MODES}")


def _scan(c: np.ndarray, upper: np.ndarray, lower: np.ndarray, start: int) -> list[tuple[int, int]]:
    found = []
    n = len(c)
    t = start
    while t < n:
        if not c[t] > upper[t]:
            t += 1
            continue
        tau = t + 1
        while tau < n and lower[tau] < c[tau] < upper[tau]:
            tau += 1
        if tau == n:
            break
        if c[tau] < lower[tau]:
            found.append((t, tau))
            t = tau + 1
        else:
            # left the band upward or sat exactly on a boundary; steps before tau were inside
            t = tau
    return found


def detect_exit_windows(
    series: PreferenceSeries, thresholds: ThresholdSeries, mode: str = "per-category"
) -> list[list[ExitWindow]]:
    """All exit windows, one list per category, scanned greedily left to right."""
    if mode not in MODES:
        raise ValueError(f"unknown threshold mode {mode!r}; expected one of {MODES}")
    n_steps = len(series)
    out: list[list[ExitWindow]] = [[] for _ in series.categories]
    if n_steps < thresholds.nu + 2:
        warnings.warn(
            f"user {series.user_id}: {n_steps} steps is too short for an exit window at nu={thresholds.nu}",
            DataWarning,
            stacklevel=2,
        )
        return out
    for i in range(series.n_categories):
        c = series.values[:, i]
        upper, lower = band_for_mode(thresholds, i, mode)
        for t_x, t_y in _scan(c, upper, lower, thresholds.nu):
            out[i].append(ExitWindow(i, t_x, t_y, tuple(float(v) for v in c[t_x:t_y + 1]), mode))
    return out


def window_bte(series: PreferenceSeries, window: ExitWindow) -> float:
    """Discrete area under the category's curve over ``t_x..t_y``."""
    total = 0.0
    for v in series.values[window.t_x:window.t_y + 1, window.category]:
        total += float(v)
    return total


def category_bte(windows: Sequence[ExitWindow], series: PreferenceSeries) -> float | None:
    """Mean window score, or ``None`` when the category never exited."""
    if not windows:
        return None
    return sum(window_bte(series, w) for w in windows) / len(windows)


def system_bte(category_scores: Mapping[str, float | None] | Sequence[float | None]) -> float | None:
    """Unweighted mean over categories that have a score."""
    values = category_scores.values() if isinstance(category_scores, Mapping) else category_scores
    defined = [float(v) for v in values if v is not None]
    if not defined:
        return None
    return sum(defined) / len(defined)


@dataclass
class CategoryResult:
    label: str
    windows: list[ExitWindow]
    scores: list[float]
    category_bte: float | None

    @property
    def status(self) -> str:
        return "ok" if self.category_bte is not None else NO_EXIT


@dataclass
class BtEReport:
    user_id: int
    categories: list[CategoryResult]
    system_bte: float | None
    config: dict = field(default_factory=dict)

    @property
    def window_counts(self) -> dict[str, int]:
        return {c.label: len(c.windows) for c in self.categories}

    def category(self, label: str) -> CategoryResult:
        for c in self.categories:
            if c.label == label:
                return c
        raise KeyError(label)

    def category_scores(self) -> dict[str, float | None]:
        return {c.label: c.category_bte for c in self.categories}


def build_report(
    series: PreferenceSeries,
    windows: Sequence[Sequence[ExitWindow]],
    config: dict | None = None,
) -> BtEReport:
    results = []
    for label, wins in zip(series.categories, windows):
        scores = [window_bte(series, w) for w in wins]
        results.append(CategoryResult(label, list(wins), scores, category_bte(wins, series)))
    overall = system_bte([r.category_bte for r in results])
    return BtEReport(series.user_id, results, overall, dict(config or {}))


def compute_bte(
    series: PreferenceSeries,
    nu: int,
    k: float = 2.0,
    mode: str = "per-category",
    ddof: int = 0,
    config: dict | None = None,
) -> tuple[BtEReport, ThresholdSeries]:
    """Thresholds, windows and scores for one user in a single call.

    ``config`` entries are merged into the report's configuration echo.
    """
    thresholds = rolling_thresholds(series, nu, k, ddof=ddof)
    windows = detect_exit_windows(series, thresholds, mode)
    echo = {"nu": int(nu), "k": float(k), "mode": mode, "std_ddof": ddof}
    echo.update(config or {})
    return build_report(series, windows, echo), thresholds
