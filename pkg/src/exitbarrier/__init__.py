"""Barrier-to-exit analysis of longitudinal rating data.

Modules
-------
ingest      : rating logs, tag relevance, time binning
preference  : per-category revealed preference and rolling thresholds
bte         : exit-window detection and barrier-to-exit scores
simloop     : single-user recommender feedback-loop simulator
report      : JSON/CSV reports and SVG figures
cli         : ``exitbarrier`` command line tool
"""

__version__ = "0.1.0"

from .ingest import (  # noqa: E402
    BinningPolicy,
    RatingEvent,
    TagRelevanceMatrix,
    TimeBinnedRatings,
    bin_events,
    parse_ratings,
    parse_tag_relevance,
)
from .preference import PreferenceSeries, ThresholdSeries, preference_series, revealed_preference, rolling_thresholds  # noqa: E402
from .bte import BtEReport, ExitWindow, category_bte, compute_bte, detect_exit_windows, system_bte, window_bte  # noqa: E402
from .simloop import Shift, SimConfig, run_simulation, trace_to_ratings  # noqa: E402
