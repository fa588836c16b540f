"""
Barrier to exit from a ratings log
==================================

Parse a MovieLens-style ``ratings.dat`` log and a tag relevance table, cut
one user's history into weekly bins, and score how hard it was for that user
to leave each category.
"""
import numpy as np

from exitbarrier import (
    bin_events,
    compute_bte,
    parse_ratings,
    parse_tag_relevance,
    preference_series,
)
from exitbarrier.report import emit_bte_report

# a small log: user 1 binges animated films for a few weeks, then drops them
rng = np.random.default_rng(0)
week = 7 * 86_400
lines = []
for w in range(30):
    cartoon = 5 if 10 <= w < 16 else (1 if w >= 16 else 3)
    lines.append(f"1::{100 + w % 3}::{cartoon}::{978_300_000 + w * week}")
    lines.append(f"1::{200 + w % 4}::{int(rng.integers(2, 5))}::{978_300_000 + w * week + 3600}")
events, summary = parse_ratings("\n".join(lines).encode())
print("parsed:", summary.as_dict())

# relevance links movies to tags; pairs that are absent count as zero
relevance = parse_tag_relevance(
    b"movieId,tag,relevance\n"
    b"100,animation,0.95\n101,animation,0.9\n102,animation,0.8\n"
    b"200,violence,0.7\n201,violence,0.4\n202,violence,0.9\n203,violence,0.2\n"
)

# one bin per week, starting at the user's first rating
binned = bin_events(events)[1]
series = preference_series(binned, relevance)
print("steps:", len(series), "categories:", series.categories)

# a past horizon of six weeks and a band of one standard deviation
report, thresholds = compute_bte(series, nu=6, k=1.0)
for c in report.categories:
    spans = [(w.t_x, w.t_y) for w in c.windows]
    print(f"{c.label:>10}: windows {spans}  score {c.category_bte}")
print("system:", report.system_bte)

print(emit_bte_report(report, "csv").decode())
