"""
How the band width changes what counts as an exit
=================================================

Wider bands need larger swings before a crossing registers. With the
current step inside its own window, a z-score can never exceed
``sqrt(nu)``, so ``k`` at or above that bound finds nothing at all.
"""
import numpy as np

from exitbarrier import SimConfig, compute_bte, preference_series, run_simulation
from exitbarrier.report import PlotSpec, render_plot
from exitbarrier.simloop import trace_to_ratings

binned, relevance = trace_to_ratings(run_simulation(SimConfig(horizon=120, seed=11)))
series = preference_series(binned, relevance)

nu = 9
print(f"nu={nu}, largest reachable z-score {np.sqrt(nu):.2f}")
for k in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0):
    report, _ = compute_bte(series, nu=nu, k=k)
    print(f"k={k:<4} windows={sum(report.window_counts.values()):3d} system score={report.system_bte}")

# draw the two busiest categories with their bands and shaded windows
report, thresholds = compute_bte(series, nu=nu, k=1.0)
svg = render_plot(PlotSpec(series.user_id, "series-with-thresholds", top_n=2, height=500),
                  series, thresholds, report)
print(f"series plot: {len(svg)} bytes of SVG")
