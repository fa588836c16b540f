"""Brute-force reference computations used by the tests.

These deliberately avoid the package's code paths: plain Python loops over
lists, the ``statistics`` module for window moments, and exhaustive pair
enumeration for exit windows.
"""
import math
import statistics


def revealed_preference(ratings, relevance_lookup, n_categories):
    """Relevance-weighted rating sum, category by category, in rating order."""
    out = []
    for i in range(n_categories):
        total = 0.0
        for item, rating in ratings:
            total += relevance_lookup(item, i) * rating
        out.append(total)
    return out


def window_thresholds(column, nu, k, sample=False):
    """Per-step (upper, lower) for one category; None during warm-up."""
    out = []
    for t in range(len(column)):
        if t < nu:
            out.append(None)
            continue
        window = [float(v) for v in column[t - nu:t + 1]]
        m = statistics.fmean(window)
        s = statistics.stdev(window) if sample else statistics.pstdev(window)
        out.append((m + k * s, m - k * s))
    return out


def valid_pairs(c, upper, lower, first):
    """Every (t_x, t_y) satisfying the entry, exit and interior conditions."""
    n = len(c)
    pairs = []
    for a in range(first, n):
        for b in range(a + 1, n):
            if not c[a] > upper[a]:
                continue
            if not c[b] < lower[b]:
                continue
            if all(lower[t] < c[t] < upper[t] for t in range(a + 1, b)):
                pairs.append((a, b))
    return pairs


def greedy_windows(pairs):
    """Earliest entry, then earliest exit; the next window starts after the previous exit."""
    chosen = []
    last_exit = -1
    for a, b in sorted(pairs):
        if a <= last_exit:
            continue
        chosen.append((a, b))
        last_exit = b
    return chosen


def area(values):
    total = 0.0
    for v in values:
        total += v
    return total


def mean(values):
    values = list(values)
    return math.fsum(values) / len(values)
