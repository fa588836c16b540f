"""Closed-loop simulator of one user interacting with a recommender.

Each step ``t``:

1. the recommender serves ``l`` items ``alpha_t`` chosen epsilon-greedily
   from its item scores ``theta_t``;
2. the user rates them according to the current interest ``mu_t`` (a
   probability vector over categories) plus Gaussian noise;
3. the scores of the served items move toward the normalized ratings;
4. the interest drifts toward the categories the user just rewarded, and any
   scheduled shift overrides one category's weight.

The dynamics are deliberately small stand-ins; the trace format is what the
analysis pipeline relies on.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .ingest import SCALE_HALF_STARS, TagRelevanceMatrix, TimeBin, TimeBinnedRatings

__all__ = [
    "ConfigError",
    "Shift",
    "SimConfig",
    "SimState",
    "SimTrace",
    "make_relevance",
    "recommend",
    "user_feedback",
    "update_model",
    "exposure",
    "drift_preference",
    "entropy",
    "run_simulation",
    "trace_to_ratings",
    "load_sim_config",
    "format_sim_config",
]


class ConfigError(ValueError):
    """Invalid simulation configuration; ``errors`` lists every problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid simulation config: " + "; ".join(self.errors))


@dataclass(frozen=True)
class Shift:
    """Exogenous preference change applied when computing ``mu[step + 1]``."""

    step: int
    category: int
    weight: float


@dataclass(frozen=True)
class SimConfig:
    n_items: int = 200
    items_per_step: int = 20
    n_categories: int = 8
    sparsity: float = 0.7
    relevance_seed: int | None = None
    horizon: int = 100
    drift: float = 0.2
    exploration: float = 0.1
    learning_rate: float = 0.5
    noise: float = 0.5
    shifts: tuple[Shift, ...] = ()
    interest_concentration: float | None = None
    user_id: int = 1
    seed: int = 0

    def errors(self) -> list[str]:
        errs = []
        if self.n_items < 1:
            errs.append("n_items must be >= 1")
        if self.items_per_step < 1:
            errs.append("items_per_step must be >= 1")
        if self.items_per_step > self.n_items:
            errs.append("items_per_step must not exceed n_items")
        if self.n_categories < 1:
            errs.append("n_categories must be >= 1")
        if not 0.0 <= self.sparsity < 1.0:
            errs.append("sparsity must be in [0, 1)")
        if self.horizon < 1:
            errs.append("horizon must be >= 1")
        for name in ("drift", "exploration"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                errs.append(f"{name} must be in [0, 1]")
        if not 0.0 < self.learning_rate <= 1.0:
            errs.append("learning_rate must be in (0, 1]")
        if not self.noise >= 0.0:
            errs.append("noise must be >= 0")
        if self.interest_concentration is not None and not self.interest_concentration > 0:
            errs.append("interest_concentration must be > 0")
        for s in self.shifts:
            if not 0 <= s.step < self.horizon:
                errs.append(f"shift step {s.step} outside [0, {self.horizon})")
            if not 0 <= s.category < self.n_categories:
                errs.append(f"shift category {s.category} outside [0, {self.n_categories})")
            if not 0.0 <= s.weight <= 1.0:
                errs.append(f"shift weight {s.weight} outside [0, 1]")
        return errs

    def validate(self) -> "SimConfig":
        errs = self.errors()
        if errs:
            raise ConfigError(errs)
        return self

    def category_labels(self) -> tuple[str, ...]:
        width = len(str(self.n_categories - 1))
        return tuple(f"category_{k:0{width}d}" for k in range(self.n_categories))


@dataclass(frozen=True)
class SimState:
    """Everything observed at one step.

    ``mu`` is the interest the user rated with, ``theta`` the scores the
    recommender served from, ``ratings[j]`` the rating of ``alpha[j]`` and
    ``category_feedback`` the relevance-weighted rating sum per category.
    """

    step: int
    mu: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    ratings: np.ndarray
    category_feedback: np.ndarray
    served_entropy: float
    n_new_items: int


@dataclass
class SimTrace:
    config: SimConfig
    relevance: np.ndarray
    states: list[SimState] = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    @property
    def mu(self) -> np.ndarray:
        return np.vstack([s.mu for s in self.states])

    @property
    def category_feedback(self) -> np.ndarray:
        return np.vstack([s.category_feedback for s in self.states])

    @property
    def shifts(self) -> tuple[Shift, ...]:
        return self.config.shifts


def entropy(p) -> float:
    """Shannon entropy in nats; zero entries contribute nothing."""
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def make_relevance(n_items: int, n_categories: int, sparsity: float, rng: np.random.Generator) -> np.ndarray:
    """Item x category relevance in [0, 1].

    Each item gets one primary category with relevance in [0.6, 1]; every
    other entry is non-zero with probability ``1 - sparsity`` and then drawn
    from [0, 0.5).
    """
    rel = np.where(
        rng.random((n_items, n_categories)) >= sparsity,
        rng.uniform(0.0, 0.5, (n_items, n_categories)),
        0.0,
    )
    primary = rng.integers(n_categories, size=n_items)
    rel[np.arange(n_items), primary] = rng.uniform(0.6, 1.0, n_items)
    return rel


def recommend(theta: np.ndarray, l: int, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Pick ``l`` distinct items, each slot exploring with probability ``epsilon``.

    Greedy slots take the best remaining score, ties going to the lower id.
    """
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    if not 1 <= l <= n:
        raise ValueError("need 1 <= l <= number of items")
    order = np.argsort(-theta, kind="stable")
    taken = np.zeros(n, dtype=bool)
    chosen = []
    cursor = 0
    for _ in range(l):
        if rng.random() < epsilon:
            pool = np.flatnonzero(~taken)
            item = int(pool[rng.integers(pool.size)])
        else:
            while taken[order[cursor]]:
                cursor += 1
            item = int(order[cursor])
        taken[item] = True
        chosen.append(item)
    return np.array(chosen, dtype=np.int64)


def user_feedback(mu, alpha, relevance: np.ndarray, noise: float, rng: np.random.Generator, scale=SCALE_HALF_STARS) -> np.ndarray:
    """Ratings for the served items.

    The affinity of item ``a`` is ``relevance[a] @ mu`` (in [0, 1]); it maps
    linearly onto the rating scale, then noise is added and the result is
    clipped to the scale.
    """
    lo, hi = scale
    affinity = relevance[np.asarray(alpha)] @ np.asarray(mu, dtype=float)
    jitter = rng.standard_normal(len(alpha))
    return np.clip(lo + (hi - lo) * affinity + noise * jitter, lo, hi)


def update_model(theta, alpha, ratings, learning_rate: float, scale=SCALE_HALF_STARS) -> np.ndarray:
    """Exponential update of the served items' scores toward normalized ratings."""
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError("learning_rate must be in (0, 1]")
    lo, hi = scale
    new = np.array(theta, dtype=float)
    alpha = np.asarray(alpha)
    target = (np.asarray(ratings, dtype=float) - lo) / (hi - lo)
    new[alpha] = (1.0 - learning_rate) * new[alpha] + learning_rate * target
    return new


def exposure(mu, alpha, ratings, relevance: np.ndarray, scale=SCALE_HALF_STARS) -> np.ndarray:
    """Category profile of what the user just consumed, weighted by enjoyment.

    Each rated item credits category ``k`` in proportion to how much of the
    user's affinity for it came from ``k`` (``mu[k] * relevance[a, k]``),
    scaled by the normalized rating. Falls back to ``mu`` when nothing was
    credited.
    """
    lo, hi = scale
    mu = np.asarray(mu, dtype=float)
    liked = (np.asarray(ratings, dtype=float) - lo) / (hi - lo)
    profile = mu * (liked @ relevance[np.asarray(alpha)])
    total = profile.sum()
    if not total > 0:
        return mu.copy()
    return profile / total


def drift_preference(mu, alpha, ratings, relevance: np.ndarray, gamma: float, shifts=(), step: int = 0, scale=SCALE_HALF_STARS) -> np.ndarray:
    """Next interest vector: ``(1 - gamma) * mu + gamma * exposure``, renormalized.

    A shift scheduled for ``step`` replaces its category's weight before the
    final normalization.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    mu = np.asarray(mu, dtype=float)
    if gamma == 0.0:
        nxt = mu.copy()
    else:
        nxt = (1.0 - gamma) * mu + gamma * exposure(mu, alpha, ratings, relevance, scale)
    fired = [s for s in shifts if s.step == step]
    for s in fired:
        nxt[s.category] = s.weight
    if fired and not nxt.sum() > 0:
        # every category was zeroed out; hand the mass to the untouched ones
        rest = np.ones_like(nxt, dtype=bool)
        rest[[s.category for s in fired]] = False
        nxt[rest] = 1.0
    if fired or gamma != 0.0:
        nxt = nxt / nxt.sum()
    return nxt


def _served_entropy(relevance_rows: np.ndarray) -> float:
    profile = relevance_rows.sum(axis=0)
    total = profile.sum()
    return entropy(profile / total) if total > 0 else 0.0


def _category_feedback(rows: np.ndarray, ratings: np.ndarray) -> np.ndarray:
    return rows.T @ ratings


def run_simulation(config: SimConfig) -> SimTrace:
    """Run the loop for ``config.horizon`` steps; fully determined by the seeds."""
    config.validate()
    seq = np.random.SeedSequence(config.seed)
    rel_seq, mu_seq, rec_seq, fb_seq = seq.spawn(4)
    if config.relevance_seed is not None:
        rel_seq = np.random.SeedSequence(config.relevance_seed)
    relevance = make_relevance(config.n_items, config.n_categories, config.sparsity, np.random.default_rng(rel_seq))
    if config.interest_concentration is None:
        mu = np.full(config.n_categories, 1.0 / config.n_categories)
    else:
        mu = np.random.default_rng(mu_seq).dirichlet(np.full(config.n_categories, config.interest_concentration))
    rec_rng = np.random.default_rng(rec_seq)
    fb_rng = np.random.default_rng(fb_seq)
    theta = np.zeros(config.n_items)

    trace = SimTrace(config, relevance)
    previous = np.zeros(0, dtype=np.int64)
    for t in range(config.horizon):
        alpha = recommend(theta, config.items_per_step, config.exploration, rec_rng)
        ratings = user_feedback(mu, alpha, relevance, config.noise, fb_rng)
        rows = relevance[alpha]
        trace.states.append(SimState(
            step=t,
            mu=mu,
            theta=theta,
            alpha=alpha,
            ratings=ratings,
            category_feedback=_category_feedback(rows, ratings),
            served_entropy=_served_entropy(rows),
            n_new_items=int(np.setdiff1d(alpha, previous).size),
        ))
        previous = alpha
        theta = update_model(theta, alpha, ratings, config.learning_rate)
        mu = drift_preference(mu, alpha, ratings, relevance, config.drift, config.shifts, t)
    return trace


def trace_to_ratings(trace: SimTrace) -> tuple[TimeBinnedRatings, TagRelevanceMatrix]:
    """One time bin per step, stamped with the step index as its time."""
    bins = tuple(
        TimeBin(s.step, s.step, tuple((int(a), float(r)) for a, r in zip(s.alpha, s.ratings)))
        for s in trace.states
    )
    labels = trace.config.category_labels()
    matrix = TagRelevanceMatrix.from_dense(labels, range(trace.relevance.shape[0]), trace.relevance)
    return TimeBinnedRatings(trace.config.user_id, bins), matrix


_SHIFT_RE = re.compile(r"^\s*(\d+)\s*:\s*(\d+)\s*:\s*([0-9.eE+-]+)\s*$")


def _parse_shifts(text: str) -> tuple[Shift, ...]:
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        m = _SHIFT_RE.match(part)
        if not m:
            raise ValueError(f"bad shift {part!r}; expected step:category:weight")
        out.append(Shift(int(m[1]), int(m[2]), float(m[3])))
    return tuple(out)


def load_sim_config(source, **overrides) -> SimConfig:
    """Read ``key = value`` lines (``#`` comments allowed) into a :class:`SimConfig`.

    ``shifts`` takes comma separated ``step:category:weight`` triples. Every
    problem found is reported in one :class:`ConfigError`.
    """
    if isinstance(source, os.PathLike) or (isinstance(source, str) and "=" not in source):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    types = {f.name: f.type for f in fields(SimConfig)}
    values: dict = {}
    errs = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = (p.strip() for p in line.partition("="))
        if not sep:
            errs.append(f"line {line_no}: expected key = value")
            continue
        if key not in types:
            errs.append(f"line {line_no}: unknown key {key!r}")
            continue
        values[key] = raw
    values.update({k: v for k, v in overrides.items() if v is not None})
    parsed = {}
    for key, raw in values.items():
        if not isinstance(raw, str):
            parsed[key] = raw
            continue
        try:
            if key == "shifts":
                parsed[key] = _parse_shifts(raw)
            elif key in ("relevance_seed", "interest_concentration") and raw.lower() in ("", "none"):
                parsed[key] = None
            elif "float" in str(types[key]):
                parsed[key] = float(raw)
            else:
                parsed[key] = int(raw)
        except ValueError as exc:
            errs.append(f"{key}: {exc}")
    if errs:
        raise ConfigError(errs)
    cfg = SimConfig(**parsed)
    return cfg.validate()


def format_sim_config(config: SimConfig) -> str:
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name == "shifts":
            value = ", ".join(f"{s.step}:{s.category}:{s.weight!r}" for s in value)
        elif value is None:
            value = "none"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
