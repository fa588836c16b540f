"""Parsing of rating logs and tag-relevance files, and time binning.

Two rating layouts are understood:

``dat``
    MovieLens 1M style, ``user::item::rating::timestamp`` with no header.
``csv``
    Comma separated with the header ``userId,movieId,rating,timestamp``.

Tag relevance is read from a CSV with the header ``movieId,tag,relevance``.
The MovieLens tag genome ships numeric ``tagId`` columns; join it against
``genome-tags.csv`` first so that every row carries the tag label (see the
README for a two-line pandas recipe).
"""
from __future__ import annotations

import csv
import io
import json
import os
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "DataWarning",
    "ParseError",
    "SCALE_HALF_STARS",
    "SCALE_ML1M",
    "RatingEvent",
    "ParseSummary",
    "TagRelevanceMatrix",
    "BinningPolicy",
    "TimeBin",
    "TimeBinnedRatings",
    "parse_ratings",
    "format_ratings",
    "parse_tag_relevance",
    "format_tag_relevance",
    "bin_events",
    "dump_binned",
    "load_binned",
]

#: Half-star scale used by the MovieLens web site.
SCALE_HALF_STARS = (0.5, 5.0)
#: Integer star scale of the ML-1M distribution.
SCALE_ML1M = (1.0, 5.0)

WEEK_SECONDS = 7 * 24 * 3600


class DataWarning(UserWarning):
    """Input data was repaired or partly discarded."""


class ParseError(ValueError):
    """Raised on malformed input when parsing strictly."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass(frozen=True, slots=True)
class RatingEvent:
    user_id: int
    item_id: int
    rating: float
    timestamp: int


@dataclass
class ParseSummary:
    """Bookkeeping for one parse pass.

    ``malformed`` and ``out_of_scale`` hold ``(line_no, reason)`` pairs.
    """

    accepted: int = 0
    malformed: list[tuple[int, str]] = field(default_factory=list)
    out_of_scale: list[tuple[int, str]] = field(default_factory=list)

    @property
    def rejected(self) -> int:
        return len(self.malformed) + len(self.out_of_scale)

    def as_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "malformed": len(self.malformed),
            "out_of_scale": len(self.out_of_scale),
        }


def _open_text(source) -> tuple[IO[str], bool]:
    """Return a text stream for a path, a byte stream, raw bytes or a text stream."""
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", errors="replace", newline=""), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8", errors="replace"), newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # assume binary file-like
    return io.TextIOWrapper(source, encoding="utf-8", errors="replace", newline=""), False


def _check_scale(scale):
    lo, hi = float(scale[0]), float(scale[1])
    if not lo < hi:
        raise ValueError(f"invalid rating scale {scale!r}")
    return lo, hi


def _iter_rating_fields(stream: IO[str], fmt: str) -> Iterator[tuple[int, list[str] | None, str]]:
    if fmt == "dat":
        for line_no, line in enumerate(stream, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            yield line_no, line.split("::"), line
    elif fmt == "csv":
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None:
            return
        header = [h.strip() for h in header]
        if header[:4] != ["userId", "movieId", "rating", "timestamp"]:
            raise ParseError(f"unexpected CSV header {header!r}", 1)
        for row in reader:
            if not row or not any(c.strip() for c in row):
                continue
            yield reader.line_num, row, ",".join(row)
    else:
        raise ValueError(f"unknown ratings format {fmt!r}; expected 'dat' or 'csv'")


def parse_ratings(source, fmt: str = "dat", scale=SCALE_HALF_STARS, strict: bool = False):
    """Parse a ratings log.

    Parameters
    ----------
    source : path, bytes, or binary/text stream
        Line oriented ratings data.
    fmt : {'dat', 'csv'}
        ``dat`` for ``::`` separated lines, ``csv`` for a file with header.
    scale : (float, float)
        Inclusive rating bounds. Ratings outside are rejected and counted.
    strict : bool
        Raise :class:`ParseError` on the first malformed line instead of
        skipping it.

    Returns
    -------
    events : list of RatingEvent
        Accepted events in file order.
    summary : ParseSummary
    """
    lo, hi = _check_scale(scale)
    stream, owned = _open_text(source)
    events: list[RatingEvent] = []
    summary = ParseSummary()
    try:
        for line_no, fields, raw in _iter_rating_fields(stream, fmt):
            try:
                if len(fields) != 4:
                    raise ValueError(f"expected 4 fields, got {len(fields)}")
                user = int(fields[0])
                item = int(fields[1])
                rating = float(fields[2])
                ts = int(fields[3])
                if ts < 0:
                    raise ValueError("negative timestamp")
                if not np.isfinite(rating):
                    raise ValueError("non-finite rating")
            except ValueError as exc:
                if strict:
                    raise ParseError(f"{exc} in {raw!r}", line_no) from None
                summary.malformed.append((line_no, str(exc)))
                continue
            if not lo <= rating <= hi:
                summary.out_of_scale.append((line_no, f"rating {rating} outside [{lo}, {hi}]"))
                continue
            events.append(RatingEvent(user, item, rating, ts))
    finally:
        if owned:
            stream.close()
    summary.accepted = len(events)
    if summary.rejected:
        warnings.warn(
            f"rejected {summary.rejected} rating line(s) "
            f"({len(summary.malformed)} malformed, {len(summary.out_of_scale)} out of scale)",
            DataWarning,
            stacklevel=2,
        )
    return events, summary


def _fmt_number(x: float) -> str:
    x = float(x)
    if x.is_integer():
        return str(int(x))
    return repr(x)


def format_ratings(events: Iterable[RatingEvent], fmt: str = "dat") -> str:
    """Serialize events in either input layout; inverse of :func:`parse_ratings`."""
    if fmt == "dat":
        return "".join(
            f"{e.user_id}::{e.item_id}::{_fmt_number(e.rating)}::{e.timestamp}\n" for e in events
        )
    if fmt == "csv":
        lines = ["userId,movieId,rating,timestamp\n"]
        lines += [f"{e.user_id},{e.item_id},{_fmt_number(e.rating)},{e.timestamp}\n" for e in events]
        return "".join(lines)
    raise ValueError(f"unknown ratings format {fmt!r}")


class TagRelevanceMatrix:
    """Sparse item x category relevance scores in [0, 1].

    Pairs that were never stored read as 0.
    """

    def __init__(self, categories: Sequence[str], relevance: Mapping[tuple[int, int], float] | None = None):
        categories = tuple(str(c) for c in categories)
        if len(set(categories)) != len(categories):
            raise ValueError("category labels must be unique")
        self.categories = categories
        self._index = {c: i for i, c in enumerate(categories)}
        self._rows: dict[int, np.ndarray] = {}
        for (item, cat), value in (relevance or {}).items():
            self._set(int(item), int(cat), float(value))

    def _set(self, item: int, cat: int, value: float) -> None:
        if not 0 <= cat < len(self.categories):
            raise IndexError(f"category index {cat} out of range")
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"relevance {value} for ({item}, {self.categories[cat]}) outside [0, 1]")
        row = self._rows.get(item)
        if row is None:
            row = self._rows[item] = np.zeros(len(self.categories))
        row[cat] = value

    @classmethod
    def from_dense(cls, categories, items, matrix) -> "TagRelevanceMatrix":
        """Build from an ``(n_items, n_categories)`` array; zero entries are left implicit."""
        matrix = np.asarray(matrix, dtype=float)
        out = cls(categories)
        if matrix.shape != (len(items), len(out.categories)):
            raise ValueError("matrix shape does not match items x categories")
        if matrix.size and (matrix.min() < 0 or matrix.max() > 1):
            raise ValueError("relevance values must lie in [0, 1]")
        for item, row in zip(items, matrix):
            if np.any(row):
                out._rows[int(item)] = row.copy()
        return out

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    def category_index(self, label: str) -> int:
        return self._index[label]

    def items(self) -> list[int]:
        return sorted(self._rows)

    def relevance(self, item_id: int, category) -> float:
        """Relevance of one item to one category (label or index)."""
        cat = self._index[category] if isinstance(category, str) else int(category)
        if not 0 <= cat < len(self.categories):
            raise IndexError(f"category index {cat} out of range")
        row = self._rows.get(int(item_id))
        return 0.0 if row is None else float(row[cat])

    def vector(self, item_id: int) -> np.ndarray:
        """Relevance of ``item_id`` to every category; a fresh array."""
        row = self._rows.get(int(item_id))
        return np.zeros(len(self.categories)) if row is None else row.copy()

    def dense(self, item_ids: Sequence[int]) -> np.ndarray:
        out = np.zeros((len(item_ids), len(self.categories)))
        for k, item in enumerate(item_ids):
            row = self._rows.get(int(item))
            if row is not None:
                out[k] = row
        return out

    def stored_pairs(self) -> dict[tuple[int, int], float]:
        return {
            (item, c): float(v)
            for item, row in sorted(self._rows.items())
            for c, v in enumerate(row)
            if v != 0.0
        }

    def select(self, labels: Sequence[str]) -> "TagRelevanceMatrix":
        """Restrict to ``labels`` in the given order."""
        missing = [l for l in labels if l not in self._index]
        if missing:
            raise KeyError(f"unknown categories: {', '.join(missing)}")
        idx = [self._index[l] for l in labels]
        out = TagRelevanceMatrix(labels)
        for item, row in self._rows.items():
            sub = row[idx]
            if np.any(sub):
                out._rows[item] = sub.copy()
        return out

    def __eq__(self, other):
        if not isinstance(other, TagRelevanceMatrix):
            return NotImplemented
        return self.categories == other.categories and self.stored_pairs() == other.stored_pairs()

    def __repr__(self):
        return f"TagRelevanceMatrix({len(self._rows)} items x {len(self.categories)} categories)"


def parse_tag_relevance(source, strict: bool = False, categories: Sequence[str] | None = None) -> TagRelevanceMatrix:
    """Read a ``movieId,tag,relevance`` CSV.

    Category order follows first appearance in the file unless ``categories``
    is given, in which case only those labels are kept, in that order.
    Out-of-range relevance is clamped (lenient) or fatal (strict); repeated
    pairs keep the last value.
    """
    stream, owned = _open_text(source)
    values: dict[tuple[int, str], float] = {}
    order: dict[str, None] = {}
    n_clamped = n_dupes = 0
    try:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty relevance file", 1)
        if [h.strip() for h in header[:3]] != ["movieId", "tag", "relevance"]:
            raise ParseError(f"unexpected relevance header {header!r}", 1)
        for row in reader:
            if not row or not any(c.strip() for c in row):
                continue
            line_no = reader.line_num
            try:
                if len(row) != 3:
                    raise ValueError(f"expected 3 fields, got {len(row)}")
                item = int(row[0])
                tag = row[1].strip()
                if not tag:
                    raise ValueError("empty tag label")
                rel = float(row[2])
                if not np.isfinite(rel):
                    raise ValueError("non-finite relevance")
            except ValueError as exc:
                if strict:
                    raise ParseError(str(exc), line_no) from None
                warnings.warn(f"line {line_no}: skipped ({exc})", DataWarning, stacklevel=2)
                continue
            if not 0.0 <= rel <= 1.0:
                if strict:
                    raise ParseError(f"relevance {rel} outside [0, 1]", line_no)
                rel = min(max(rel, 0.0), 1.0)
                n_clamped += 1
            if (item, tag) in values:
                n_dupes += 1
            values[(item, tag)] = rel
            order.setdefault(tag)
    finally:
        if owned:
            stream.close()
    if n_clamped:
        warnings.warn(f"clamped {n_clamped} relevance value(s) into [0, 1]", DataWarning, stacklevel=2)
    if n_dupes:
        warnings.warn(f"{n_dupes} duplicate (item, tag) pair(s); last value kept", DataWarning, stacklevel=2)

    labels = list(order) if categories is None else list(categories)
    index = {c: i for i, c in enumerate(labels)}
    matrix = TagRelevanceMatrix(labels)
    for (item, tag), rel in values.items():
        if tag in index:
            matrix._set(item, index[tag], rel)
    return matrix


def format_tag_relevance(matrix: TagRelevanceMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["movieId", "tag", "relevance"])
    for (item, cat), value in matrix.stored_pairs().items():
        writer.writerow([item, matrix.categories[cat], repr(value)])
    return buf.getvalue()


@dataclass(frozen=True)
class BinningPolicy:
    """How raw timestamps become time steps.

    ``mode`` is ``fixed-duration`` (parameter in seconds, windows anchored at
    the user's first event), ``fixed-count`` (parameter events per bin) or
    ``session-gap`` (a new bin starts after a silence longer than the
    parameter in seconds).
    """

    mode: str = "fixed-duration"
    parameter: float = WEEK_SECONDS

    MODES = ("fixed-duration", "fixed-count", "session-gap")

    def __post_init__(self):
        if self.mode not in self.MODES:
            raise ValueError(f"unknown binning mode {self.mode!r}")
        if not self.parameter > 0:
            raise ValueError("binning parameter must be positive")
        if self.mode == "fixed-count" and int(self.parameter) != self.parameter:
            raise ValueError("fixed-count parameter must be an integer")

    @classmethod
    def weekly(cls) -> "BinningPolicy":
        return cls("fixed-duration", WEEK_SECONDS)

    @classmethod
    def parse(cls, text: str) -> "BinningPolicy":
        """Parse ``weekly``, ``daily``, ``seconds:S``, ``count:N`` or ``gap:S``."""
        text = text.strip()
        if text == "weekly":
            return cls.weekly()
        if text == "daily":
            return cls("fixed-duration", 24 * 3600)
        kind, _, value = text.partition(":")
        try:
            if kind == "count":
                return cls("fixed-count", int(value))
            if kind == "gap":
                return cls("session-gap", float(value))
            if kind == "seconds":
                return cls("fixed-duration", float(value))
        except ValueError as exc:
            raise ValueError(f"bad binning spec {text!r}: {exc}") from None
        raise ValueError(f"bad binning spec {text!r}")

    def describe(self) -> str:
        if self.mode == "fixed-duration":
            return "weekly" if self.parameter == WEEK_SECONDS else f"seconds:{_fmt_number(self.parameter)}"
        if self.mode == "fixed-count":
            return f"count:{int(self.parameter)}"
        return f"gap:{_fmt_number(self.parameter)}"


@dataclass(frozen=True)
class TimeBin:
    t_index: int
    t_repr: int
    ratings: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class TimeBinnedRatings:
    user_id: int
    bins: tuple[TimeBin, ...]

    def __len__(self):
        return len(self.bins)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([b.t_repr for b in self.bins], dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "bins": [
                {
                    "t_index": b.t_index,
                    "t_repr_seconds": b.t_repr,
                    "ratings": [[item, rating] for item, rating in b.ratings],
                }
                for b in self.bins
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TimeBinnedRatings":
        bins = tuple(
            TimeBin(
                int(b["t_index"]),
                int(b["t_repr_seconds"]),
                tuple((int(item), float(r)) for item, r in b["ratings"]),
            )
            for b in doc["bins"]
        )
        reprs = [b.t_repr for b in bins]
        if any(b2 <= b1 for b1, b2 in zip(reprs, reprs[1:])):
            raise ValueError(f"user {doc['user_id']}: bins not in strictly increasing time order")
        if any(not b.ratings for b in bins):
            raise ValueError(f"user {doc['user_id']}: empty bin")
        return cls(int(doc["user_id"]), bins)


def _split_user(events: list[RatingEvent], policy: BinningPolicy) -> list[tuple[int, list[RatingEvent]]]:
    groups: list[tuple[int, list[RatingEvent]]] = []
    if policy.mode == "fixed-duration":
        origin = events[0].timestamp
        width = policy.parameter
        current = None
        for e in events:
            k = int((e.timestamp - origin) // width)
            if k != current:
                groups.append((origin + int(k * width), []))
                current = k
            groups[-1][1].append(e)
    elif policy.mode == "fixed-count":
        n = int(policy.parameter)
        for start in range(0, len(events), n):
            chunk = events[start:start + n]
            groups.append((chunk[0].timestamp, chunk))
    else:
        gap = policy.parameter
        prev = None
        for e in events:
            if prev is None or e.timestamp - prev > gap:
                groups.append((e.timestamp, []))
            groups[-1][1].append(e)
            prev = e.timestamp
    # fixed-count chunks may share a first timestamp; merge so representatives stay strictly increasing
    merged: list[tuple[int, list[RatingEvent]]] = []
    for t_repr, chunk in groups:
        if merged and merged[-1][0] >= t_repr:
            merged[-1][1].extend(chunk)
        else:
            merged.append((t_repr, list(chunk)))
    return merged


def bin_events(events: Iterable[RatingEvent], policy: BinningPolicy | None = None) -> dict[int, TimeBinnedRatings]:
    """Group events into per-user time steps.

    Events are sorted by ``(user, timestamp)`` (stable, so same-second
    events keep input order). Empty windows never produce a bin. Returns a
    dict keyed by user id in ascending order.
    """
    policy = policy or BinningPolicy.weekly()
    per_user: dict[int, list[RatingEvent]] = defaultdict(list)
    for e in events:
        per_user[e.user_id].append(e)
    out = {}
    for user in sorted(per_user):
        evs = sorted(per_user[user], key=lambda e: e.timestamp)
        bins = tuple(
            TimeBin(t, t_repr, tuple((e.item_id, e.rating) for e in chunk))
            for t, (t_repr, chunk) in enumerate(_split_user(evs, policy))
        )
        out[user] = TimeBinnedRatings(user, bins)
    return out


def dump_binned(binned: Iterable[TimeBinnedRatings] | Mapping[int, TimeBinnedRatings], path=None) -> str:
    """Serialize to JSON Lines, one canonical document per user."""
    if isinstance(binned, Mapping):
        binned = binned.values()
    text = "".join(
        json.dumps(b.to_dict(), sort_keys=True, separators=(",", ":")) + "\n" for b in binned
    )
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_binned(source) -> dict[int, TimeBinnedRatings]:
    """Read JSON Lines from a path, bytes, or a string holding the documents."""
    if isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode("utf-8")
    elif isinstance(source, os.PathLike) or not source.lstrip().startswith("{"):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    out = {}
    for line in text.splitlines():
        if line.strip():
            b = TimeBinnedRatings.from_dict(json.loads(line))
            out[b.user_id] = b
    return out
