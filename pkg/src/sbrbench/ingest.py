"""Loading event logs, sessionization, filtering and train/test splits."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .core import DAY, ItemIndex, Session, make_rng


class DataError(ValueError):
    """Malformed input data."""


class RawEvent(NamedTuple):
    key: str
    item: object
    time: int | None
    line: int


TIME_FORMATS = ("epoch_seconds", "epoch_millis", "date", "iso", "none")


@dataclass(frozen=True)
class ColumnSpec:
    """Which columns of a delimited file carry the session/user key, item and time."""

    session: str
    item: str
    time: str | None = None
    time_format: str = "epoch_seconds"
    delimiter: str = ","
    event_column: str | None = None
    event_value: str | None = None  # keep only rows whose event column equals this

    def __post_init__(self):
        if self.time_format not in TIME_FORMATS:
            raise ValueError(f"unknown time format {self.time_format!r}")
        if (self.event_column is None) != (self.event_value is None):
            raise ValueError("event_column and event_value must be given together")


def parse_time(value: str, fmt: str) -> int:
    value = value.strip()
    if fmt == "epoch_seconds":
        return int(float(value))
    if fmt == "epoch_millis":
        return int(float(value)) // 1000
    if fmt == "date":
        pattern = "%Y-%m-%d %H:%M:%S" if " " in value else "%Y-%m-%d"
        dt = datetime.strptime(value, pattern)
    elif fmt == "iso":
        if value.endswith("Z"):
            value = value[:-1] + "+00:00"
        dt = datetime.fromisoformat(value)
    else:
        raise ValueError(f"cannot parse time with format {fmt!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def load_events(path, columns: ColumnSpec) -> list[RawEvent]:
    """Read one record per data row of a delimited file with a header row."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    records = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=columns.delimiter)
        header = next(reader, None)
        if header is None:
            return records
        header = [h.strip() for h in header]
        wanted = [columns.session, columns.item]
        if columns.time is not None:
            wanted.append(columns.time)
        if columns.event_column is not None:
            wanted.append(columns.event_column)
        missing = [c for c in wanted if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}; header is {header}")
        si, ii = header.index(columns.session), header.index(columns.item)
        ti = header.index(columns.time) if columns.time is not None else None
        ei = header.index(columns.event_column) if columns.event_column is not None else None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if ei is not None and ei < len(row) and row[ei].strip() != columns.event_value:
                continue
            try:
                key, item = row[si].strip(), row[ii].strip()
                raw_time = row[ti] if ti is not None else None
            except IndexError:
                raise DataError(f"{path}:{lineno}: too few fields") from None
            if not item:
                raise DataError(f"{path}:{lineno}: empty item field")
            if not key:
                raise DataError(f"{path}:{lineno}: empty session field")
            time = None
            if raw_time is not None:
                try:
                    time = parse_time(raw_time, columns.time_format)
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: cannot parse time {raw_time!r}: {exc}") from None
            records.append(RawEvent(key, item, time, lineno))
    return records


def intern_items(records: Iterable[RawEvent]) -> tuple[list[RawEvent], ItemIndex]:
    """Replace raw item identifiers by dense ids in order of first appearance."""
    index = ItemIndex()
    log = [r._replace(item=index.intern(r.item)) for r in records]
    return log, index


def _group(records: Iterable[RawEvent]) -> dict[str, list[RawEvent]]:
    groups: dict[str, list[RawEvent]] = defaultdict(list)
    for r in records:
        groups[r.key].append(r)
    return groups


def _order_key(r: RawEvent):
    return (r.time if r.time is not None else 0, r.line)


def _number(chunks: list[tuple[str, list[RawEvent]]]) -> list[Session]:
    chunks.sort(key=lambda c: (c[1][0].time, c[1][0].line))
    return [
        Session(n, tuple(int(r.item) for r in evs), tuple(int(r.time) for r in evs), key=key)
        for n, (key, evs) in enumerate(chunks)
    ]


def sessionize_by_key(records: Iterable[RawEvent]) -> list[Session]:
    """One session per key, for logs that already carry session ids."""
    chunks = [(key, sorted(evs, key=_order_key)) for key, evs in _group(records).items()]
    return _number(chunks)


def sessionize_idle(records: Iterable[RawEvent], idle_gap_seconds: int = 1800) -> list[Session]:
    """Split each user's event stream wherever the gap exceeds ``idle_gap_seconds``."""
    chunks = []
    for key, evs in _group(records).items():
        evs = sorted(evs, key=_order_key)
        current = [evs[0]]
        part = 0
        for prev, ev in zip(evs, evs[1:]):
            if ev.time - prev.time > idle_gap_seconds:
                chunks.append((f"{key}#{part}", current))
                current, part = [], part + 1
            current.append(ev)
        chunks.append((f"{key}#{part}" if part else key, current))
    return _number(chunks)


def sessionize_by_day(records: Iterable[RawEvent]) -> list[Session]:
    """One session per (user, UTC calendar day)."""
    by_day: dict[tuple[str, int], list[RawEvent]] = defaultdict(list)
    for r in records:
        by_day[(r.key, r.time // DAY)].append(r)
    chunks = [(f"{key}@{day}", sorted(evs, key=_order_key)) for (key, day), evs in by_day.items()]
    return _number(chunks)


def sessionize_playlists(records: Iterable[RawEvent]) -> list[Session]:
    """Playlists without timestamps: ordinal position stands in for time."""
    out = []
    for n, (key, evs) in enumerate(_group(records).items()):
        evs = sorted(evs, key=lambda r: r.line)
        out.append(
            Session(n, tuple(int(r.item) for r in evs), tuple(range(1, len(evs) + 1)), start_time=n, key=key)
        )
    return out


def sessionize(records, mode: str = "key", idle_gap: int = 1800) -> list[Session]:
    if mode == "key":
        return sessionize_by_key(records)
    if mode == "idle":
        return sessionize_idle(records, idle_gap)
    if mode == "day":
        return sessionize_by_day(records)
    if mode == "playlist":
        return sessionize_playlists(records)
    raise ValueError(f"unknown sessionization mode {mode!r}")


def filter_sessions(sessions: Iterable[Session], min_len: int = 2) -> list[Session]:
    return [s for s in sessions if len(s) >= min_len]


def filter_item_support(sessions: Sequence[Session], min_support: int) -> list[Session]:
    """Drop events of items with fewer than ``min_support`` occurrences (off by default)."""
    if min_support <= 1:
        return list(sessions)
    counts: dict[int, int] = defaultdict(int)
    for s in sessions:
        for i in s.items:
            counts[i] += 1
    out = []
    for s in sessions:
        kept = [(i, t) for i, t in zip(s.items, s.times) if counts[i] >= min_support]
        if kept:
            items, times = zip(*kept)
            out.append(s.with_items(items, times))
    return out


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "sliding_window"
    n_slices: int = 5
    train_days: float = 30.0
    test_days: float = 1.0
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.mode not in ("sliding_window", "single", "random"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.mode == "sliding_window":
            if self.n_slices < 1 or self.train_days <= 0 or self.test_days <= 0:
                raise ValueError("sliding window needs n_slices >= 1 and positive train/test days")
        if self.mode == "single" and self.test_days <= 0:
            raise ValueError("single split needs positive test_days")
        if self.mode == "random" and not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class Slice:
    train: list[Session]
    test: list[Session]
    slice_index: int = 0
    test_start: int | None = None
    time_based: bool = True

    def check(self) -> None:
        """Assert the slice invariants."""
        assert all(len(s) >= 2 for s in self.test), "test session shorter than 2"
        if self.time_based and self.train and self.test:
            last_train = max(s.end_time for s in self.train)
            first_test = min(s.start_time for s in self.test)
            assert last_train < first_test, "training data overlaps the test window"


def _cut(sessions: Sequence[Session], lo: float, mid: float, hi: float):
    # sessions straddling a window boundary are dropped so windows stay disjoint
    train = [s for s in sessions if lo <= s.start_time and s.end_time < mid]
    test = [s for s in sessions if mid <= s.start_time and s.end_time < hi]
    return train, test


def sliding_window_split(sessions: Sequence[Session], spec: SplitSpec) -> list[Slice]:
    """Tile ``n_slices`` contiguous train+test windows from the dataset start."""
    if not sessions:
        raise DataError("no sessions to split")
    t0 = min(s.start_time for s in sessions)
    t_end = max(s.end_time for s in sessions)
    width = (spec.train_days + spec.test_days) * DAY
    last_test_start = t0 + (spec.n_slices - 1) * width + spec.train_days * DAY
    if last_test_start > t_end:
        span_days = (t_end - t0) / DAY
        raise DataError(
            f"dataset spans {span_days:.2f} days, too short for {spec.n_slices} slices "
            f"of {spec.train_days}+{spec.test_days} days"
        )
    slices = []
    for n in range(spec.n_slices):
        lo = t0 + n * width
        mid = lo + spec.train_days * DAY
        hi = mid + spec.test_days * DAY
        train, test = _cut(sessions, lo, mid, hi)
        slices.append(Slice(train, filter_sessions(test), n, int(math.ceil(mid))))
    return slices


def single_split(sessions: Sequence[Session], test_days: float) -> Slice:
    """Everything before the last ``test_days`` trains, the tail tests."""
    if not sessions:
        raise DataError("no sessions to split")
    t0 = min(s.start_time for s in sessions)
    t_end = max(s.end_time for s in sessions)
    if test_days * DAY >= t_end - t0:
        raise DataError(f"test window of {test_days} days covers the whole {((t_end - t0) / DAY):.2f}-day span")
    # align the cutoff to a day boundary when the data is day-aligned in UTC
    cutoff = t_end - test_days * DAY
    cutoff = int(math.ceil(cutoff / DAY) * DAY) if test_days == int(test_days) else int(math.ceil(cutoff))
    train, test = _cut(sessions, -math.inf, cutoff, math.inf)
    return Slice(train, filter_sessions(test), 0, cutoff)


def random_split(sessions: Sequence[Session], test_fraction: float, seed: int) -> Slice:
    """Seeded random assignment of whole sessions to train and test."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    order = make_rng(seed, "random_split").permutation(len(sessions))
    n_test = int(math.floor(len(sessions) * test_fraction))
    test_idx = set(order[:n_test].tolist())
    train = [s for n, s in enumerate(sessions) if n not in test_idx]
    test = [s for n, s in enumerate(sessions) if n in test_idx]
    return Slice(train, filter_sessions(test), 0, None, time_based=False)


def split(sessions: Sequence[Session], spec: SplitSpec, seed: int = 0) -> list[Slice]:
    if spec.mode == "sliding_window":
        return sliding_window_split(sessions, spec)
    if spec.mode == "single":
        return [single_split(sessions, spec.test_days)]
    return [random_split(sessions, spec.test_fraction, seed)]


def prune_test(sl: Slice) -> Slice:
    """Drop test events on items unseen in training, then too-short test sessions."""
    catalog = {i for s in sl.train for i in s.items}
    test = []
    for s in sl.test:
        kept = [(i, t) for i, t in zip(s.items, s.times) if i in catalog]
        if len(kept) >= 2:
            items, times = zip(*kept)
            test.append(s.with_items(items, times))
    return replace(sl, test=test)


def make_validation_split(train: Sequence[Session], spec: SplitSpec, seed: int = 0) -> Slice:
    """Carve a validation train/test pair out of a training window."""
    if spec.mode == "random":
        return prune_test(random_split(train, spec.test_fraction, seed))
    return prune_test(single_split(train, spec.test_days))


def truncate_train(train: Sequence[Session], keep_days: float, test_start: int | None = None) -> list[Session]:
    """Keep only sessions starting within the last ``keep_days`` before the test window.

    Without ``test_start`` the window ends at the first day boundary after
    the last training event.
    """
    if keep_days <= 0:
        raise ValueError("keep_days must be positive")
    if not train:
        return []
    if test_start is None:
        test_start = (max(s.end_time for s in train) // DAY + 1) * DAY
    lo = test_start - keep_days * DAY
    return [s for s in train if s.start_time >= lo]


def write_slice_file(path, sessions: Sequence[Session], items: ItemIndex | None = None) -> None:
    """Cache format: ``session_id<TAB>item_id<TAB>epoch_seconds`` sorted by (session, ordinal)."""
    with Path(path).open("w") as fh:
        for s in sorted(sessions, key=lambda s: s.id):
            for i, t in zip(s.items, s.times):
                fh.write(f"{s.id}\t{items.raw(i) if items is not None else i}\t{t}\n")


def read_slice_file(path, items: ItemIndex) -> list[Session]:
    rows: dict[int, list[tuple[int, int]]] = defaultdict(list)
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
            rows[int(parts[0])].append((items.intern(parts[1]), int(parts[2])))
    out = []
    for sid in sorted(rows):
        items_, times = zip(*rows[sid])
        out.append(Session(sid, tuple(items_), tuple(times)))
    return out


def session_stats(sessions: Sequence[Session]) -> dict[str, float]:
    """Dataset characteristics in the layout of the usual dataset overview tables."""
    if not sessions:
        return {"actions": 0, "sessions": 0, "items": 0}
    n_actions = sum(len(s) for s in sessions)
    items = {i for s in sessions for i in s.items}
    span = (max(s.end_time for s in sessions) - min(s.start_time for s in sessions)) / DAY
    days = max(span, 1.0)
    return {
        "actions": n_actions,
        "sessions": len(sessions),
        "items": len(items),
        "timespan_days": span,
        "actions_per_session": n_actions / len(sessions),
        "unique_items_per_session": float(np.mean([len(set(s.items)) for s in sessions])),
        "actions_per_day": n_actions / days,
        "sessions_per_day": len(sessions) / days,
    }
