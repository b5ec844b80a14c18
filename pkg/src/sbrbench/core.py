"""Shared domain types, item interning, ranking helpers and numerics."""

from __future__ import annotations

import sys
import zlib
from dataclasses import dataclass, field
from typing import Hashable, Iterable, NamedTuple, Sequence

import numpy as np

DAY = 86400


class ItemIndex:
    """Bidirectional mapping between raw item identifiers and dense ids.

    Dense ids are handed out in order of first appearance, so the ids always
    form the contiguous range ``[0, len(index))``.
    """

    def __init__(self, raw_ids: Iterable[Hashable] = ()):
        self._to_dense: dict[Hashable, int] = {}
        self._to_raw: list[Hashable] = []
        for raw in raw_ids:
            self.intern(raw)

    def intern(self, raw: Hashable) -> int:
        dense = self._to_dense.get(raw)
        if dense is None:
            dense = len(self._to_raw)
            self._to_dense[raw] = dense
            self._to_raw.append(raw)
        return dense

    def dense(self, raw: Hashable) -> int:
        return self._to_dense[raw]

    def raw(self, dense: int) -> Hashable:
        return self._to_raw[dense]

    def __contains__(self, raw) -> bool:
        return raw in self._to_dense

    def __len__(self) -> int:
        return len(self._to_raw)

    def raw_ids(self) -> list:
        return list(self._to_raw)


@dataclass(frozen=True)
class Event:
    item: int
    time: int
    ordinal: int


@dataclass(frozen=True)
class Session:
    """A time-ordered sequence of item interactions.

    ``items`` and ``times`` are parallel tuples. For playlist data without
    timestamps, ``times`` holds the 1-based ordinal and ``start_time`` the
    playlist's insertion index.
    """

    id: int
    items: tuple[int, ...]
    times: tuple[int, ...]
    start_time: int = field(default=None)  # type: ignore[assignment]
    key: str = ""

    def __post_init__(self):
        if len(self.items) == 0:
            raise ValueError(f"session {self.id} is empty")
        if len(self.items) != len(self.times):
            raise ValueError(f"session {self.id}: items/times length mismatch")
        if self.start_time is None:
            object.__setattr__(self, "start_time", int(min(self.times)))

    def __len__(self) -> int:
        return len(self.items)

    @property
    def end_time(self) -> int:
        return int(max(self.times))

    @property
    def events(self) -> list[Event]:
        return [Event(i, t, n) for n, (i, t) in enumerate(zip(self.items, self.times), start=1)]

    def with_items(self, items: Sequence[int], times: Sequence[int]) -> "Session":
        return Session(self.id, tuple(items), tuple(times), self.start_time, self.key)


def as_sessions(data: Iterable) -> list[Session]:
    """Coerce plain item sequences (or sessions) into ``Session`` objects.

    Plain sequences get ``id`` and ``start_time`` equal to their position, so
    later sequences count as more recent.
    """
    out = []
    for n, s in enumerate(data):
        if isinstance(s, Session):
            out.append(s)
        else:
            items = tuple(int(i) for i in s)
            out.append(Session(n, items, tuple(range(1, len(items) + 1)), start_time=n))
    return out


class Ranking(NamedTuple):
    """Top-k recommendation list: parallel arrays, best first."""

    items: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.items)

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(s) for i, s in zip(self.items, self.scores)}


EMPTY_RANKING = Ranking(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))


TIE_TOLERANCE = 1e-12


def top_k(items, scores, k: int, popularity: np.ndarray | None = None) -> Ranking:
    """Select the ``k`` best items with a total, deterministic order.

    Ties on score are broken by descending training popularity, then by
    ascending item id. Scores within a relative ``TIE_TOLERANCE`` of each
    other count as tied, so that values which are mathematically equal but
    were summed in a different order do not flip the ranking.
    """
    items = np.asarray(items, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if k <= 0 or items.size == 0:
        return EMPTY_RANKING
    if items.size > k:
        kth = np.partition(scores, items.size - k)[items.size - k]
        keep = scores >= kth - TIE_TOLERANCE * abs(kth)
        items, scores = items[keep], scores[keep]
    by_score = np.argsort(-scores, kind="stable")
    s = scores[by_score]
    gap = np.abs(np.diff(s)) > TIE_TOLERANCE * np.maximum(np.abs(s[:-1]), np.abs(s[1:]))
    group = np.empty(s.size, dtype=np.int64)
    group[by_score] = np.concatenate(([0], np.cumsum(gap)))
    pop = popularity[items] if popularity is not None else np.zeros(items.size)
    order = np.lexsort((items, -pop, group))[:k]
    return Ranking(items[order], scores[order])


def item_popularity(sessions: Iterable[Session], n_items: int) -> np.ndarray:
    """Number of training events per item."""
    counts = np.zeros(n_items, dtype=np.int64)
    for s in sessions:
        np.add.at(counts, np.fromiter(s.items, dtype=np.int64, count=len(s)), 1)
    return counts


class Recommender:
    """Common surface of every algorithm.

    Subclasses implement ``_fit`` and ``rank``. After ``fit`` the model exposes
    ``n_items``, ``popularity`` (event counts, used for tie-breaking) and
    ``catalog`` (boolean mask of items seen in training).
    """

    name = "base"

    def fit(self, sessions, n_items: int | None = None) -> "Recommender":
        sessions = as_sessions(sessions)
        if not sessions:
            raise ValueError(f"{self.name}: cannot fit on an empty training set")
        if n_items is None:
            n_items = 1 + max(max(s.items) for s in sessions)
        self.n_items = int(n_items)
        self.popularity = item_popularity(sessions, self.n_items)
        self.catalog = self.popularity > 0
        self._catalog_ids = np.flatnonzero(self.catalog)
        self._fit(sessions)
        return self

    def _fit(self, sessions: list[Session]) -> None:
        raise NotImplementedError

    def rank(self, prefix: Sequence[int], k: int) -> Ranking:
        raise NotImplementedError

    def new_session(self) -> "SessionState":
        """Incremental per-event state for a test session."""
        return SessionState(self)

    def _top_dense(self, scores: np.ndarray, k: int) -> Ranking:
        ids = self._catalog_ids
        return top_k(ids, scores[ids], k, self.popularity)

    def nbytes(self) -> int:
        """Approximate size of the fitted data structures."""
        return deep_nbytes(self.__dict__)


class SessionState:
    """Default incremental wrapper that re-ranks the growing prefix."""

    def __init__(self, model: Recommender):
        self.model = model
        self.prefix: list[int] = []

    def update(self, item: int) -> None:
        self.prefix.append(int(item))

    def rank(self, k: int) -> Ranking:
        return self.model.rank(self.prefix, k)


def deep_nbytes(obj, _seen=None) -> int:
    if _seen is None:
        _seen = set()
    if id(obj) in _seen:
        return 0
    _seen.add(id(obj))
    if isinstance(obj, np.ndarray):
        return obj.nbytes
    size = sys.getsizeof(obj)
    if isinstance(obj, dict):
        size += sum(deep_nbytes(k, _seen) + deep_nbytes(v, _seen) for k, v in obj.items())
    elif isinstance(obj, (list, tuple, set, frozenset)):
        size += sum(deep_nbytes(v, _seen) for v in obj)
    elif hasattr(obj, "__dict__") and not isinstance(obj, type):
        size += deep_nbytes(vars(obj), _seen)
    return size


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Counter-based (Philox) generator derived from a seed and stream keys.

    String keys are hashed with CRC32, so the stream for a given
    ``(seed, keys)`` pair is identical across runs and platforms.
    """
    spawn_key = tuple(zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in keys)
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))


def sigmoid(x):
    """Logistic function, stable over the whole float range."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def log_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = -np.logaddexp(0.0, -x)
    return out if out.ndim else float(out)


def softmax(scores, axis: int = -1) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("softmax of an empty vector")
    shifted = np.exp(scores - scores.max(axis=axis, keepdims=True))
    return shifted / shifted.sum(axis=axis, keepdims=True)
