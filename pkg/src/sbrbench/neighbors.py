"""Item-kNN and session-kNN variants over an inverted session index.

Training sessions are numbered by recency (rank 0 is the most recent
session), so every posting list in the inverted index is already ordered
most-recent-first and "the m most recent sessions sharing an item" is a
prefix of a sorted union.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import EMPTY_RANKING, Ranking, Recommender, Session, as_sessions, item_popularity, top_k

VARIANTS = ("sknn", "v_sknn", "s_sknn", "sf_sknn")


@dataclass(frozen=True)
class KnnConfig:
    k: int = 100
    m: int | None = 500
    variant: str = "sknn"
    exclude_seen: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown kNN variant {self.variant!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.m is not None and self.m < self.k:
            raise ValueError("sample size m must be >= k")


def _csr(rows: np.ndarray, cols: np.ndarray, n_rows: int):
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
    return indptr, cols


def _gather(indptr, indices, rows):
    """Concatenate CSR rows; also return each row's length."""
    starts = indptr[rows]
    lens = indptr[rows + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return indices[:0], lens
    offsets = np.repeat(starts - np.cumsum(lens) + lens, lens) + np.arange(total)
    return indices[offsets], lens


class SessionIndex:
    """Inverted index, per-session item sets, recency order and successor pairs.

    Attributes
    ----------
    session_ids : ndarray
        Original session id for each recency rank.
    start_time : ndarray
        Start time for each recency rank (non-increasing).
    sess_indptr, sess_items : ndarray
        CSR rows: distinct items of each session, by recency rank.
    item_indptr, item_sessions : ndarray
        CSR rows: recency ranks of sessions containing each item, ascending.
    succ_indptr, succ_items : ndarray
        CSR rows: items that directly followed each item somewhere in training.
    """

    def __init__(self, sessions: Sequence[Session], n_items: int | None = None):
        sessions = as_sessions(sessions)
        if not sessions:
            raise ValueError("cannot index an empty training set")
        if n_items is None:
            n_items = 1 + max(max(s.items) for s in sessions)
        self.n_items = int(n_items)
        # most recent first; later position wins ties on start time
        order = sorted(range(len(sessions)), key=lambda n: (-sessions[n].start_time, -n))
        self.n_sessions = len(order)
        self.session_ids = np.array([sessions[n].id for n in order], dtype=np.int64)
        self.start_time = np.array([sessions[n].start_time for n in order], dtype=np.int64)

        lens = np.array([len(sessions[n]) for n in order], dtype=np.int64)
        flat = np.fromiter((i for n in order for i in sessions[n].items), dtype=np.int64, count=int(lens.sum()))
        ranks = np.repeat(np.arange(self.n_sessions, dtype=np.int64), lens)
        pairs = np.unique(ranks * self.n_items + flat)
        ranks, items = pairs // self.n_items, pairs % self.n_items
        self.sess_indptr, self.sess_items = _csr(ranks, items, self.n_sessions)
        self.sess_len = np.diff(self.sess_indptr)
        self.item_indptr, self.item_sessions = _csr(items, ranks, self.n_items)
        self.item_count = np.diff(self.item_indptr)

        starts = np.cumsum(lens) - lens
        not_last = np.ones(flat.size, dtype=bool)
        not_last[starts + lens - 1] = False
        src = np.flatnonzero(not_last)
        succ = np.unique(flat[src] * self.n_items + flat[src + 1])
        self.succ_indptr, self.succ_items = _csr(succ // self.n_items, succ % self.n_items, self.n_items)

    def sessions_with(self, item: int) -> np.ndarray:
        return self.item_sessions[self.item_indptr[item] : self.item_indptr[item + 1]]

    def items_of(self, rank: int) -> np.ndarray:
        return self.sess_items[self.sess_indptr[rank] : self.sess_indptr[rank + 1]]

    def successors(self, item: int) -> np.ndarray:
        if not 0 <= item < self.n_items:
            return self.succ_items[:0]
        return self.succ_items[self.succ_indptr[item] : self.succ_indptr[item + 1]]

    def has_pair(self, a: int, b: int) -> bool:
        succ = self.successors(a)
        pos = np.searchsorted(succ, b)
        return bool(pos < succ.size and succ[pos] == b)

    def nbytes(self) -> int:
        return sum(v.nbytes for v in vars(self).values() if isinstance(v, np.ndarray))


def fit_index(train, n_items: int | None = None) -> SessionIndex:
    return SessionIndex(train, n_items)


def _distinct_by_last_position(prefix: Sequence[int], n_items: int):
    """Distinct known prefix items ordered by their last position, with that 1-based position."""
    last: dict[int, int] = {}
    for pos, item in enumerate(prefix, start=1):
        if 0 <= item < n_items:
            last.pop(item, None)
            last[item] = pos
    items = np.fromiter(last.keys(), dtype=np.int64, count=len(last))
    positions = np.fromiter(last.values(), dtype=np.int64, count=len(last))
    return items, positions


def _candidates(index: SessionIndex, items: np.ndarray, values: np.ndarray | None, m, reduce: str = "sum"):
    """Union of posting lists restricted to the m most recent, with per-session aggregates.

    ``values`` carries one number per prefix item; per candidate session
    these are summed (``reduce="sum"``) or maxed in posting order.
    """
    lists, lens = _gather(index.item_indptr, index.item_sessions, items)
    if lists.size == 0:
        return lists, np.empty(0)
    cand, inverse = np.unique(lists, return_inverse=True)
    vals = np.repeat(values if values is not None else np.ones(items.size), lens)
    if reduce == "sum":
        agg = np.bincount(inverse, weights=vals, minlength=cand.size)
    else:
        agg = np.zeros(cand.size)
        np.maximum.at(agg, inverse, vals)
    if m is not None and cand.size > m:
        cand, agg = cand[:m], agg[:m]
    return cand, agg


def sample_neighbors(index: SessionIndex, prefix: Sequence[int], m: int | None) -> np.ndarray:
    """Original ids of the ``m`` most recent training sessions sharing an item with the prefix."""
    items, _ = _distinct_by_last_position(prefix, index.n_items)
    cand, _ = _candidates(index, items, None, m)
    return index.session_ids[cand]


def cosine_binary(items1, items2) -> float:
    a, b = set(items1), set(items2)
    if not a or not b:
        return 0.0
    return len(a & b) / math.sqrt(len(a) * len(b))


def _nearest(cand: np.ndarray, sim: np.ndarray, k: int):
    order = np.lexsort((cand, -sim))[:k]
    return cand[order], sim[order]


def _score_items(index: SessionIndex, neighbors: np.ndarray, weights: np.ndarray):
    items, lens = _gather(index.sess_indptr, index.sess_items, neighbors)
    if items.size == 0:
        return items, np.empty(0)
    uniq, inverse = np.unique(items, return_inverse=True)
    return uniq, np.bincount(inverse, weights=np.repeat(weights, lens), minlength=uniq.size)


def _finish(index, uniq, scores, prefix_items, cfg: KnnConfig, k_items, popularity, allowed=None):
    keep = scores > 0
    if cfg.exclude_seen and prefix_items.size:
        keep &= ~np.isin(uniq, prefix_items)
    if allowed is not None:
        keep &= np.isin(uniq, allowed)
    return top_k(uniq[keep], scores[keep], k_items, popularity)


def rank_knn(index: SessionIndex, cfg: KnnConfig, prefix: Sequence[int], k_items: int, popularity=None) -> Ranking:
    """Score items from the ``cfg.k`` most similar of the sampled neighbor sessions."""
    if k_items <= 0:
        return EMPTY_RANKING
    items, positions = _distinct_by_last_position(prefix, index.n_items)
    if items.size == 0:
        return EMPTY_RANKING
    if cfg.variant == "v_sknn":
        # summing integer positions before the single division keeps equal similarities bitwise equal
        cand, pos_sum = _candidates(index, items, positions.astype(np.float64), cfg.m)
        sim = pos_sum / len(prefix)
    else:
        cand, overlap = _candidates(index, items, None, cfg.m)
        sim = overlap / np.sqrt(items.size * index.sess_len[cand])
    if cand.size == 0:
        return EMPTY_RANKING
    if cfg.variant == "s_sknn":
        cand_all, last_pos = _candidates(index, items, positions.astype(np.float64), cfg.m, reduce="max")
        neighbors, nsim = _nearest(cand, sim, cfg.k)
        lookup = np.searchsorted(cand_all, neighbors)
        weights = nsim * (last_pos[lookup] / len(prefix))
    else:
        neighbors, weights = _nearest(cand, sim, cfg.k)
    uniq, scores = _score_items(index, neighbors, weights)
    allowed = None
    if cfg.variant == "sf_sknn":
        last = int(prefix[-1])
        allowed = index.successors(last)
    return _finish(index, uniq, scores, items, cfg, k_items, popularity, allowed)


def rank_sknn(index, cfg, prefix, k_items, popularity=None):
    return rank_knn(index, KnnConfig(cfg.k, cfg.m, "sknn", cfg.exclude_seen), prefix, k_items, popularity)


def rank_vsknn(index, cfg, prefix, k_items, popularity=None):
    return rank_knn(index, KnnConfig(cfg.k, cfg.m, "v_sknn", cfg.exclude_seen), prefix, k_items, popularity)


def rank_ssknn(index, cfg, prefix, k_items, popularity=None):
    return rank_knn(index, KnnConfig(cfg.k, cfg.m, "s_sknn", cfg.exclude_seen), prefix, k_items, popularity)


def rank_sfsknn(index, cfg, prefix, k_items, popularity=None):
    return rank_knn(index, KnnConfig(cfg.k, cfg.m, "sf_sknn", cfg.exclude_seen), prefix, k_items, popularity)


def rank_iknn(index: SessionIndex, prefix: Sequence[int], k_items: int, popularity=None) -> Ranking:
    """Binary cosine between session-occurrence vectors of each item and the last prefix item."""
    if k_items <= 0 or len(prefix) == 0:
        return EMPTY_RANKING
    last = int(prefix[-1])
    if not 0 <= last < index.n_items or index.item_count[last] == 0:
        return EMPTY_RANKING
    items, _ = _gather(index.sess_indptr, index.sess_items, index.sessions_with(last))
    uniq, co = np.unique(items, return_counts=True)
    keep = uniq != last
    uniq, co = uniq[keep], co[keep]
    scores = co / np.sqrt(index.item_count[uniq] * index.item_count[last])
    return top_k(uniq, scores, k_items, popularity)


class ItemKNN(Recommender):
    name = "iknn"

    def _fit(self, sessions):
        self.index = SessionIndex(sessions, self.n_items)

    def rank(self, prefix, k):
        return rank_iknn(self.index, prefix, k, self.popularity)


class SessionKNN(Recommender):
    """Session-based kNN; ``variant`` selects plain, vector, sequential or filtered scoring."""

    name = "sknn"
    variant = "sknn"

    def __init__(self, k: int = 100, m: int | None = 500, exclude_seen: bool = True):
        self.config = KnnConfig(k, m, self.variant, exclude_seen)

    def _fit(self, sessions):
        self.index = SessionIndex(sessions, self.n_items)

    def rank(self, prefix, k):
        return rank_knn(self.index, self.config, prefix, k, self.popularity)


class VSKNN(SessionKNN):
    name = "vsknn"
    variant = "v_sknn"

    def __init__(self, k: int = 200, m: int | None = 2000, exclude_seen: bool = True):
        super().__init__(k, m, exclude_seen)


class SSKNN(SessionKNN):
    name = "ssknn"
    variant = "s_sknn"


class SFSKNN(SessionKNN):
    name = "sfsknn"
    variant = "sf_sknn"
