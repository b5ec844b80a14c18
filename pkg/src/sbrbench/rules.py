"""Counting baselines that look only at the last item of a session.

``fit_ar`` counts co-occurrences, ``fit_mc`` direct successors and
``fit_sr`` later successors weighted by ``1 / distance``. Each builder makes
one pass over the training data and stores, per antecedent item, the
consequents pre-sorted by weight.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import EMPTY_RANKING, Ranking, Recommender, Session, as_sessions, item_popularity, top_k


def w_sr(steps: int) -> float:
    return 1.0 / steps


@dataclass
class RuleTable:
    """antecedent -> (consequents, weights) sorted best first, plus normalizers."""

    consequents: dict[int, np.ndarray]
    weights: dict[int, np.ndarray]
    norm: dict[int, float]

    def score(self, antecedent: int, consequent: int) -> float:
        """Normalized weight of a single rule (0 if absent)."""
        items = self.consequents.get(antecedent)
        if items is None:
            return 0.0
        hit = np.flatnonzero(items == consequent)
        return float(self.weights[antecedent][hit[0]]) / self.norm[antecedent] if hit.size else 0.0

    def n_rules(self) -> int:
        return sum(len(v) for v in self.consequents.values())


def _freeze(counts, norm, popularity) -> RuleTable:
    consequents, weights = {}, {}
    for a, row in counts.items():
        items = np.fromiter(row.keys(), dtype=np.int64, count=len(row))
        w = np.fromiter(row.values(), dtype=np.float64, count=len(row))
        ranked = top_k(items, w, len(items), popularity)
        consequents[a], weights[a] = ranked.items, ranked.scores
    # antecedents whose literal normalizer vanishes are left unnormalized
    norm = {a: (norm.get(a, 0.0) or 1.0) for a in consequents}
    return RuleTable(consequents, weights, norm)


def _prepare(train) -> tuple[list[Session], np.ndarray]:
    sessions = as_sessions(train)
    if not sessions:
        raise ValueError("cannot build rules from an empty training set")
    n_items = 1 + max(max(s.items) for s in sessions)
    return sessions, item_popularity(sessions, n_items)


def fit_ar(train, popularity: np.ndarray | None = None) -> RuleTable:
    """Co-occurrence rules between distinct positions of the same session.

    Self-rules (consequent equal to the antecedent) are not stored.
    """
    sessions, pop = _prepare(train)
    counts: dict[int, dict[int, float]] = defaultdict(lambda: defaultdict(float))
    norm: dict[int, float] = defaultdict(float)
    for s in sessions:
        items = s.items
        n = len(items)
        for x, a in enumerate(items):
            norm[a] += n - 1
            row = counts[a]
            for y, b in enumerate(items):
                if y != x and b != a:
                    row[b] += 1.0
    return _freeze(counts, norm, pop if popularity is None else popularity)


def fit_mc(train, popularity: np.ndarray | None = None) -> RuleTable:
    """First-order transition counts normalized into probabilities."""
    sessions, pop = _prepare(train)
    counts: dict[int, dict[int, float]] = defaultdict(lambda: defaultdict(float))
    norm: dict[int, float] = defaultdict(float)
    for s in sessions:
        for a, b in zip(s.items, s.items[1:]):
            norm[a] += 1.0
            counts[a][b] += 1.0
    return _freeze(counts, norm, pop if popularity is None else popularity)


def fit_sr(train, popularity: np.ndarray | None = None) -> RuleTable:
    """Sequential rules: every later item ``b`` after ``a`` adds ``1 / steps``.

    The normalizer follows the literal counting scheme: each occurrence of
    ``a`` at 1-based position ``x >= 2`` contributes ``x``.
    """
    sessions, pop = _prepare(train)
    counts: dict[int, dict[int, float]] = defaultdict(lambda: defaultdict(float))
    norm: dict[int, float] = defaultdict(float)
    for s in sessions:
        items = s.items
        for x in range(1, len(items)):
            b = items[x]
            norm[b] += x + 1
            for y in range(x):
                counts[items[y]][b] += w_sr(x - y)
    return _freeze(counts, norm, pop if popularity is None else popularity)


def rank_rules(table: RuleTable, prefix: Sequence[int], k: int) -> Ranking:
    """Top-k consequents of the prefix's last item."""
    if k <= 0 or len(prefix) == 0:
        return EMPTY_RANKING
    last = int(prefix[-1])
    items = table.consequents.get(last)
    if items is None:
        return EMPTY_RANKING
    return Ranking(items[:k], table.weights[last][:k] / table.norm[last])


class _RuleRecommender(Recommender):
    builder = staticmethod(fit_mc)

    def _fit(self, sessions):
        self.table = self.builder(sessions, self.popularity)

    def rank(self, prefix, k):
        return rank_rules(self.table, prefix, k)


class AssociationRules(_RuleRecommender):
    name = "ar"
    builder = staticmethod(fit_ar)


class MarkovChain(_RuleRecommender):
    name = "mc"
    builder = staticmethod(fit_mc)


class SequentialRules(_RuleRecommender):
    name = "sr"
    builder = staticmethod(fit_sr)
