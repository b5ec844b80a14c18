"""Offline evaluation by iteratively revealing test sessions.

For every test session ``s`` and every prefix length ``n = 1 .. |s| - 1``
the model ranks items given ``s[:n]``. The next-item records (1-based rank
of ``s[n]``, or ``MISS``) feed HR and MRR; the distinct remaining items
``s[n:]`` feed precision and recall; the emitted lists feed coverage and
popularity bias.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import Recommender, Session

MISS = 0
DEFAULT_CUTOFFS = (1, 3, 5, 10, 20)
METRICS = ("HR", "MRR", "P", "R", "COV", "POP")


class PopularityTable:
    """Training event counts per item, min-max normalized to [0, 1].

    If all counts are equal every score is 0.
    """

    def __init__(self, counts: np.ndarray):
        self.counts = np.asarray(counts, dtype=np.int64)
        seen = self.counts[self.counts > 0]
        lo, hi = (seen.min(), seen.max()) if seen.size else (0, 0)
        self.scores = np.zeros(self.counts.size)
        if hi > lo:
            self.scores = np.clip((self.counts - lo) / (hi - lo), 0.0, 1.0)

    @classmethod
    def from_sessions(cls, sessions: Iterable[Session], n_items: int) -> "PopularityTable":
        counts = np.zeros(n_items, dtype=np.int64)
        for s in sessions:
            np.add.at(counts, list(s.items), 1)
        return cls(counts)


@dataclass
class EvalReport:
    """Metric values keyed by ``"HR@20"`` style names, plus raw records and timings."""

    metrics: dict[str, float] = field(default_factory=dict)
    ranks: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    session_mrr: np.ndarray = field(default_factory=lambda: np.empty(0))
    fit_seconds: float = 0.0
    predict_ms: list[float] = field(default_factory=list)
    memory_bytes: int = 0

    def __getitem__(self, key: str) -> float:
        return self.metrics[key]

    def timing(self) -> dict[str, float]:
        pm = np.asarray(self.predict_ms) if len(self.predict_ms) else np.zeros(1)
        return {
            "fit_seconds": self.fit_seconds,
            "predict_ms_mean": float(pm.mean()),
            "predict_ms_median": float(np.median(pm)),
            "predict_ms_p95": float(np.percentile(pm, 95)),
            "predict_ms_max": float(pm.max()),
            "memory_bytes": float(self.memory_bytes),
        }


def rank_of(items: np.ndarray, target: int) -> int:
    hit = np.flatnonzero(items == target)
    return int(hit[0]) + 1 if hit.size else MISS


def next_item_eval(model: Recommender, sessions: Sequence[Session], cutoffs=DEFAULT_CUTOFFS) -> np.ndarray:
    """1-based rank of each revealed next item within the top ``max(cutoffs)`` (``MISS`` if absent)."""
    k = max(cutoffs)
    out = []
    for s in sessions:
        state = model.new_session()
        for n in range(len(s) - 1):
            state.update(s.items[n])
            out.append(rank_of(state.rank(k).items, s.items[n + 1]))
    return np.asarray(out, dtype=np.int64)


def hr_mrr(ranks, k: int) -> tuple[float, float]:
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("no prediction records")
    hit = (ranks != MISS) & (ranks <= k)
    rr = np.where(hit, 1.0 / np.where(hit, ranks, 1), 0.0)
    return float(hit.mean()), float(rr.mean())


def precision_recall(recommended: np.ndarray, relevant: set, k: int) -> tuple[float, float]:
    hits = len(set(recommended[:k].tolist()) & relevant)
    return hits / k, hits / len(relevant)


def remaining_items_eval(model: Recommender, sessions: Sequence[Session], k: int) -> tuple[float, float]:
    """Precision@k and recall@k against all distinct items still to come in the session."""
    ps, rs = [], []
    for s in sessions:
        state = model.new_session()
        for n in range(len(s) - 1):
            state.update(s.items[n])
            p, r = precision_recall(state.rank(k).items, set(s.items[n + 1 :]), k)
            ps.append(p)
            rs.append(r)
    return float(np.mean(ps)), float(np.mean(rs))


def coverage(lists: Iterable[Sequence[int]], catalog_size: int) -> float:
    if catalog_size <= 0:
        return 0.0
    seen: set[int] = set()
    for lst in lists:
        seen.update(int(i) for i in lst)
    return len(seen) / catalog_size


def popularity_bias(lists: Iterable[Sequence[int]], table: PopularityTable) -> float:
    total, n = 0.0, 0
    for lst in lists:
        idx = np.asarray(lst, dtype=np.int64)
        total += float(table.scores[idx].sum())
        n += idx.size
    return total / n if n else 0.0


def evaluate(
    model: Recommender,
    sessions: Sequence[Session],
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    popularity: PopularityTable | None = None,
    catalog_size: int | None = None,
) -> EvalReport:
    """Single pass over all prediction points computing every metric at every cutoff."""
    cutoffs = sorted(cutoffs)
    kmax = cutoffs[-1]
    if popularity is None:
        popularity = PopularityTable(model.popularity)
    if catalog_size is None:
        catalog_size = int(np.count_nonzero(model.catalog))
    ranks, session_mrr, latencies = [], [], []
    hits = {k: 0 for k in cutoffs}
    prec = {k: 0.0 for k in cutoffs}
    rec = {k: 0.0 for k in cutoffs}
    pop_sum = {k: 0.0 for k in cutoffs}
    pop_n = {k: 0 for k in cutoffs}
    covered = {k: np.zeros(model.n_items, dtype=bool) for k in cutoffs}
    for s in sessions:
        state = model.new_session()
        rr = []
        for n in range(len(s) - 1):
            state.update(s.items[n])
            t0 = time.perf_counter()
            recs = state.rank(kmax).items
            latencies.append((time.perf_counter() - t0) * 1000.0)
            target = s.items[n + 1]
            r = rank_of(recs, target)
            ranks.append(r)
            rr.append(1.0 / r if r != MISS else 0.0)
            relevant = set(s.items[n + 1 :])
            for k in cutoffs:
                top = recs[:k]
                h = len(relevant.intersection(top.tolist()))
                prec[k] += h / k
                rec[k] += h / len(relevant)
                pop_sum[k] += float(popularity.scores[top].sum())
                pop_n[k] += top.size
                covered[k][top] = True
        session_mrr.append(float(np.mean(rr)) if rr else 0.0)
    ranks = np.asarray(ranks, dtype=np.int64)
    n_points = max(ranks.size, 1)
    metrics = {}
    for k in cutoffs:
        if ranks.size:
            metrics[f"HR@{k}"], metrics[f"MRR@{k}"] = hr_mrr(ranks, k)
        else:
            metrics[f"HR@{k}"] = metrics[f"MRR@{k}"] = 0.0
        metrics[f"P@{k}"] = prec[k] / n_points
        metrics[f"R@{k}"] = rec[k] / n_points
        metrics[f"COV@{k}"] = int(covered[k].sum()) / catalog_size if catalog_size else 0.0
        metrics[f"POP@{k}"] = pop_sum[k] / pop_n[k] if pop_n[k] else 0.0
    return EvalReport(metrics, ranks, np.asarray(session_mrr), predict_ms=latencies)


def aggregate_slices(reports: Sequence[EvalReport]) -> EvalReport:
    """Unweighted mean of every metric across slices."""
    if not reports:
        raise ValueError("no slice reports to aggregate")
    keys = list(reports[0].metrics)
    metrics = {key: float(np.mean([r.metrics[key] for r in reports])) for key in keys}
    return EvalReport(
        metrics,
        np.concatenate([r.ranks for r in reports]),
        np.concatenate([r.session_mrr for r in reports]),
        fit_seconds=float(np.mean([r.fit_seconds for r in reports])),
        predict_ms=[t for r in reports for t in r.predict_ms],
        memory_bytes=max(r.memory_bytes for r in reports),
    )


# -- significance ---------------------------------------------------------


def _signed_ranks(a, b):
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    d = d[d != 0]
    absd = np.abs(d)
    order = np.argsort(absd, kind="mergesort")
    ranks = np.empty(d.size)
    sorted_abs = absd[order]
    i = 0
    while i < d.size:
        j = i
        while j + 1 < d.size and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return d, ranks


def _exact_tail_probs(ranks: np.ndarray, w_plus: float) -> tuple[float, float]:
    """P(W+ <= w) and P(W+ >= w) under random signs, by dynamic programming over doubled ranks."""
    doubled = np.rint(2 * ranks).astype(np.int64)
    total = int(doubled.sum())
    dist = np.zeros(total + 1)
    dist[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[: dist.size - r]
        dist = 0.5 * dist + 0.5 * shifted
    w = int(round(2 * w_plus))
    return float(dist[: w + 1].sum()), float(dist[w:].sum())


def wilcoxon_signed_rank(a, b, alpha: float = 0.05) -> tuple[float, float, bool]:
    """Two-sided paired Wilcoxon signed-rank test.

    Zero differences are dropped and tied magnitudes share their average
    rank. The p-value is exact for up to 25 non-zero differences and uses
    the tie-corrected normal approximation with continuity correction
    beyond that. Returns ``(min(W+, W-), p_value, p_value < alpha)``.
    """
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    d, ranks = _signed_ranks(a, b)
    n = d.size
    if n < 6:
        raise ValueError(f"need at least 6 non-zero differences, got {n}")
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)
    if n <= 25:
        lo, hi = _exact_tail_probs(ranks, w_plus)
        p = min(1.0, 2.0 * min(lo, hi))
    else:
        mean = n * (n + 1) / 4.0
        _, counts = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(counts**3 - counts)) / 48.0
        z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
        p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return stat, p, p < alpha
