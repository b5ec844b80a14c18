"""Synthetic session data for tests, demos and the bundled smoke dataset."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .core import DAY, Session, make_rng

A, B, C = 0, 1, 2


def planted_transition_corpus(n_sessions: int = 500, n_items: int = 20, p_b: float = 0.9, seed: int = 0) -> list[Session]:
    """Sessions in which item A (id 0) is followed by B (id 1) with probability ``p_b``, else C (id 2).

    Other transitions are uniform over the remaining items. Half of the
    sessions start with A so the planted rule has plenty of support.
    """
    rng = make_rng(seed, "planted")
    others = np.arange(3, n_items)
    sessions = []
    for n in range(n_sessions):
        length = int(rng.integers(2, 7))
        items = [A if rng.random() < 0.5 else int(rng.choice(others))]
        while len(items) < length:
            if items[-1] == A:
                items.append(B if rng.random() < p_b else C)
            elif rng.random() < 0.25:
                items.append(A)
            else:
                items.append(int(rng.choice(others)))
        sessions.append(Session(n, tuple(items), tuple(range(n * 10, n * 10 + length)), start_time=n * 10))
    return sessions


def click_log(
    n_sessions: int = 1000,
    n_items: int = 200,
    days: int = 12,
    seed: int = 0,
    start: int = 1_400_000_000 - 1_400_000_000 % DAY,
) -> list[tuple[str, str, int]]:
    """``(session_key, item_key, epoch_seconds)`` rows of an e-commerce style click log.

    Item popularity is Zipf-like and each item has a few preferred
    successors, so sequence-aware methods have something to learn.
    """
    rng = make_rng(seed, "clicks")
    pop = 1.0 / np.arange(1, n_items + 1) ** 0.8
    pop /= pop.sum()
    succ = rng.integers(0, n_items, size=(n_items, 3))
    rows = []
    starts = np.sort(rng.integers(start, start + days * DAY, size=n_sessions))
    for n, t in enumerate(starts):
        length = int(min(2 + rng.geometric(0.3), 15))
        item = int(rng.choice(n_items, p=pop))
        t = int(t)
        for _ in range(length):
            rows.append((f"s{n}", f"i{item}", t))
            t += int(rng.integers(10, 300))
            item = int(succ[item, rng.integers(0, 3)]) if rng.random() < 0.7 else int(rng.choice(n_items, p=pop))
    return rows


def write_click_log(path, rows, header=("SessionId", "ItemId", "Time")) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def large_index_corpus(n_sessions: int = 100_000, n_items: int = 30_000, seed: int = 0) -> list[Session]:
    """Many short sessions over a Zipf catalog, for latency measurements."""
    rng = make_rng(seed, "large")
    lengths = np.minimum(2 + rng.geometric(0.35, size=n_sessions), 20)
    ranks = np.arange(1, n_items + 1)
    pop = 1.0 / ranks**0.9
    pop /= pop.sum()
    flat = rng.choice(n_items, size=int(lengths.sum()), p=pop)
    out, pos = [], 0
    for n, length in enumerate(lengths):
        items = tuple(int(i) for i in flat[pos : pos + length])
        pos += length
        out.append(Session(n, items, tuple(range(n * 100, n * 100 + int(length))), start_time=n * 100))
    return out
