"""Single-layer GRU next-item model trained with session-parallel mini-batches.

Forward and backward passes are written out by hand. Training truncates
backpropagation to one step: the hidden state is carried forward between
mini-batches but treated as a constant. ``sequence_objective`` runs full
backpropagation through time over one sequence and exists for gradient
checking.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .core import EMPTY_RANKING, Recommender, Session, SessionState, make_rng, sigmoid
from .losses import AdagradState, LossKind, TrainingError, adagrad_rows, adagrad_step, ranking_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GruConfig:
    hidden: int = 100
    batch_size: int = 32
    epochs: int = 10
    loss: str = "bpr_max"
    lr: float = 0.1
    dropout: float = 0.0
    momentum: float = 0.0  # recorded, not applied
    n_extra_negatives: int = 128  # uniform negatives added to the in-batch ones
    seed: int = 42

    def __post_init__(self):
        if self.hidden < 1 or self.batch_size < 1:
            raise ValueError("hidden size and batch size must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        LossKind(self.loss)


class Batch(NamedTuple):
    lanes: np.ndarray
    inputs: np.ndarray
    targets: np.ndarray
    reset: np.ndarray


def session_parallel_batches(sessions: Sequence[Session], batch_size: int) -> Iterator[Batch]:
    """Feed sessions through ``batch_size`` parallel lanes.

    Each lane walks one session pair by pair. When its session is used up
    the lane takes the next unconsumed session and flags a hidden-state
    reset; once no sessions are left the lane retires and the batch shrinks.
    """
    queue = [s.items for s in sessions if len(s) >= 2]
    lanes: list[list | None] = [None] * batch_size
    nxt = 0
    for lane in range(batch_size):
        if nxt < len(queue):
            lanes[lane] = [queue[nxt], 0]
            nxt += 1
    while True:
        active = [n for n, lane in enumerate(lanes) if lane is not None]
        if not active:
            return
        ins = np.array([lanes[n][0][lanes[n][1]] for n in active], dtype=np.int64)
        outs = np.array([lanes[n][0][lanes[n][1] + 1] for n in active], dtype=np.int64)
        reset = np.array([lanes[n][1] == 0 for n in active])
        yield Batch(np.array(active, dtype=np.int64), ins, outs, reset)
        for n in active:
            items, cur = lanes[n]
            if cur + 2 < len(items):
                lanes[n][1] = cur + 1
            elif nxt < len(queue):
                lanes[n] = [queue[nxt], 0]
                nxt += 1
            else:
                lanes[n] = None


def init_params(n_items: int, hidden: int, rng) -> dict[str, np.ndarray]:
    def glorot(rows, cols, size):
        s = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-s, s, size=size)

    return {
        "Wx": glorot(n_items, hidden, (n_items, 3 * hidden)),
        "Uz": glorot(hidden, hidden, (hidden, hidden)),
        "Ur": glorot(hidden, hidden, (hidden, hidden)),
        "Uh": glorot(hidden, hidden, (hidden, hidden)),
        "b": np.zeros(3 * hidden),
        "O": glorot(n_items, hidden, (n_items, hidden)),
        "bo": np.zeros(n_items),
    }


def gru_step(params, h: np.ndarray, x, cache: bool = False):
    """One GRU update for a batch of inputs ``x`` (item ids) and states ``h``.

    ``z`` interpolates between the old state and the candidate state::

        h' = (1 - z) * h + z * tanh(Wx_h[x] + (r * h) @ Uh + b_h)
    """
    x = np.atleast_1d(x)
    h = np.atleast_2d(h)
    H = h.shape[1]
    gx = params["Wx"][x] + params["b"]
    z = sigmoid(gx[:, :H] + h @ params["Uz"])
    r = sigmoid(gx[:, H : 2 * H] + h @ params["Ur"])
    rh = r * h
    hc = np.tanh(gx[:, 2 * H :] + rh @ params["Uh"])
    out = (1.0 - z) * h + z * hc
    if cache:
        return out, (x, h, z, r, rh, hc)
    return out


def gru_step_backward(params, dout: np.ndarray, cache) -> tuple[dict, np.ndarray]:
    """Gradients of one step; returns (parameter grads, grad w.r.t. previous state)."""
    x, h, z, r, rh, hc = cache
    daz = dout * (hc - h) * z * (1.0 - z)
    dah = dout * z * (1.0 - hc * hc)
    drh = dah @ params["Uh"].T
    dar = drh * h * r * (1.0 - r)
    dgx = np.concatenate([daz, dar, dah], axis=1)
    grads = {
        "Wx": (x, dgx),
        "b": dgx.sum(axis=0),
        "Uz": h.T @ daz,
        "Ur": h.T @ dar,
        "Uh": rh.T @ dah,
    }
    dh = dout * (1.0 - z) + daz @ params["Uz"].T + dar @ params["Ur"].T + drh * r
    return grads, dh


def output_loss(params, hout: np.ndarray, columns: np.ndarray, loss: str):
    """Mean ranking loss where lane ``b``'s positive is column ``b`` and all other columns are negatives.

    Returns (loss, grads for O/bo, grad w.r.t. ``hout``).
    """
    B = hout.shape[0]
    Oc = params["O"][columns]
    S = hout @ Oc.T + params["bo"][columns]
    pos = S[np.arange(B), np.arange(B)]
    mask = np.ones_like(S, dtype=bool)
    mask[np.arange(B), np.arange(B)] = False
    negs = S[mask].reshape(B, S.shape[1] - 1)
    losses, gp, gn = ranking_loss(loss, pos, negs)
    dS = np.zeros_like(S)
    dS[np.arange(B), np.arange(B)] = gp
    dS[mask] = gn.ravel()
    dS /= B
    grads = {"O": (columns, dS.T @ hout), "bo": (columns, dS.sum(axis=0))}
    return float(np.mean(losses)), grads, dS @ Oc


def _accumulate(total: dict, grads: dict, shapes: dict) -> None:
    for name, g in grads.items():
        if name not in total:
            total[name] = np.zeros(shapes[name])
        if isinstance(g, tuple):
            np.add.at(total[name], g[0], g[1])
        else:
            total[name] += g


def sequence_objective(params, items: Sequence[int], negatives: Sequence[Sequence[int]], loss: str):
    """Summed loss over one sequence with full backpropagation through time.

    Step ``t`` reads ``items[t]`` and ranks ``items[t + 1]`` against
    ``negatives[t]``. Returns (loss, dense gradients).
    """
    shapes = {n: p.shape for n, p in params.items()}
    H = params["Uz"].shape[0]
    h = np.zeros((1, H))
    caches, douts, total = [], [], 0.0
    grads: dict[str, np.ndarray] = {}
    for t in range(len(items) - 1):
        h, cache = gru_step(params, h, [items[t]], cache=True)
        cols = np.concatenate(([items[t + 1]], np.asarray(negatives[t], dtype=np.int64)))
        step_loss, out_grads, dh = output_loss(params, h, cols, loss)
        total += step_loss
        _accumulate(grads, out_grads, shapes)
        caches.append(cache)
        douts.append(dh)
    carry = np.zeros((1, H))
    for cache, dh in zip(reversed(caches), reversed(douts)):
        step_grads, carry = gru_step_backward(params, dh + carry, cache)
        _accumulate(grads, step_grads, shapes)
    for name, shape in shapes.items():
        grads.setdefault(name, np.zeros(shape))
    return total, grads


class GRU4Rec(Recommender):
    """Session-parallel GRU recommender with in-batch negatives."""

    name = "gru4rec"

    def __init__(self, config: GruConfig | None = None, **overrides):
        base = config if config is not None else GruConfig()
        self.config = replace(base, **overrides) if overrides else base
        self.params: dict[str, np.ndarray] = {}
        self.loss_history: list[float] = []

    def _fit(self, sessions):
        cfg = self.config
        rng = make_rng(cfg.seed, self.name)
        self.params = init_params(self.n_items, cfg.hidden, rng)
        opt = {n: AdagradState(p.shape, lr=cfg.lr) for n, p in self.params.items()}
        usable = [s for s in sessions if len(s) >= 2]
        if not usable:
            raise ValueError("gru4rec: no training session with at least two events")
        cat = self._catalog_ids
        self.loss_history = []
        for epoch in range(cfg.epochs):
            state = np.zeros((cfg.batch_size, cfg.hidden))
            total, steps = 0.0, 0
            for batch in session_parallel_batches(usable, cfg.batch_size):
                h = state[batch.lanes]
                h[batch.reset] = 0.0
                hout, cache = gru_step(self.params, h, batch.inputs, cache=True)
                state[batch.lanes] = hout
                drop = None
                if cfg.dropout > 0:
                    drop = (rng.random(hout.shape) >= cfg.dropout) / (1.0 - cfg.dropout)
                    hout = hout * drop
                n_extra = cfg.n_extra_negatives or (1 if batch.lanes.size == 1 else 0)
                cols = batch.targets
                if n_extra:
                    cols = np.concatenate([cols, cat[rng.integers(0, cat.size, size=n_extra)]])
                loss, out_grads, dh = output_loss(self.params, hout, cols, cfg.loss)
                if drop is not None:
                    dh = dh * drop
                step_grads, _ = gru_step_backward(self.params, dh, cache)
                step_grads.update(out_grads)
                for name, g in step_grads.items():
                    if isinstance(g, tuple):
                        adagrad_rows(opt[name], self.params[name], g[0], g[1])
                    else:
                        adagrad_step(opt[name], self.params[name], g)
                total += loss
                steps += 1
            if not np.isfinite(total):
                raise TrainingError(f"gru4rec: non-finite loss in epoch {epoch}")
            self.loss_history.append(total / max(steps, 1))
            log.debug("gru4rec epoch %d loss %.5f", epoch, self.loss_history[-1])

    def hidden_state(self, prefix: Sequence[int]) -> np.ndarray:
        h = np.zeros((1, self.config.hidden))
        for item in prefix:
            if 0 <= item < self.n_items and self.catalog[item]:
                h = gru_step(self.params, h, [item])
            else:
                log.warning("gru4rec: skipping unknown item %r", item)
        return h[0]

    def scores_from_state(self, h: np.ndarray) -> np.ndarray:
        return self.params["O"] @ h + self.params["bo"]

    def rank(self, prefix, k):
        if len(prefix) == 0:
            raise ValueError("gru4rec: empty prefix")
        if k <= 0:
            return EMPTY_RANKING
        return self._top_dense(self.scores_from_state(self.hidden_state(prefix)), k)

    def new_session(self):
        return GruSessionState(self)

    def nbytes(self) -> int:
        return sum(p.nbytes for p in self.params.values())


class GruSessionState(SessionState):
    """Carries the hidden state across the events of one test session."""

    def __init__(self, model: GRU4Rec):
        super().__init__(model)
        self.reset()

    def reset(self) -> None:
        self.prefix = []
        self.h = np.zeros((1, self.model.config.hidden))

    def update(self, item):
        item = int(item)
        self.prefix.append(item)
        m = self.model
        if 0 <= item < m.n_items and m.catalog[item]:
            self.h = gru_step(m.params, self.h, [item])
        else:
            log.warning("gru4rec: skipping unknown item %r", item)

    def rank(self, k):
        if k <= 0 or not self.prefix:
            return EMPTY_RANKING
        return self.model._top_dense(self.model.scores_from_state(self.h[0]), k)
