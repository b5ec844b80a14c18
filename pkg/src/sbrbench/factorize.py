"""Latent-factor models adapted to anonymous sessions.

Every training session plays the role of a user. Each model supplies three
pieces to the shared SGD loop in :class:`FactorModel`:

* ``_examples`` - the deterministic list of training examples,
* ``_draw`` - per-visit randomization of an example (dropout, skipping),
* ``_loss_grad`` - loss and sparse gradients for one example and a fixed
  set of negatives, regularization included.

``objective`` sums ``_loss_grad`` into dense gradients, which is what the
finite-difference checks compare against.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import EMPTY_RANKING, Recommender, make_rng, sigmoid
from .losses import AdagradState, LossKind, TrainingError, adagrad_rows, adagrad_step, ranking_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FactorModelConfig:
    d: int = 100
    epochs: int = 10
    lr: float = 0.05
    reg: float = 1e-4
    n_negatives: int = 1
    loss: str = "bpr"
    init_scale: float = 0.05
    optimizer: str = "sgd"
    seed: int = 42
    dropout: float = 0.0
    skip: float = 0.0
    alpha: float = 0.5
    momentum: float = 0.0  # recorded, not applied

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not (0 <= self.dropout < 1 and 0 <= self.skip < 1):
            raise ValueError("dropout and skip must lie in [0, 1)")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.optimizer not in ("sgd", "adagrad"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        LossKind(self.loss)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


Grad = tuple  # (param name, rows or None, gradient)


class FactorModel(Recommender):
    """Shared training loop for the latent-factor models."""

    defaults = FactorModelConfig()
    param_names: tuple[str, ...] = ()

    def __init__(self, config: FactorModelConfig | None = None, **overrides):
        base = config if config is not None else self.defaults
        self.config = replace(base, **overrides) if overrides else base
        self.params: dict[str, np.ndarray] = {}
        self.loss_history: list[float] = []

    # -- hooks ---------------------------------------------------------
    def _shapes(self, n_sessions: int) -> dict[str, tuple]:
        raise NotImplementedError

    def _examples(self, sessions) -> list[tuple]:
        raise NotImplementedError

    def _draw(self, example: tuple, rng) -> tuple:
        return example

    def _positive(self, example: tuple) -> int:
        return example[-1]

    def _loss_grad(self, example: tuple, negs: np.ndarray) -> tuple[float, list[Grad]]:
        raise NotImplementedError

    def scores(self, prefix: Sequence[int]) -> np.ndarray:
        raise NotImplementedError

    # -- training ------------------------------------------------------
    def init_params(self, n_sessions: int, rng) -> None:
        s = self.config.init_scale
        self.params = {
            name: rng.uniform(-s, s, size=shape) for name, shape in self._shapes(n_sessions).items()
        }

    def _fit(self, sessions):
        cfg = self.config
        rng = make_rng(cfg.seed, self.name)
        self.init_params(len(sessions), rng)
        examples = self._examples(sessions)
        self.n_examples = len(examples)
        opt = {}
        if cfg.optimizer == "adagrad":
            opt = {n: AdagradState(p.shape, lr=cfg.lr) for n, p in self.params.items()}
        probe = [int(sessions[0].items[0])]
        self.loss_history = []
        for epoch in range(cfg.epochs):
            total = 0.0
            for idx in rng.permutation(len(examples)):
                ex = self._draw(examples[idx], rng)
                negs = self._sample_negatives(self._positive(ex), rng)
                loss, grads = self._loss_grad(ex, negs)
                total += loss
                self._apply(grads, opt)
            if not np.isfinite(total):
                raise TrainingError(f"{self.name}: non-finite loss in epoch {epoch}")
            if not np.all(np.isfinite(self.scores(probe))):
                raise TrainingError(f"{self.name}: non-finite predictions after epoch {epoch}")
            self.loss_history.append(total / max(len(examples), 1))
            log.debug("%s epoch %d loss %.5f", self.name, epoch, self.loss_history[-1])

    def _sample_negatives(self, positive: int, rng) -> np.ndarray:
        # uniform over the training catalog, excluding the positive
        n = self.config.n_negatives
        cat = self._catalog_ids
        if cat.size < 2:
            return cat[:0]
        draws = rng.integers(0, cat.size - 1, size=n)
        pos_idx = np.searchsorted(cat, positive)
        draws = draws + (draws >= pos_idx)
        return cat[draws]

    def _apply(self, grads: list[Grad], opt: dict) -> None:
        lr = self.config.lr
        for name, rows, g in grads:
            param = self.params[name]
            if opt:
                if rows is None:
                    adagrad_step(opt[name], param, g)
                else:
                    adagrad_rows(opt[name], param, np.atleast_1d(rows), np.reshape(g, (-1,) + param.shape[1:]))
            elif rows is None:
                param -= lr * g
            else:
                np.add.at(param, rows, -lr * np.asarray(g))

    # -- prediction ----------------------------------------------------
    def _known(self, prefix: Sequence[int]) -> list[int]:
        return [int(i) for i in prefix if 0 <= i < self.n_items and self.catalog[i]]

    def rank(self, prefix, k):
        if len(prefix) == 0:
            raise ValueError(f"{self.name}: empty prefix")
        if k <= 0 or not self._known(prefix):
            return EMPTY_RANKING
        return self._top_dense(self.scores(prefix), k)

    def objective(self, batch: list[tuple[tuple, Sequence[int]]]) -> tuple[float, dict[str, np.ndarray]]:
        """Total loss and dense gradients for explicit (example, negatives) pairs."""
        dense = {n: np.zeros_like(p) for n, p in self.params.items()}
        total = 0.0
        for ex, negs in batch:
            loss, grads = self._loss_grad(ex, np.asarray(negs, dtype=np.int64))
            total += loss
            for name, rows, g in grads:
                if rows is None:
                    dense[name] += g
                else:
                    np.add.at(dense[name], rows, g)
        return total, dense

    def nbytes(self) -> int:
        return sum(p.nbytes for p in self.params.values())


def _l2(reg: float, *arrays) -> float:
    return reg * sum(float(np.sum(a * a)) for a in arrays)


def _distinct(items) -> np.ndarray:
    return np.array(list(dict.fromkeys(int(i) for i in items)), dtype=np.int64)


class BPRMF(FactorModel):
    """Matrix factorization with BPR; sessions act as users.

    At prediction time the user vector is the mean of the item vectors of
    the session so far.
    """

    name = "bprmf"
    param_names = ("W", "H")

    def _shapes(self, n_sessions):
        return {"W": (n_sessions, self.config.d), "H": (self.n_items, self.config.d)}

    def _examples(self, sessions):
        return [(u, int(i)) for u, s in enumerate(sessions) for i in _distinct(s.items)]

    def _loss_grad(self, ex, negs):
        u, i = ex
        W, H = self.params["W"], self.params["H"]
        wu, hi, hj = W[u], H[i], H[negs]
        loss, gp, gn = ranking_loss(self.config.loss, wu @ hi, hj @ wu)
        reg = self.config.reg
        loss += _l2(reg, wu, hi, hj)
        return loss, [
            ("W", u, gp * hi + gn @ hj + 2 * reg * wu),
            ("H", i, gp * wu + 2 * reg * hi),
            ("H", negs, gn[:, None] * wu + 2 * reg * hj),
        ]

    def user_vector(self, prefix):
        return self.params["H"][self._known(prefix)].mean(axis=0)

    def scores(self, prefix):
        return self.params["H"] @ self.user_vector(prefix)


class FPMC(FactorModel):
    """Factorized personalized Markov chain with baskets of one item.

    Score of item ``i`` for user ``u`` after item ``l``::

        <VUI[u], VIU[i]> + <VIL[i], VLI[l]> + <VUL[u], VLU[l]>

    Test sessions are unseen users; their ``VUI``/``VUL`` rows are replaced
    by the mean ``VIU``/``VLU`` rows of the prefix items.
    """

    name = "fpmc"
    param_names = ("VUI", "VIU", "VIL", "VLI", "VUL", "VLU")

    def _shapes(self, n_sessions):
        d, n = self.config.d, self.n_items
        return {
            "VUI": (n_sessions, d), "VIU": (n, d), "VIL": (n, d),
            "VLI": (n, d), "VUL": (n_sessions, d), "VLU": (n, d),
        }

    def _examples(self, sessions):
        return [
            (u, int(s.items[t - 1]), int(s.items[t])) for u, s in enumerate(sessions) for t in range(1, len(s))
        ]

    def _loss_grad(self, ex, negs):
        u, l, i = ex
        p = self.params
        cands = np.concatenate(([i], negs))
        vui, vul, vli, vlu = p["VUI"][u], p["VUL"][u], p["VLI"][l], p["VLU"][l]
        viu, vil = p["VIU"][cands], p["VIL"][cands]
        r = viu @ vui + vil @ vli + vul @ vlu
        loss, gp, gn = ranking_loss(self.config.loss, r[0], r[1:])
        g = np.concatenate(([gp], gn))
        gs = g.sum()
        reg = self.config.reg
        loss += _l2(reg, vui, vul, vli, vlu, viu, vil)
        return loss, [
            ("VUI", u, g @ viu + 2 * reg * vui),
            ("VIU", cands, g[:, None] * vui + 2 * reg * viu),
            ("VIL", cands, g[:, None] * vli + 2 * reg * vil),
            ("VLI", l, g @ vil + 2 * reg * vli),
            ("VUL", u, gs * vlu + 2 * reg * vul),
            ("VLU", l, gs * vul + 2 * reg * vlu),
        ]

    def scores(self, prefix):
        p = self.params
        known = self._known(prefix)
        l = known[-1]
        u_ui = p["VIU"][known].mean(axis=0)
        u_ul = p["VLU"][known].mean(axis=0)
        return p["VIU"] @ u_ui + p["VIL"] @ p["VLI"][l] + float(u_ul @ p["VLU"][l])


def _context_sums(P: np.ndarray, ctx: np.ndarray, cands: np.ndarray, alpha: float):
    """Per-candidate context sum and normalizer, leaving the candidate out of its own context."""
    total = P[ctx].sum(axis=0)
    in_ctx = np.isin(cands, ctx)
    sums = total[None, :] - in_ctx[:, None] * P[cands]
    counts = ctx.size - in_ctx
    norm = np.zeros(cands.size)
    pos = counts > 0
    norm[pos] = counts[pos].astype(np.float64) ** -alpha
    return sums, norm, in_ctx


def _context_grad(g, norm, in_ctx, Q_c, ctx, cands):
    """Gradient rows for the context matrix from candidate coefficients."""
    coef = (g * norm)[:, None] * Q_c
    rows = [ctx, cands[in_ctx]]
    vals = [np.broadcast_to(coef.sum(axis=0), (ctx.size, coef.shape[1])), -coef[in_ctx]]
    return np.concatenate(rows), np.concatenate(vals)


class FISM(FactorModel):
    """Factored item similarity: ``b_i + n^-alpha * sum_{j in ctx} <p_j, q_i>``.

    The context is the set of distinct session items other than the scored
    item; ``n`` is its size. There is no user bias for anonymous sessions.
    """

    name = "fism"
    param_names = ("P", "Q", "b")

    def _shapes(self, n_sessions):
        d, n = self.config.d, self.n_items
        return {"P": (n, d), "Q": (n, d), "b": (n,)}

    def _examples(self, sessions):
        out = []
        for s in sessions:
            ctx = _distinct(s.items)
            if ctx.size >= 2:
                out.extend((ctx, int(i)) for i in ctx)
        return out

    def _loss_grad(self, ex, negs):
        ctx, i = ex
        P, Q, b = self.params["P"], self.params["Q"], self.params["b"]
        cands = np.concatenate(([i], negs))
        sums, norm, in_ctx = _context_sums(P, ctx, cands, self.config.alpha)
        Qc = Q[cands]
        r = b[cands] + norm * np.einsum("ij,ij->i", sums, Qc)
        loss, gp, gn = ranking_loss(self.config.loss, r[0], r[1:])
        g = np.concatenate(([gp], gn))
        reg = self.config.reg
        loss += _l2(reg, P[ctx], Qc, b[cands])
        p_rows, p_vals = _context_grad(g, norm, in_ctx, Qc, ctx, cands)
        return loss, [
            ("b", cands, g + 2 * reg * b[cands]),
            ("Q", cands, (g * norm)[:, None] * sums + 2 * reg * Qc),
            ("P", p_rows, p_vals),
            ("P", ctx, 2 * reg * P[ctx]),
        ]

    def _long_term(self, prefix):
        P, Q = self.params["P"], self.params["Q"]
        ctx = _distinct(self._known(prefix))
        cands = np.arange(self.n_items)
        sums, norm, _ = _context_sums(P, ctx, cands, self.config.alpha)
        return norm * np.einsum("ij,ij->i", sums, Q)

    def scores(self, prefix):
        return self.params["b"] + self._long_term(prefix)


class FOSSIL(FISM):
    """FISM plus a factorized first-order Markov chain weighted by ``w + w_u``.

    Training examples are (session, prefix, last item, next item); ``w_u``
    is learned per training session and taken as 0 for unseen sessions.
    """

    name = "fossil"
    param_names = ("P", "Q", "N", "M", "w", "wu")

    def _shapes(self, n_sessions):
        d, n = self.config.d, self.n_items
        return {"P": (n, d), "Q": (n, d), "N": (n, d), "M": (n, d), "w": (1,), "wu": (n_sessions,)}

    def _examples(self, sessions):
        return [
            (u, _distinct(s.items[:t]), int(s.items[t - 1]), int(s.items[t]))
            for u, s in enumerate(sessions)
            for t in range(1, len(s))
        ]

    def _loss_grad(self, ex, negs):
        u, ctx, l, i = ex
        p = self.params
        P, Q, N, M = p["P"], p["Q"], p["N"], p["M"]
        cands = np.concatenate(([i], negs))
        sums, norm, in_ctx = _context_sums(P, ctx, cands, self.config.alpha)
        Qc, Mc, nl = Q[cands], M[cands], N[l]
        weight = p["w"][0] + p["wu"][u]
        seq = Mc @ nl
        r = norm * np.einsum("ij,ij->i", sums, Qc) + weight * seq
        loss, gp, gn = ranking_loss(self.config.loss, r[0], r[1:])
        g = np.concatenate(([gp], gn))
        reg = self.config.reg
        loss += _l2(reg, P[ctx], Qc, Mc, nl, p["w"], p["wu"][u])
        gw = float(g @ seq)
        p_rows, p_vals = _context_grad(g, norm, in_ctx, Qc, ctx, cands)
        return loss, [
            ("Q", cands, (g * norm)[:, None] * sums + 2 * reg * Qc),
            ("P", p_rows, p_vals),
            ("P", ctx, 2 * reg * P[ctx]),
            ("M", cands, (g * weight)[:, None] * nl + 2 * reg * Mc),
            ("N", l, weight * (g @ Mc) + 2 * reg * nl),
            ("w", None, np.array([gw]) + 2 * reg * p["w"]),
            ("wu", u, gw + 2 * reg * p["wu"][u]),
        ]

    def scores(self, prefix):
        p = self.params
        l = self._known(prefix)[-1]
        return self._long_term(prefix) + p["w"][0] * (p["M"] @ p["N"][l])


class SMF(FactorModel):
    """Session-based matrix factorization.

    The session embedding is the sum of the ``E`` rows of the distinct
    session items (``E`` is the transposed session transformation matrix).
    The score mixes session preference and sequential dynamics with a
    per-item weight ``sigmoid(omega_i)``::

        w_i * (<s_e, q_i> + b1_i) + (1 - w_i) * (<n_l, m_i> + b2_i)

    Training uses ADAGRAD, session-vector dropout and a skip rate that
    sometimes targets the item after next.
    """

    name = "smf"
    defaults = FactorModelConfig(
        d=100, epochs=10, lr=0.05, reg=0.0, n_negatives=128, loss="bpr_max",
        optimizer="adagrad", dropout=0.1, skip=0.0,
    )
    param_names = ("E", "Q", "N", "M", "b1", "b2", "omega")

    def _shapes(self, n_sessions):
        d, n = self.config.d, self.n_items
        return {
            "E": (n, d), "Q": (n, d), "N": (n, d), "M": (n, d),
            "b1": (n,), "b2": (n,), "omega": (n,),
        }

    def _examples(self, sessions):
        # (prefix items, last item, next item, item after next or -1)
        out = []
        for s in sessions:
            it = s.items
            for t in range(1, len(s)):
                after = int(it[t + 1]) if t + 1 < len(s) else -1
                out.append((_distinct(it[:t]), int(it[t - 1]), int(it[t]), after))
        return out

    def _draw(self, ex, rng):
        ctx, l, nxt, after = ex
        cfg = self.config
        if cfg.dropout > 0:
            ctx = ctx[rng.random(ctx.size) >= cfg.dropout]
        target = nxt
        if cfg.skip > 0 and rng.random() < cfg.skip and after >= 0:
            target = after
        return (ctx, l, target)

    def _positive(self, ex):
        return ex[2]

    def embed(self, ctx: np.ndarray) -> np.ndarray:
        return self.params["E"][ctx].sum(axis=0)

    def _loss_grad(self, ex, negs):
        ctx, l, i = ex[:3]
        p = self.params
        cands = np.concatenate(([i], negs))
        se = self.embed(ctx)
        Qc, Mc, nl = p["Q"][cands], p["M"][cands], p["N"][l]
        wgt = sigmoid(p["omega"][cands])
        pref = Qc @ se + p["b1"][cands]
        seq = Mc @ nl + p["b2"][cands]
        r = wgt * pref + (1 - wgt) * seq
        loss, gp, gn = ranking_loss(self.config.loss, r[0], r[1:])
        g = np.concatenate(([gp], gn))
        reg = self.config.reg
        gw, gs = g * wgt, g * (1 - wgt)
        grads = [
            ("omega", cands, g * wgt * (1 - wgt) * (pref - seq)),
            ("Q", cands, gw[:, None] * se),
            ("b1", cands, gw),
            ("M", cands, gs[:, None] * nl),
            ("b2", cands, gs),
            ("N", l, gs @ Mc),
        ]
        if ctx.size:
            grads.append(("E", ctx, np.broadcast_to(gw @ Qc, (ctx.size, se.size))))
        if reg:
            loss += _l2(reg, Qc, Mc, nl, p["E"][ctx])
            grads += [
                ("Q", cands, 2 * reg * Qc), ("M", cands, 2 * reg * Mc),
                ("N", l, 2 * reg * nl), ("E", ctx, 2 * reg * p["E"][ctx]),
            ]
        return loss, grads

    def embed_session(self, prefix) -> np.ndarray:
        known = self._known(prefix)
        if not known:
            raise ValueError("smf: empty prefix")
        return self.embed(_distinct(known))

    def scores(self, prefix):
        p = self.params
        se = self.embed_session(prefix)
        l = self._known(prefix)[-1]
        wgt = sigmoid(p["omega"])
        return wgt * (p["Q"] @ se + p["b1"]) + (1 - wgt) * (p["M"] @ p["N"][l] + p["b2"])
