"""Pairwise ranking losses with analytic gradients, and ADAGRAD.

All loss functions take the positive score ``r_pos`` and negative scores
``r_negs`` and return ``(loss, dloss/dr_pos, dloss/dr_negs)``. They accept a
leading batch axis: ``r_pos`` of shape ``(B,)`` with ``r_negs`` of shape
``(B, N)`` gives per-row losses and gradients.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core import log_sigmoid, sigmoid, softmax


class LossKind(str, enum.Enum):
    BPR = "bpr"
    TOP1 = "top1"
    BPR_MAX = "bpr_max"
    TOP1_MAX = "top1_max"


class TrainingError(RuntimeError):
    """Raised when training produces non-finite values."""


def _prep(r_pos, r_negs):
    r_pos = np.asarray(r_pos, dtype=np.float64)
    r_negs = np.asarray(r_negs, dtype=np.float64)
    if r_negs.shape[-1] == 0:
        raise ValueError("at least one negative score is required")
    return r_pos, r_negs


def _unbatch(scalar, loss, g_pos, g_negs):
    if scalar:
        return float(loss), float(g_pos), g_negs
    return loss, g_pos, g_negs


def loss_bpr(r_pos, r_negs):
    """-mean_j log sigmoid(r_pos - r_j)."""
    r_pos, r_negs = _prep(r_pos, r_negs)
    n = r_negs.shape[-1]
    diff = r_pos[..., None] - r_negs
    loss = -log_sigmoid(diff).mean(axis=-1)
    g = (1.0 - sigmoid(diff)) / n
    return _unbatch(r_pos.ndim == 0, loss, -g.sum(axis=-1), g)


def loss_top1(r_pos, r_negs):
    """mean_j [sigmoid(r_j - r_pos) + sigmoid(r_j ** 2)]."""
    r_pos, r_negs = _prep(r_pos, r_negs)
    n = r_negs.shape[-1]
    s_diff = sigmoid(r_negs - r_pos[..., None])
    s_reg = sigmoid(r_negs**2)
    loss = (s_diff + s_reg).mean(axis=-1)
    d_diff = s_diff * (1.0 - s_diff) / n
    g_negs = d_diff + s_reg * (1.0 - s_reg) * 2.0 * r_negs / n
    return _unbatch(r_pos.ndim == 0, loss, -d_diff.sum(axis=-1), g_negs)


_BASE = {LossKind.BPR: loss_bpr, LossKind.TOP1: loss_top1}


def loss_max(kind, r_pos, r_negs):
    """Base loss against the softmax-weighted aggregate of the negatives.

    The aggregate ``sum_j softmax(r_negs)_j * r_j`` is a differentiable
    stand-in for ``max_j r_j``; it equals the max for a single negative and
    tends to it as the top negative dominates.
    """
    kind = LossKind(kind)
    base = _BASE[{LossKind.BPR_MAX: LossKind.BPR, LossKind.TOP1_MAX: LossKind.TOP1}.get(kind, kind)]
    r_pos, r_negs = _prep(r_pos, r_negs)
    weights = softmax(r_negs, axis=-1)
    agg = (weights * r_negs).sum(axis=-1)
    loss, g_pos, g_agg = base(r_pos, agg[..., None])
    g_agg = np.asarray(g_agg)[..., 0]
    g_negs = g_agg[..., None] * weights * (1.0 + r_negs - agg[..., None])
    return loss, g_pos, g_negs


def ranking_loss(kind, r_pos, r_negs):
    """Dispatch on ``LossKind``."""
    kind = LossKind(kind)
    if kind in (LossKind.BPR, LossKind.TOP1):
        return _BASE[kind](r_pos, r_negs)
    return loss_max(kind, r_pos, r_negs)


@dataclass
class AdagradState:
    """Accumulated squared gradients for one parameter array."""

    shape: tuple
    lr: float = 0.05
    eps: float = 1e-6
    acc: np.ndarray = field(default=None)  # type: ignore[assignment]
    steps: int = 0

    def __post_init__(self):
        if self.acc is None:
            self.acc = np.zeros(self.shape)


def _check(grad, state: AdagradState):
    if not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite gradient at update step {state.steps}")


def adagrad_step(state: AdagradState, param: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Dense in-place update; returns ``param``."""
    grad = np.asarray(grad, dtype=np.float64)
    _check(grad, state)
    state.acc += grad * grad
    param -= state.lr * grad / (np.sqrt(state.acc) + state.eps)
    state.steps += 1
    return param


def adagrad_rows(state: AdagradState, param: np.ndarray, rows, grad: np.ndarray) -> np.ndarray:
    """Sparse update of selected rows; duplicate rows have their gradients summed first."""
    rows = np.asarray(rows, dtype=np.int64)
    grad = np.asarray(grad, dtype=np.float64)
    _check(grad, state)
    uniq, inverse = np.unique(rows, return_inverse=True)
    g = np.zeros((uniq.size,) + param.shape[1:])
    np.add.at(g, inverse, grad)
    state.acc[uniq] += g * g
    param[uniq] -= state.lr * g / (np.sqrt(state.acc[uniq]) + state.eps)
    state.steps += 1
    return param
