"""Weighted evidential squared-error loss on Dirichlet expectations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ShapeMismatch

OCCUPIED_THRESHOLD = 0.5


@dataclass(frozen=True)
class LossConfig:
    occupied_weight: float = 3.0

    def __post_init__(self):
        if self.occupied_weight < 1:
            raise ValueError("occupied_weight must be >= 1")


def loss_and_grad(evidence, label, cfg: LossConfig = LossConfig(), need_grad: bool = True):
    """Mean per-cell loss and its gradient w.r.t. the evidence.

    ``evidence`` and ``label`` share a shape whose last axis is
    ``(free, occupied)``; ``label`` holds the true belief masses.
    """
    e = np.asarray(evidence)
    y = np.asarray(label, dtype=e.dtype)
    if e.shape != y.shape or e.shape[-1] != 2:
        raise ShapeMismatch(f"evidence {e.shape} vs label {y.shape}")
    alpha = e + 1.0
    s = alpha.sum(axis=-1, keepdims=True)
    p = alpha / s
    var = p * (1.0 - p) / (s + 1.0)
    per_cell = ((y - p) ** 2 + var).sum(axis=-1)
    weight = np.where(y[..., 1] > OCCUPIED_THRESHOLD, cfg.occupied_weight, 1.0).astype(e.dtype)
    n = per_cell.size
    loss = float((weight * per_cell).sum() / n)
    if not need_grad:
        return loss, None
    g_p = -2.0 * (y - p) + (1.0 - 2.0 * p) / (s + 1.0)
    g_s = -(p * (1.0 - p)).sum(axis=-1, keepdims=True) / (s + 1.0) ** 2
    g_alpha = (g_p - (g_p * p).sum(axis=-1, keepdims=True)) / s + g_s
    grad = g_alpha * (weight / n)[..., None]
    return loss, grad


def evidential_loss(pred, label, cfg: LossConfig = LossConfig()) -> float:
    """Loss for channel-first maps: ``pred`` evidence and ``label`` masses, shape (2, ...)."""
    pred = np.moveaxis(np.asarray(pred, dtype=np.float64), 0, -1)
    label = np.moveaxis(np.asarray(label, dtype=np.float64), 0, -1)
    return loss_and_grad(pred, label, cfg, need_grad=False)[0]
