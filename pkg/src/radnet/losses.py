"""Composite training loss: segmentation (BCE minus Dice) plus masked MSE.

The presence head trains like a binary segmentation problem: per-cell binary
cross-entropy plus the negative Dice overlap, so a perfect prediction scores
close to -1.  The coordinate heads train with mean squared error restricted
to the object's cells; background-only samples contribute zero coordinate
loss.  Loss math runs in float64 regardless of the network dtype; gradients
are returned in the prediction dtype.

All loss values are per-sample means, averaged over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BCE_CLAMP = 1e-7
DICE_EPS = 1e-7


@dataclass
class LossBreakdown:
    seg: float
    mse_x: float
    mse_y: float
    total: float

    def to_dict(self) -> dict:
        return {"seg": self.seg, "mse_x": self.mse_x, "mse_y": self.mse_y, "total": self.total}


def _flat(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float64).reshape(a.shape[0], -1)


def seg_loss(pred: np.ndarray, target: np.ndarray, with_grad: bool = False):
    """Mean BCE over cells minus the Dice coefficient, averaged over the batch.

    pred holds probabilities in (0, 1) (clamped to [BCE_CLAMP, 1-BCE_CLAMP]
    inside the BCE), target is binary.  Returns the scalar, or (scalar, grad)
    with grad shaped like pred.
    """
    if pred.shape != target.shape:
        raise ValueError("prediction/target shape mismatch")
    p = _flat(pred)
    g = _flat(target)
    batch, cells = p.shape

    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    bce = -(g * np.log(pc) + (1.0 - g) * np.log(1.0 - pc)).mean(axis=1)

    inter = (p * g).sum(axis=1)
    denom = (p * p).sum(axis=1) + (g * g).sum(axis=1) + DICE_EPS
    dice = 2.0 * inter / denom

    value = float((bce - dice).mean())
    if not with_grad:
        return value

    inside = (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP)
    g_bce = np.where(inside, (pc - g) / (pc * (1.0 - pc)), 0.0) / cells
    g_dice = 2.0 * (g * denom[:, None] - inter[:, None] * 2.0 * p) / (denom**2)[:, None]
    grad = ((g_bce - g_dice) / batch).reshape(pred.shape).astype(pred.dtype)
    return value, grad


def masked_mse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray, with_grad: bool = False):
    """Mean squared error over masked cells only; 0 for an empty mask."""
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ValueError("prediction/target/mask shape mismatch")
    p = _flat(pred)
    g = _flat(target)
    m = _flat(mask)
    batch = p.shape[0]

    count = np.maximum(m.sum(axis=1), 1.0)
    diff = (p - g) * m
    per_sample = (diff * diff).sum(axis=1) / count
    value = float(per_sample.mean())
    if not with_grad:
        return value
    grad = (2.0 * diff / count[:, None] / batch).reshape(pred.shape).astype(pred.dtype)
    return value, grad


def total_loss(outputs, targets, weights=(1.0, 1.0, 1.0), with_grad: bool = False):
    """Weighted sum of the three losses.

    outputs: (presence, x_map, y_map) predictions; targets: (presence, x_map,
    y_map, mask) ground-truth arrays of matching shapes.  Returns a
    LossBreakdown (component values unweighted, total weighted), optionally
    with the per-head gradient arrays.
    """
    pred_p, pred_x, pred_y = outputs
    tgt_p, tgt_x, tgt_y, mask = targets
    w_seg, w_x, w_y = weights

    if not with_grad:
        seg = seg_loss(pred_p, tgt_p)
        mx = masked_mse(pred_x, tgt_x, mask)
        my = masked_mse(pred_y, tgt_y, mask)
        total = w_seg * seg + w_x * mx + w_y * my
        return LossBreakdown(seg=seg, mse_x=mx, mse_y=my, total=total)

    seg, g_seg = seg_loss(pred_p, tgt_p, with_grad=True)
    mx, g_x = masked_mse(pred_x, tgt_x, mask, with_grad=True)
    my, g_y = masked_mse(pred_y, tgt_y, mask, with_grad=True)
    total = w_seg * seg + w_x * mx + w_y * my
    grads = (
        (w_seg * g_seg).astype(pred_p.dtype),
        (w_x * g_x).astype(pred_x.dtype),
        (w_y * g_y).astype(pred_y.dtype),
    )
    return LossBreakdown(seg=seg, mse_x=mx, mse_y=my, total=total), grads
