"""Training losses for the two depth branches and the near-field mask.

All losses are unnormalized sums over contributing pixels.  Each function
returns ``(value, grad)`` where ``grad`` is the per-pixel derivative with
respect to the prediction.  Ground-truth masks use the int8 convention of
:func:`anchordepth.repr_core.gt_near_mask` (1 near, 0 far, -1 no ground truth).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda_sn: float = 1.0
    lambda_tf: float = 1.0
    lambda_m: float = 0.05

    def __post_init__(self):
        for name in ("lambda_sn", "lambda_tf", "lambda_m"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class LossReport:
    l_sn: float
    l_tf: float
    l_mask: float
    total: float
    pixel_counts: dict = field(default_factory=dict)

    def means(self) -> dict:
        """Per-pixel means, for logging only."""
        c = self.pixel_counts
        return {
            "l_sn": self.l_sn / max(c.get("sn", 0), 1),
            "l_tf": self.l_tf / max(c.get("tf", 0), 1),
            "l_mask": self.l_mask / max(c.get("mask", 0), 1),
        }


def _same_shape(*arrays):
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch: {[a.shape for a in arrays]}")


def _masked_l2(pred, gt, weight):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _same_shape(pred, gt, weight)
    # np.where keeps saturated/inf targets on excluded pixels out of the sum
    resid = np.where(weight, pred - gt, 0.0)
    return float(np.sum(resid ** 2)), 2.0 * resid


def loss_near(pred_near, gt_near, gt_mask):
    """Squared error over pixels whose ground-truth mask is 1."""
    gt_mask = np.asarray(gt_mask)
    return _masked_l2(pred_near, gt_near, gt_mask == 1)


def loss_far(pred_far, gt_far, gt_mask):
    """Squared error over pixels whose ground-truth mask is 0."""
    gt_mask = np.asarray(gt_mask)
    return _masked_l2(pred_far, gt_far, gt_mask == 0)


def loss_mask(pred_mask, gt_mask):
    """Binary cross-entropy on probabilities clamped to [1e-7, 1 - 1e-7].

    The gradient is taken with respect to the clamped probability.
    """
    p = np.clip(np.asarray(pred_mask, dtype=np.float64), PROB_EPS, 1 - PROB_EPS)
    gt_mask = np.asarray(gt_mask)
    _same_shape(p, gt_mask)
    valid = gt_mask >= 0
    g = (gt_mask == 1).astype(np.float64)
    bce = -(g * np.log(p) + (1 - g) * np.log1p(-p))
    grad = np.where(valid, (p - g) / (p * (1 - p)), 0.0)
    return float(np.sum(bce[valid])), grad


def loss_mask_logits(logits, gt_mask):
    """BCE fused with the logistic activation, differentiated w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    gt_mask = np.asarray(gt_mask)
    _same_shape(z, gt_mask)
    valid = gt_mask >= 0
    g = (gt_mask == 1).astype(np.float64)
    # softplus(z) - g z, computed without overflow
    with np.errstate(invalid="ignore"):
        bce = np.logaddexp(0.0, z) - g * z
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    grad = np.where(valid, p - g, 0.0)
    return float(np.sum(bce[valid])), grad


def loss_total(l_sn: float, l_tf: float, l_mask: float,
               weights: LossWeights = LossWeights(), pixel_counts=None) -> LossReport:
    total = weights.lambda_sn * l_sn + weights.lambda_tf * l_tf + weights.lambda_m * l_mask
    return LossReport(l_sn, l_tf, l_mask, total, dict(pixel_counts or {}))


def pixel_counts(gt_mask) -> dict:
    gt_mask = np.asarray(gt_mask)
    return {
        "sn": int(np.sum(gt_mask == 1)),
        "tf": int(np.sum(gt_mask == 0)),
        "mask": int(np.sum(gt_mask >= 0)),
    }
