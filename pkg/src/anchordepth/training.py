"""Sliding-anchor training loop and metric prediction for the toy network."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import repr_core as R
from .anchor_pool import AnchorPool, sample_anchor, select_anchor
from .layers import sigmoid
from .losses import LossWeights, loss_far, loss_mask_logits, loss_near, loss_total, pixel_counts
from .model import ModelOutput, ToyDepthNet

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    steps: int = 5000
    batch_size: int = 4
    lr: float = 1e-3
    momentum: float = 0.9
    k: float = R.DEFAULT_TAPER_RATE
    seed: int = 0
    grad_clip: float | None = 10.0
    weights: LossWeights = field(default_factory=LossWeights)
    log_every: int = 100
    detach_mask: bool = True


@dataclass
class Targets:
    near: np.ndarray
    far: np.ndarray
    mask: np.ndarray


def build_targets(depths, valid, anchors, k=R.DEFAULT_TAPER_RATE) -> Targets:
    """Per-image ground-truth near/far/mask targets for a batch of depth maps."""
    a = np.asarray(anchors, dtype=np.float64)[:, None, None]
    d = np.where(valid, depths, 0.0)
    near = np.minimum(d / a, 1.0)
    far = np.exp(-k * np.maximum(d - a, 0.0))
    mask = np.where(d <= a, R.MASK_NEAR, R.MASK_FAR).astype(np.int8)
    mask[~np.asarray(valid, bool)] = R.MASK_UNSET
    return Targets(near, far, mask)


def batch_loss(out: ModelOutput, targets: Targets, weights: LossWeights):
    """Mean over the batch of per-image total losses, plus logit gradients.

    Returns ``(report, d_near_logits, d_far_logits, d_mask_logits)``; the
    report holds batch-mean loss components.
    """
    n = out.near.shape[0]
    l_sn, g_sn = loss_near(out.near, targets.near, targets.mask)
    l_tf, g_tf = loss_far(out.far, targets.far, targets.mask)
    d_near = weights.lambda_sn * g_sn * out.near * (1 - out.near) / n
    d_far = weights.lambda_tf * g_tf * out.far * (1 - out.far) / n
    if out.mask_logits is not None:
        l_m, g_m = loss_mask_logits(out.mask_logits, targets.mask)
        d_mask = weights.lambda_m * g_m / n
    else:
        l_m, d_mask = 0.0, None
    report = loss_total(l_sn / n, l_tf / n, l_m / n, weights, pixel_counts(targets.mask))
    return report, d_near, d_far, d_mask


class SGDMomentum:
    """Heavy-ball gradient descent updating parameter arrays in place."""

    def __init__(self, params: dict, lr: float, momentum: float, grad_clip=None):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.grad_clip = grad_clip
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> float:
        norm = float(np.sqrt(sum(np.sum(g.astype(np.float64) ** 2) for g in grads.values())))
        scale = 1.0
        if self.grad_clip is not None and norm > self.grad_clip:
            scale = self.grad_clip / norm
        for k, p in self.params.items():
            v = self.velocity[k]
            v *= self.momentum
            v -= self.lr * scale * grads[k]
            p += v
        return norm


@dataclass
class TrainResult:
    params: dict
    curve: list  # rows of (step, l_sn, l_tf, l_mask, total)


def train(params: dict, images: np.ndarray, depths: np.ndarray, valid: np.ndarray,
          pool: AnchorPool, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Train in place with one uniformly sampled anchor per image.

    Images are visited in a fresh random order each epoch.  Raises
    `TrainingDiverged` on a non-finite loss.
    """
    rng = np.random.default_rng(config.seed)
    net = ToyDepthNet(params, config.detach_mask)
    opt = SGDMomentum(params, config.lr, config.momentum, config.grad_clip)
    dtype = params["enc1.w"].dtype
    n = len(images)
    order = rng.permutation(n)
    cursor = 0
    curve = []
    for step in range(1, config.steps + 1):
        idx = []
        for _ in range(config.batch_size):
            if cursor == n:
                order, cursor = rng.permutation(n), 0
            idx.append(order[cursor])
            cursor += 1
        idx = np.array(idx)
        draws = [sample_anchor(pool, rng) for _ in idx]
        anchors = np.array([d.anchor for d in draws])
        targets = build_targets(depths[idx], valid[idx], anchors, config.k)
        # overflow on a diverging run surfaces as the non-finite loss below
        with np.errstate(over="ignore", invalid="ignore"):
            out = net.forward(images[idx].astype(dtype), [d.index for d in draws])
            report, dn, df, dm = batch_loss(out, targets, config.weights)
        if not np.isfinite(report.total):
            raise TrainingDiverged(
                f"non-finite loss at step {step}: l_sn={report.l_sn}, "
                f"l_tf={report.l_tf}, l_mask={report.l_mask}")
        grads = net.backward(dn.astype(dtype), df.astype(dtype),
                             None if dm is None else dm.astype(dtype))
        opt.step(grads)
        curve.append((step, report.l_sn, report.l_tf, report.l_mask, report.total))
        if config.log_every and step % config.log_every == 0:
            recent = np.mean([c[4] for c in curve[-config.log_every:]])
            log.info("step %d  mean total loss %.4f", step, recent)
    return TrainResult(params, curve)


def naive_truncation_mask(near: np.ndarray, tol: float = 0.01) -> np.ndarray:
    """Mask used without a mask head: trust the near branch only where its
    output stays below the anchor (``near < 1 - tol``)."""
    return (near < 1.0 - tol).astype(np.float64)


def predict_normalized(params: dict, images: np.ndarray, anchor_index) -> ModelOutput:
    net = ToyDepthNet(params)
    return net.forward(np.asarray(images, dtype=params["enc1.w"].dtype), anchor_index)


def fuse_output(out: ModelOutput, anchor: float, k: float = R.DEFAULT_TAPER_RATE,
                threshold: float = R.MASK_THRESHOLD) -> np.ndarray:
    near = out.near.astype(np.float64)
    far = out.far.astype(np.float64)
    if out.mask_prob is not None:
        mask = out.mask_prob.astype(np.float64)
    else:
        mask = naive_truncation_mask(near)
    return R.fuse(R.reproject_near(near, anchor), R.reproject_far(far, anchor, k), mask, threshold)


def predict_metric(params: dict, images: np.ndarray, pool: AnchorPool,
                   requested_anchor: float, k: float = R.DEFAULT_TAPER_RATE,
                   flip: bool = False) -> np.ndarray:
    """Metric depth for one image (H, W, 3) or a batch (N, H, W, 3).

    The anchor is the pool entry nearest `requested_anchor`.  With ``flip``,
    the prediction is averaged with the un-flipped prediction of the
    horizontally mirrored input.
    """
    draw = select_anchor(pool, requested_anchor)
    images = np.asarray(images)
    single = images.ndim == 3
    if single:
        images = images[None]
    depth = fuse_output(predict_normalized(params, images, draw.index), draw.anchor, k)
    if flip:
        mirrored = fuse_output(predict_normalized(params, images[:, :, ::-1], draw.index),
                               draw.anchor, k)
        depth = 0.5 * (depth + mirrored[:, :, ::-1])
    return depth[0] if single else depth
