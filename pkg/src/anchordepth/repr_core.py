"""Anchor-based depth representation.

Depth is split at an anchor distance into a linearly scaled near field
(``d / anchor`` in [0, 1]) and an exponentially tapered far field
(``exp(-k (d - anchor))`` in (0, 1]).  Both transforms are closed form and
invertible, and the two inverse depths are fused with a per-pixel mask.

Pixels at infinite depth (sky) are stored as ``np.inf``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INFINITE_DEPTH = np.inf
DEFAULT_TAPER_RATE = 0.025

# gt mask values; invalid (no ground truth) pixels carry MASK_UNSET
MASK_NEAR = 1
MASK_FAR = 0
MASK_UNSET = -1

FAR_FLOOR = 1e-8
NEAR_TOLERANCE = 1e-6
MASK_THRESHOLD = 0.5


@dataclass
class DepthMap:
    """Dense metric depth in meters with a validity mask."""

    values: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"depth map must be 2-D, got shape {self.values.shape}")
        if self.valid is None:
            self.valid = ~np.isnan(self.values)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.values.shape:
            raise ValueError("valid mask shape does not match depth values")
        v = self.values[self.valid]
        if np.isnan(v).any() or (v < 0).any() or np.isneginf(v).any():
            raise ValueError("valid depth values must be >= 0 or INFINITE_DEPTH")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def finite(self) -> np.ndarray:
        """Valid pixels with a finite depth."""
        return self.valid & np.isfinite(self.values)


@dataclass(frozen=True)
class NormalizedDepthPair:
    near: np.ndarray
    far: np.ndarray
    mask: np.ndarray


def _depth_values(d) -> np.ndarray:
    if isinstance(d, DepthMap):
        return d.values
    return np.asarray(d, dtype=np.float64)


# Anchors and rates may be scalars or arrays broadcastable against the depths.

def _check_anchor(anchor):
    a = np.asarray(anchor, dtype=np.float64)
    if not (np.all(a > 0) and np.all(np.isfinite(a))):
        raise ValueError(f"anchor depth must be a positive finite number, got {anchor}")
    return float(a) if a.ndim == 0 else a


def _check_rate(k):
    r = np.asarray(k, dtype=np.float64)
    if not (np.all(r > 0) and np.all(np.isfinite(r))):
        raise ValueError(f"taper rate k must be positive, got {k}")
    return float(r) if r.ndim == 0 else r


def _check_nonnegative(d: np.ndarray) -> None:
    with np.errstate(invalid="ignore"):
        if (d < 0).any():
            raise ValueError("depth values must be non-negative")


def normalize_near(d, anchor: float) -> np.ndarray:
    """Scale depth into [0, 1] by the anchor.

    Pixels beyond the anchor (including infinite depth) are outside the near
    branch; they saturate at 1 and must be masked out by `gt_near_mask`.
    """
    anchor = _check_anchor(anchor)
    d = _depth_values(d)
    _check_nonnegative(d)
    return np.minimum(d / anchor, 1.0)


def gt_near_mask(d, anchor: float) -> np.ndarray:
    """Indicator of ``d <= anchor`` as int8, with MASK_UNSET on invalid pixels."""
    anchor = _check_anchor(anchor)
    values = _depth_values(d)
    valid = d.valid if isinstance(d, DepthMap) else ~np.isnan(values)
    with np.errstate(invalid="ignore"):
        m = np.where(values <= anchor, MASK_NEAR, MASK_FAR).astype(np.int8)
    m[~valid] = MASK_UNSET
    return m


def normalize_far(d, anchor: float, k: float = DEFAULT_TAPER_RATE) -> np.ndarray:
    """Taper depth beyond the anchor to ``exp(-k (d - anchor))``.

    The anchor maps to 1 and infinite depth to exactly 0.  Pixels nearer than
    the anchor are out of branch and saturate at 1.
    """
    anchor = _check_anchor(anchor)
    k = _check_rate(k)
    d = _depth_values(d)
    _check_nonnegative(d)
    return np.exp(-k * np.maximum(d - anchor, 0.0))


def normalize(d, anchor: float, k: float = DEFAULT_TAPER_RATE) -> NormalizedDepthPair:
    return NormalizedDepthPair(
        near=normalize_near(d, anchor),
        far=normalize_far(d, anchor, k),
        mask=gt_near_mask(d, anchor),
    )


def reproject_near(near, anchor: float, tol: float = NEAR_TOLERANCE) -> np.ndarray:
    anchor = _check_anchor(anchor)
    near = np.asarray(near, dtype=np.float64)
    if (near < -tol).any() or (near > 1 + tol).any() or np.isnan(near).any():
        raise ValueError("near-field values must lie in [0, 1]")
    return np.clip(near, 0.0, 1.0) * anchor


def reproject_far(far, anchor: float, k: float = DEFAULT_TAPER_RATE,
                  eps: float | None = FAR_FLOOR, tol: float = NEAR_TOLERANCE) -> np.ndarray:
    """Invert the far-field taper: ``-ln(far) / k + anchor``.

    Values at or below `eps` map to the finite ceiling ``-ln(eps) / k + anchor``.
    With ``eps=None`` a zero input is a domain error.
    """
    anchor = _check_anchor(anchor)
    k = _check_rate(k)
    far = np.asarray(far, dtype=np.float64)
    if (far < 0).any() or np.isnan(far).any():
        raise ValueError("far-field values must be non-negative")
    if (far > 1 + tol).any():
        raise ValueError("far-field values must not exceed 1")
    far = np.minimum(far, 1.0)
    if eps is None:
        if (far == 0).any():
            raise ValueError("far-field value 0 has no finite depth; pass eps to clamp")
        return -np.log(far) / k + anchor
    return -np.log(np.maximum(far, eps)) / k + anchor


def fuse(near_metric, far_metric, mask, threshold: float = MASK_THRESHOLD) -> np.ndarray:
    """Fuse the two reprojected depths with a binarized near-field mask."""
    near_metric = np.asarray(near_metric, dtype=np.float64)
    far_metric = np.asarray(far_metric, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if not (near_metric.shape == far_metric.shape == mask.shape):
        raise ValueError(
            f"shape mismatch: near {near_metric.shape}, far {far_metric.shape}, "
            f"mask {mask.shape}")
    if (mask < 0).any() or (mask > 1).any():
        raise ValueError("mask values must lie in [0, 1]")
    return np.where(mask >= threshold, near_metric, far_metric)


def reproject(pair: NormalizedDepthPair, anchor: float, k: float = DEFAULT_TAPER_RATE,
              threshold: float = MASK_THRESHOLD, eps: float | None = FAR_FLOOR) -> np.ndarray:
    """Reproject both branches and fuse them into metric depth.

    ``eps`` is the far-field floor passed to `reproject_far`.
    """
    return fuse(reproject_near(pair.near, anchor),
                reproject_far(pair.far, anchor, k, eps),
                np.clip(pair.mask, 0, 1), threshold)
