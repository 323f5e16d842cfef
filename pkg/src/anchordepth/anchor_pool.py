"""Discrete pool of anchor depths, each with a learnable embedding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_ANCHORS = (2.0, 4.0, 6.0, 10.0, 20.0, 40.0, 80.0, 120.0)
DEFAULT_EMBED_DIM = 16
EMBED_INIT_STD = 0.02


@dataclass(frozen=True)
class AnchorDraw:
    index: int
    anchor: float
    embedding: np.ndarray


class AnchorPool:
    """Anchor depths in meters (strictly increasing) plus an ``(N, D)`` embedding table.

    The embedding array is shared by reference with the model parameters, so
    in-place optimizer updates are visible through the pool.
    """

    def __init__(self, anchors, embeddings: np.ndarray):
        anchors = np.asarray(anchors, dtype=np.float64)
        if anchors.ndim != 1 or anchors.size == 0:
            raise ValueError("anchor pool must be a non-empty 1-D sequence")
        if not np.all(anchors > 0) or not np.all(np.isfinite(anchors)):
            raise ValueError("anchor depths must be positive and finite")
        if np.any(np.diff(anchors) <= 0):
            raise ValueError("anchor depths must be strictly increasing")
        if embeddings.ndim != 2 or embeddings.shape[0] != anchors.size:
            raise ValueError(
                f"need one embedding row per anchor: {anchors.size} anchors, "
                f"embeddings of shape {embeddings.shape}")
        self.anchors = anchors
        self.embeddings = embeddings

    @classmethod
    def create(cls, anchors=DEFAULT_ANCHORS, dim: int = DEFAULT_EMBED_DIM,
               rng: np.random.Generator | None = None) -> "AnchorPool":
        rng = np.random.default_rng(0) if rng is None else rng
        anchors = np.asarray(anchors, dtype=np.float64)
        emb = rng.normal(0.0, EMBED_INIT_STD, size=(anchors.size, dim))
        return cls(anchors, emb)

    def __len__(self) -> int:
        return self.anchors.size

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def draw(self, index: int) -> AnchorDraw:
        index = int(index)
        if not 0 <= index < len(self):
            raise IndexError(f"anchor index {index} out of range for pool of {len(self)}")
        return AnchorDraw(index, float(self.anchors[index]), self.embeddings[index])


def sample_anchor(pool: AnchorPool, rng: np.random.Generator) -> AnchorDraw:
    """Uniformly random pool entry."""
    if len(pool) == 0:
        raise ValueError("cannot sample from an empty anchor pool")
    return pool.draw(rng.integers(len(pool)))


def select_anchor(pool: AnchorPool, requested_meters: float) -> AnchorDraw:
    """Pool entry nearest to the requested depth; ties go to the smaller anchor."""
    requested_meters = float(requested_meters)
    if not requested_meters > 0:
        raise ValueError(f"requested anchor must be positive, got {requested_meters}")
    if len(pool) == 0:
        raise ValueError("cannot select from an empty anchor pool")
    # argmin returns the first minimum, which is the smaller anchor on ties
    return pool.draw(np.argmin(np.abs(pool.anchors - requested_meters)))
