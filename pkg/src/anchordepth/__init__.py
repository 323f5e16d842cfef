"""Anchor-conditioned metric depth: representation, toy network, data and tools."""
from .anchor_pool import AnchorPool, sample_anchor, select_anchor
from .metrics import EvalConfig, EvalReport, aggregate, evaluate
from .repr_core import (DEFAULT_TAPER_RATE, INFINITE_DEPTH, DepthMap, NormalizedDepthPair, fuse,
                        normalize, normalize_far, normalize_near, reproject, reproject_far,
                        reproject_near)

__version__ = "0.1.0"

__all__ = [
    "AnchorPool", "DEFAULT_TAPER_RATE", "DepthMap", "EvalConfig", "EvalReport",
    "INFINITE_DEPTH", "NormalizedDepthPair", "aggregate", "evaluate", "fuse", "normalize",
    "normalize_far", "normalize_near", "reproject", "reproject_far", "reproject_near",
    "sample_anchor", "select_anchor",
]
