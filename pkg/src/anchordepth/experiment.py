"""Desk-scale synthetic experiment: data, training variants and evaluations.

Shared by the acceptance suite, the demos and anyone who wants the whole
pipeline in a few calls.  Three training variants exist:

``full``
    sliding anchor over the whole pool, with the mask head;
``no_mask``
    same, but no mask head (fusion falls back to naive truncation);
``fixed_anchor``
    mask head kept, but every image is trained against one anchor.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .anchor_pool import DEFAULT_ANCHORS, AnchorPool
from .metrics import EvalConfig, EvalReport, aggregate, evaluate
from .model import init_params
from .repr_core import DepthMap
from .scenegen import generate_dataset
from .training import TrainConfig, predict_metric, train

log = logging.getLogger(__name__)

VARIANTS = ("full", "no_mask", "fixed_anchor")

# Matched (anchor, cap) per regime: the cap is the regime's evaluation cap and
# the anchor is the pool entry at that cap.
MATCHED = {"indoor": (10.0, 10.0), "outdoor": (80.0, 80.0)}
# Benchmark for the mask ablation: anchors well inside each regime's range so
# both branches and the fusion decision carry weight.
MASK_BENCH = {"indoor": (4.0, 10.0), "outdoor": (20.0, 80.0)}
SWEEP = {"indoor": (2.0, 10.0), "outdoor": (20.0, 80.0)}


@dataclass(frozen=True)
class ExperimentConfig:
    train_scenes: int = 2000
    test_scenes: int = 200
    mix: float = 0.5
    data_seed: int = 0
    test_seed: int = 12345
    init_seed: int = 0
    train: TrainConfig = TrainConfig()
    variant: str = "full"
    fixed_anchor: float = 80.0
    float32: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")

    def with_variant(self, variant: str) -> "ExperimentConfig":
        return replace(self, variant=variant)


@dataclass
class SyntheticSet:
    specs: list
    images: np.ndarray
    depths: np.ndarray
    valid: np.ndarray

    def regime_indices(self, regime: str) -> list[int]:
        return [i for i, s in enumerate(self.specs) if s.regime == regime]


def synthetic_set(n: int, mix: float, seed: int) -> SyntheticSet:
    specs, images, depths = [], [], []
    for spec, image, depth in generate_dataset(n, mix, seed):
        specs.append(spec)
        images.append(image)
        depths.append(depth.values)
    depths = np.stack(depths)
    return SyntheticSet(specs, np.stack(images).astype(np.float32), depths,
                        np.ones(depths.shape, bool))


@dataclass
class TrainedModel:
    params: dict
    pool: AnchorPool
    curve: list
    variant: str


def make_pool_and_params(cfg: ExperimentConfig) -> tuple[AnchorPool, dict]:
    rng = np.random.default_rng(cfg.init_seed)
    anchors = (cfg.fixed_anchor,) if cfg.variant == "fixed_anchor" else DEFAULT_ANCHORS
    pool = AnchorPool.create(anchors, rng=rng)
    params = init_params(pool, rng, mask_head=cfg.variant != "no_mask")
    if cfg.float32:
        params = {k: v.astype(np.float32) for k, v in params.items()}
        pool.embeddings = params["anchor_emb"]
    return pool, params


def train_variant(cfg: ExperimentConfig, data: SyntheticSet) -> TrainedModel:
    pool, params = make_pool_and_params(cfg)
    log.info("training variant %s for %d steps", cfg.variant, cfg.train.steps)
    result = train(params, data.images, data.depths, data.valid, pool, cfg.train)
    return TrainedModel(params, pool, result.curve, cfg.variant)


def evaluate_regime(model: TrainedModel, data: SyntheticSet, regime: str,
                    anchor: float, cap: float, flip: bool = False) -> EvalReport:
    """Image-averaged report over one regime's scenes at a fixed anchor and cap."""
    reports = []
    for i in data.regime_indices(regime):
        pred = predict_metric(model.params, data.images[i], model.pool, anchor, flip=flip)
        try:
            reports.append(evaluate(pred, DepthMap(data.depths[i], data.valid[i]),
                                    EvalConfig(cap)))
        except ValueError:
            continue  # no pixel under the cap
    return aggregate(reports)


def evaluate_by_regime(model: TrainedModel, data: SyntheticSet, table: dict,
                       flip: bool = False) -> EvalReport:
    """Image-averaged report with each scene scored at its regime's (anchor, cap)."""
    reports = []
    for i, spec in enumerate(data.specs):
        anchor, cap = table[spec.regime]
        pred = predict_metric(model.params, data.images[i], model.pool, anchor, flip=flip)
        try:
            reports.append(evaluate(pred, DepthMap(data.depths[i], data.valid[i]),
                                    EvalConfig(cap)))
        except ValueError:
            continue
    return aggregate(reports)


def anchor_cap_sweep(model: TrainedModel, data: SyntheticSet, sweep: dict = SWEEP) -> dict:
    """δ1 for every (regime, anchor, cap) combination of the sweep table."""
    out = {}
    for regime, values in sweep.items():
        for anchor in values:
            for cap in values:
                out[(regime, anchor, cap)] = evaluate_regime(model, data, regime, anchor, cap).delta1
    return out


def diagonal_wins(sweep_result: dict, sweep: dict = SWEEP) -> list[tuple]:
    """One row per (regime, cap): matched δ1, best off-diagonal δ1, and whether matched wins."""
    rows = []
    for regime, values in sweep.items():
        for cap in values:
            matched = sweep_result[(regime, cap, cap)]
            other = max(sweep_result[(regime, a, cap)] for a in values if a != cap)
            rows.append((regime, cap, matched, other, matched >= other))
    return rows
