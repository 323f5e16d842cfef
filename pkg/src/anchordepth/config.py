"""JSON run configuration with a versioned schema.

Every value is checked at load time; errors carry ``file:line`` pointing at
the offending key so a bad config can be fixed without guessing.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .anchor_pool import DEFAULT_ANCHORS, DEFAULT_EMBED_DIM
from .losses import LossWeights
from .metrics import INDOOR_CAP, OUTDOOR_CAP
from .repr_core import DEFAULT_TAPER_RATE

SCHEMA = "anchordepth.config/1"
CONFIG_ENV = "ANCHORDEPTH_CONFIG"
# whether the mask loss reaches the near branch's features
MASK_GRADIENT_MODES = ("detached", "joint")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerSettings:
    lr: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 4
    grad_clip: float | None = 10.0


@dataclass(frozen=True)
class SceneSettings:
    size: int = 64
    primitives: tuple = (3, 12)


@dataclass(frozen=True)
class Config:
    anchors: tuple = DEFAULT_ANCHORS
    embed_dim: int = DEFAULT_EMBED_DIM
    k: float = DEFAULT_TAPER_RATE
    loss_weights: LossWeights = field(default_factory=LossWeights)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    scenes: SceneSettings = field(default_factory=SceneSettings)
    indoor_cap: float = INDOOR_CAP
    outdoor_cap: float = OUTDOOR_CAP
    seed: int = 0
    mask_gradient: str = "detached"

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "anchors": list(self.anchors),
            "embed_dim": self.embed_dim,
            "k": self.k,
            "loss_weights": {"near": self.loss_weights.lambda_sn,
                             "far": self.loss_weights.lambda_tf,
                             "mask": self.loss_weights.lambda_m},
            "optimizer": {"lr": self.optimizer.lr, "momentum": self.optimizer.momentum,
                          "batch_size": self.optimizer.batch_size,
                          "grad_clip": self.optimizer.grad_clip},
            "scenes": {"size": self.scenes.size, "primitives": list(self.scenes.primitives)},
            "eval": {"indoor_cap": self.indoor_cap, "outdoor_cap": self.outdoor_cap},
            "seed": self.seed,
            "mask_gradient": self.mask_gradient,
        }


def _line_of(text: str, path: tuple) -> int:
    """Line of the last key in ``path``, found by walking the keys in order."""
    pos = 0
    for key in path:
        hit = text.find(json.dumps(key), pos)
        if hit < 0:
            break
        pos = hit
    return text.count("\n", 0, pos) + 1


class _Reader:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def fail(self, path: tuple, msg: str):
        where = ".".join(path) if path else "<root>"
        raise ConfigError(f"{self.source}:{_line_of(self.text, path)}: {where}: {msg}")

    def section(self, obj: dict, path: tuple, allowed: set) -> dict:
        if not isinstance(obj, dict):
            self.fail(path, "expected an object")
        for key in obj:
            if key not in allowed:
                self.fail(path + (key,), "unknown key")
        return obj

    def number(self, obj, path, default, *, positive=False, nonneg=False, integer=False,
               upper=None, nullable=False):
        key = path[-1]
        if key not in obj:
            return default
        v = obj[key]
        if v is None and nullable:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, f"expected a number, got {json.dumps(v)}")
        if integer and not float(v).is_integer():
            self.fail(path, f"expected an integer, got {v}")
        if v != v or v in (float("inf"), float("-inf")):
            self.fail(path, "must be finite")
        if positive and v <= 0:
            self.fail(path, f"must be positive, got {v}")
        if nonneg and v < 0:
            self.fail(path, f"must be non-negative, got {v}")
        if upper is not None and v > upper:
            self.fail(path, f"must be at most {upper}, got {v}")
        return int(v) if integer else float(v)


def parse_config(text: str, source: str = "<config>") -> Config:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    r = _Reader(text, source)
    r.section(raw, (), {"schema", "anchors", "embed_dim", "k", "loss_weights", "optimizer",
                        "scenes", "eval", "seed", "mask_gradient"})
    if raw.get("schema") != SCHEMA:
        r.fail(("schema",), f"expected {SCHEMA!r}, got {json.dumps(raw.get('schema'))}")

    anchors = raw.get("anchors", list(DEFAULT_ANCHORS))
    if not isinstance(anchors, list) or not anchors:
        r.fail(("anchors",), "expected a non-empty list of depths")
    for i, a in enumerate(anchors):
        if isinstance(a, bool) or not isinstance(a, (int, float)) or not 0 < a < float("inf"):
            r.fail(("anchors",), f"entry {i} must be a positive finite depth")
    if any(b <= a for a, b in zip(anchors, anchors[1:])):
        r.fail(("anchors",), "depths must be strictly increasing")

    lw = r.section(raw.get("loss_weights", {}), ("loss_weights",), {"near", "far", "mask"})
    weights = LossWeights(
        r.number(lw, ("loss_weights", "near"), 1.0, nonneg=True),
        r.number(lw, ("loss_weights", "far"), 1.0, nonneg=True),
        r.number(lw, ("loss_weights", "mask"), 0.05, nonneg=True))

    op = r.section(raw.get("optimizer", {}), ("optimizer",),
                   {"lr", "momentum", "batch_size", "grad_clip"})
    optimizer = OptimizerSettings(
        lr=r.number(op, ("optimizer", "lr"), 1e-3, nonneg=True),
        momentum=r.number(op, ("optimizer", "momentum"), 0.9, nonneg=True, upper=0.999),
        batch_size=r.number(op, ("optimizer", "batch_size"), 4, positive=True, integer=True),
        grad_clip=r.number(op, ("optimizer", "grad_clip"), 10.0, positive=True, nullable=True))

    sc = r.section(raw.get("scenes", {}), ("scenes",), {"size", "primitives"})
    size = r.number(sc, ("scenes", "size"), 64, integer=True, positive=True)
    if size % 8:
        r.fail(("scenes", "size"), "must be a multiple of 8 (three stride-2 stages)")
    prims = sc.get("primitives", [3, 12])
    if (not isinstance(prims, list) or len(prims) != 2
            or not all(isinstance(p, int) and not isinstance(p, bool) and p >= 0 for p in prims)
            or prims[0] > prims[1]):
        r.fail(("scenes", "primitives"), "expected [min, max] non-negative integers, min <= max")

    mask_gradient = raw.get("mask_gradient", "detached")
    if mask_gradient not in MASK_GRADIENT_MODES:
        r.fail(("mask_gradient",), f"expected one of {MASK_GRADIENT_MODES}, got {json.dumps(mask_gradient)}")

    ev = r.section(raw.get("eval", {}), ("eval",), {"indoor_cap", "outdoor_cap"})
    return Config(
        anchors=tuple(float(a) for a in anchors),
        embed_dim=r.number(raw, ("embed_dim",), DEFAULT_EMBED_DIM, positive=True, integer=True),
        k=r.number(raw, ("k",), DEFAULT_TAPER_RATE, positive=True),
        loss_weights=weights,
        optimizer=optimizer,
        scenes=SceneSettings(size, tuple(prims)),
        indoor_cap=r.number(ev, ("eval", "indoor_cap"), INDOOR_CAP, positive=True),
        outdoor_cap=r.number(ev, ("eval", "outdoor_cap"), OUTDOOR_CAP, positive=True),
        seed=r.number(raw, ("seed",), 0, nonneg=True, integer=True),
        mask_gradient=mask_gradient,
    )


def load_config(path=None) -> Config:
    """Load ``path``, else the file named by ``$ANCHORDEPTH_CONFIG``, else defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return Config()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))


def dump_config(config: Config) -> str:
    return json.dumps(config.to_json(), indent=2) + "\n"
