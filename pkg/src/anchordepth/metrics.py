"""Metric-depth evaluation: threshold accuracy, REL, RMSE and log10 error
over valid ground-truth pixels below a truncation cap."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .repr_core import DepthMap

INDOOR_CAP = 10.0
OUTDOOR_CAP = 80.0
PRED_FLOOR = 1e-6


@dataclass(frozen=True)
class EvalConfig:
    cap_meters: float = INDOOR_CAP
    flip_average: bool = False
    delta_base: float = 1.25

    def __post_init__(self):
        if not self.cap_meters > 0:
            raise ValueError(f"cap_meters must be positive, got {self.cap_meters}")


@dataclass(frozen=True)
class EvalReport:
    delta1: float
    delta2: float
    delta3: float
    rel: float
    rmse: float
    log10: float
    count: int

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


METRIC_NAMES = ("delta1", "delta2", "delta3", "rel", "rmse", "log10")


def evaluation_mask(gt: DepthMap, cap: float) -> np.ndarray:
    """Pixels that count: valid, finite, ``0 < gt <= cap``."""
    g = gt.values
    with np.errstate(invalid="ignore"):
        return gt.valid & np.isfinite(g) & (g > 0) & (g <= cap)


def evaluate(pred, gt, config: EvalConfig = EvalConfig()) -> EvalReport:
    if not isinstance(gt, DepthMap):
        gt = DepthMap(gt)
    pred = pred.values if isinstance(pred, DepthMap) else np.asarray(pred, dtype=np.float64)
    if pred.shape != gt.values.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, gt {gt.values.shape}")
    sel = evaluation_mask(gt, config.cap_meters)
    if not sel.any():
        raise ValueError("no valid ground-truth pixels under the truncation cap")
    d = gt.values[sel]
    p = np.maximum(pred[sel], PRED_FLOOR)
    ratio = np.maximum(d / p, p / d)
    b = config.delta_base
    return EvalReport(
        delta1=float(np.mean(ratio < b)),
        delta2=float(np.mean(ratio < b ** 2)),
        delta3=float(np.mean(ratio < b ** 3)),
        rel=float(np.mean(np.abs(d - p) / d)),
        rmse=float(np.sqrt(np.mean((d - p) ** 2))),
        log10=float(np.mean(np.abs(np.log10(d) - np.log10(p)))),
        count=int(sel.sum()),
    )


def flip_averaged_prediction(predictor, image: np.ndarray) -> np.ndarray:
    """Mean of the prediction and the un-mirrored prediction of the mirrored image."""
    image = np.asarray(image)
    a = np.asarray(predictor(image), dtype=np.float64)
    b = np.asarray(predictor(image[:, ::-1]), dtype=np.float64)[:, ::-1]
    return 0.5 * (a + b)


def evaluate_flip_averaged(predictor, image, gt, config: EvalConfig = EvalConfig()) -> EvalReport:
    return evaluate(flip_averaged_prediction(predictor, image), gt, config)


def aggregate(reports, pooled: bool = False) -> EvalReport:
    """Combine per-image reports.

    Image-averaged by default; with ``pooled`` each metric is weighted by the
    image's valid-pixel count (RMSE is pooled on the squared scale).
    """
    reports = [r for r in reports if r is not None]
    if not reports:
        raise ValueError("no reports to aggregate")
    w = np.array([r.count for r in reports], dtype=np.float64) if pooled else np.ones(len(reports))
    w = w / w.sum()
    vals = {m: np.array([getattr(r, m) for r in reports]) for m in METRIC_NAMES}
    out = {m: float(np.dot(w, vals[m])) for m in METRIC_NAMES if m != "rmse"}
    if pooled:
        out["rmse"] = float(np.sqrt(np.dot(w, vals["rmse"] ** 2)))
    else:
        out["rmse"] = float(np.mean(vals["rmse"]))
    return EvalReport(count=int(sum(r.count for r in reports)), **out)
