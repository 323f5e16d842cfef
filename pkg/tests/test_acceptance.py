"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Criteria 6 to 8 train three desk-scale models (about 7 minutes each on one
CPU core).  Set ``ANCHORDEPTH_ACCEPTANCE_CACHE`` to a directory to reuse
trained checkpoints across runs; the lines then say ``cached``.
"""
import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from anchordepth import repr_core as R
from anchordepth.checkpoint import load_checkpoint, save_checkpoint
from anchordepth.cli import main as cli_main
from anchordepth.depthio import decode_png16, decode_pfm, encode_png16, encode_pfm
from anchordepth.experiment import (MASK_BENCH, MATCHED, SWEEP, ExperimentConfig, TrainedModel,
                                    anchor_cap_sweep, diagonal_wins, evaluate_by_regime,
                                    evaluate_regime, synthetic_set,
                                    train_variant)
from anchordepth.gradcheck import check_model_gradients, numeric_gradient, relative_error
from anchordepth.losses import LossWeights, loss_far, loss_mask, loss_mask_logits, loss_near
from anchordepth.metrics import EvalConfig, evaluate
from anchordepth.model import ToyDepthNet
from anchordepth.reconstruct import backproject
from anchordepth.scenegen import SceneSpec, generate_scene
from anchordepth.training import batch_loss, build_targets

# e^-1 to 30 digits (mpmath, 50-digit working precision)
EXP_M1 = 0.367879441171442321595523770161


# -- 1-5: exact math -------------------------------------------------------------

def test_criterion_1_round_trip(criterion):
    rng = np.random.default_rng(2024)
    n = 1_000_000
    anchor = rng.uniform(0.5, 150.0, n)
    k = rng.uniform(0.005, 0.2, n)
    near = rng.random(n) < 0.5
    # the far side spans the taper's float64 range (values down to ~1e-304)
    gap = np.exp(rng.uniform(np.log(1e-6), np.log(700.0), n)) / k
    d = np.where(near, anchor * rng.uniform(1e-6, 1.0, n), anchor + gap)
    t0 = time.perf_counter()
    back = R.reproject(R.normalize(d, anchor, k), anchor, k, eps=None)
    elapsed = time.perf_counter() - t0
    err = np.abs(back - d) / d
    ok = err.max() < 1e-9 and elapsed < 5.0
    criterion(1, "representation round trip on 1e6 triples", ok,
              f"max rel err {err.max():.2e}, {elapsed:.2f} s")


def test_criterion_2_continuity(criterion):
    checks = []
    for a, k in [(2.0, 0.025), (10.0, 0.025), (80.0, 0.025), (37.5, 0.3), (120.0, 0.001)]:
        checks.append(R.normalize_near(a, a) == 1.0)
        checks.append(R.normalize_far(a, a, k) == 1.0)
        checks.append(R.normalize_far(a + 10.0 / k, a, k) < 5e-5)
        n_m = R.reproject_near(np.array(1.0), a)
        f_m = R.reproject_far(np.array(1.0), a, k)
        for m in (1.0, 0.0):
            checks.append(R.fuse(n_m, f_m, np.array(m)) == a)
    criterion(2, "anchor continuity and limits", all(bool(c) for c in checks),
              f"{len(checks)} checks")


def test_criterion_3_pinned_values(criterion):
    d_tf = float(R.normalize_far(120.0, 80.0, 0.025))
    back = float(R.reproject_far(np.array(d_tf), 80.0, 0.025))
    w = LossWeights()
    ok = (abs(d_tf - EXP_M1) <= 1e-15 and abs(back - 120.0) < 1e-12
          and R.DEFAULT_TAPER_RATE == 0.025
          and (w.lambda_sn, w.lambda_tf, w.lambda_m) == (1.0, 1.0, 0.05))
    criterion(3, "pinned formula values", ok, f"d_tf={d_tf!r}, inverse={back!r}")


def test_criterion_4_gradients(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    shape = (3, 7, 5)
    gt_mask = rng.integers(-1, 2, shape).astype(np.int8)
    worst = {}
    for name, fn in [("L_sn", lambda p, g: loss_near(p, g, gt_mask)),
                     ("L_tf", lambda p, g: loss_far(p, g, gt_mask))]:
        p, g = rng.uniform(0.05, 0.95, shape), rng.random(shape)
        _, ana = fn(p, g)
        num = numeric_gradient(lambda: fn(p, g)[0], p, 1e-6)
        worst[name] = relative_error(ana, num, 1e-8).max()
    m = (gt_mask == 1).astype(float)
    p = rng.uniform(0.05, 0.95, shape)
    _, ana = loss_mask(p, m)
    worst["L_mask"] = relative_error(ana, numeric_gradient(lambda: loss_mask(p, m)[0], p, 1e-6),
                                     1e-8).max()
    z = rng.normal(0, 2, shape)
    _, ana = loss_mask_logits(z, gt_mask)
    worst["L_mask(logits)"] = relative_error(
        ana, numeric_gradient(lambda: loss_mask_logits(z, gt_mask)[0], z, 1e-6), 1e-8).max()
    losses_ok = max(worst.values()) < 1e-4

    from anchordepth.anchor_pool import AnchorPool
    from anchordepth.model import init_params
    prng = np.random.default_rng(4)
    pool = AnchorPool.create(rng=prng)
    net = ToyDepthNet(init_params(pool, prng))
    idx = [1, 6]
    depths = prng.uniform(0.5, 150, (2, 16, 16))
    depths[:, 0, :3] = np.inf
    targets = build_targets(depths, np.ones(depths.shape, bool), pool.anchors[idx])

    def fn(out):
        report, dn, df, dm = batch_loss(out, targets, LossWeights())
        return report.total, dn, df, dm

    rows = check_model_gradients(net, prng.random((2, 16, 16, 3)), idx, fn,
                                 np.random.default_rng(0), fraction=0.01)
    model_err = relative_error([r[2] for r in rows], [r[3] for r in rows]).max()
    elapsed = time.perf_counter() - t0
    ok = losses_ok and model_err < 1e-3 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    criterion(4, "gradient verification", ok,
              f"{detail}, model {model_err:.1e} over {len(rows)} params, {elapsed:.1f} s")


def _naive_metrics(pred, gt, valid, cap):
    d_all, p_all = [], []
    for p, g, v in zip(pred.ravel(), gt.ravel(), valid.ravel()):
        if v and np.isfinite(g) and 0 < g <= cap:
            d_all.append(float(g))
            p_all.append(max(float(p), 1e-6))
    n = len(d_all)
    out = dict(delta1=0, delta2=0, delta3=0, rel=0.0, sq=0.0, log10=0.0)
    for g, p in zip(d_all, p_all):
        r = max(g / p, p / g)
        out["delta1"] += r < 1.25
        out["delta2"] += r < 1.25 ** 2
        out["delta3"] += r < 1.25 ** 3
        out["rel"] += abs(g - p) / g
        out["sq"] += (g - p) ** 2
        out["log10"] += abs(np.log10(g) - np.log10(p))
    return dict(delta1=out["delta1"] / n, delta2=out["delta2"] / n, delta3=out["delta3"] / n,
                rel=out["rel"] / n, rmse=(out["sq"] / n) ** 0.5, log10=out["log10"] / n)


def test_criterion_5_metric_oracle(criterion):
    rng = np.random.default_rng(5)
    worst, done = 0.0, 0
    while done < 1000:
        shape = (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        gt = rng.uniform(0.1, 100, shape)
        gt[rng.random(shape) < 0.1] = np.inf
        gt[rng.random(shape) < 0.1] = 0.0
        valid = rng.random(shape) > 0.1
        pred = gt * np.exp(rng.normal(0, 0.3, shape))
        pred[rng.random(shape) < 0.05] = -1.0
        cap = float(rng.choice([10.0, 80.0]))
        try:
            rep = evaluate(pred, R.DepthMap(gt, valid), EvalConfig(cap))
        except ValueError:
            continue
        ref = _naive_metrics(pred, gt, valid, cap)
        worst = max(worst, max(abs(getattr(rep, m) - v) for m, v in ref.items()))
        done += 1
    one = evaluate(np.array([[1.0]]), R.DepthMap(np.array([[2.0]])), EvalConfig(10.0))
    exact = (one.rel, one.rmse, one.delta1) == (0.5, 1.0, 0.0)
    criterion(5, "metric oracle", worst <= 1e-12 and exact, f"max |diff| {worst:.1e} over 1000 maps")


# -- 6-8: desk-scale training ----------------------------------------------------

def _cached_train(cfg: ExperimentConfig, data, cache_dir):
    if cache_dir is None:
        t0 = time.perf_counter()
        model = train_variant(cfg, data)
        return model, time.perf_counter() - t0, False
    key = hashlib.sha256(repr(cfg).encode()).hexdigest()[:16]
    ckpt = Path(cache_dir) / f"{cfg.variant}-{key}.ckpt"
    meta = ckpt.with_suffix(".json")
    if ckpt.exists() and meta.exists():
        params, pool = load_checkpoint(ckpt, np.float32 if cfg.float32 else np.float64)
        info = json.loads(meta.read_text())
        return TrainedModel(params, pool, info["curve_tail"], cfg.variant), info["seconds"], True
    t0 = time.perf_counter()
    model = train_variant(cfg, data)
    seconds = time.perf_counter() - t0
    Path(cache_dir).mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, model.params, model.pool)
    meta.write_text(json.dumps({"seconds": seconds, "curve_tail": model.curve[-10:]}))
    return model, seconds, False


@pytest.fixture(scope="module")
def experiment():
    cfg = ExperimentConfig()
    train_set = synthetic_set(cfg.train_scenes, cfg.mix, cfg.data_seed)
    test_set = synthetic_set(cfg.test_scenes, cfg.mix, cfg.test_seed)
    return cfg, train_set, test_set


@pytest.fixture(scope="module")
def trained(experiment):
    cfg, train_set, _ = experiment
    cache = os.environ.get("ANCHORDEPTH_ACCEPTANCE_CACHE")
    return {v: _cached_train(cfg.with_variant(v), train_set, cache)
            for v in ("full", "no_mask", "fixed_anchor")}


def test_criterion_6_training(criterion, experiment, trained):
    cfg, _, test_set = experiment
    model, seconds, cached = trained["full"]
    rep = evaluate_by_regime(model, test_set, MATCHED)
    ok = rep.delta1 >= 0.85 and rep.rel <= 0.15 and seconds < 30 * 60
    criterion(6, "desk-scale training", ok,
              f"delta1 {rep.delta1:.4f}, REL {rep.rel:.4f}, RMSE {rep.rmse:.3f} on "
              f"{cfg.test_scenes} held-out scenes; train {seconds / 60:.1f} min"
              + (" (cached)" if cached else ""))


def test_criterion_7_anchor_sweep(criterion, experiment, trained):
    _, _, test_set = experiment
    model = trained["full"][0]
    rows = diagonal_wins(anchor_cap_sweep(model, test_set, SWEEP), SWEEP)
    wins = sum(r[4] for r in rows)
    detail = "; ".join(f"{r[0]} cap {r[1]:g}: matched {r[2]:.3f} vs {r[3]:.3f}" for r in rows)
    criterion(7, "sliding-anchor trend", wins >= 3, f"{wins}/4 diagonal wins; {detail}")


def test_criterion_8_ablations(criterion, experiment, trained):
    _, _, test_set = experiment
    full, no_mask, fixed = (trained[v][0] for v in ("full", "no_mask", "fixed_anchor"))
    rmse_full = evaluate_by_regime(full, test_set, MASK_BENCH).rmse
    rmse_naive = evaluate_by_regime(no_mask, test_set, MASK_BENCH).rmse
    smallest = float(full.pool.anchors[0])
    d1_full = evaluate_regime(full, test_set, "indoor", smallest, smallest).delta1
    d1_fixed = evaluate_regime(fixed, test_set, "indoor", smallest, smallest).delta1
    ok = rmse_naive > rmse_full and d1_fixed < d1_full
    criterion(8, "ablation directions", ok,
              f"RMSE full {rmse_full:.3f} vs no-mask {rmse_naive:.3f}; "
              f"cap-{smallest:g} delta1 sliding {d1_full:.3f} vs fixed {d1_fixed:.3f}")


# -- 9-10: reconstruction and I/O ------------------------------------------------

def test_criterion_9_reconstruction(criterion):
    worst_plane, worst_px = 0.0, 0.0
    for seed in range(5):
        # no objects, no clipping: only the ground plane and the sky remain
        spec = SceneSpec(regime="outdoor", primitive_count=0, seed=seed, depth_range=(1e-3, 1e9))
        _, depth = generate_scene(spec)
        cloud = backproject(depth, spec.intrinsics)
        c = cloud.points.mean(axis=0)
        normal = np.linalg.svd(cloud.points - c)[2][-1]
        worst_plane = max(worst_plane, np.abs((cloud.points - c) @ normal).max())
        uv = spec.intrinsics.project(cloud.points)
        worst_px = max(worst_px, np.abs(uv - cloud.pixels).max())
    ok = worst_plane < 1e-6 and worst_px < 1e-9
    criterion(9, "reconstruction", ok,
              f"plane residual {worst_plane:.1e} m, reprojection {worst_px:.1e} px")


def test_criterion_10_io(criterion, tmp_path):
    rng = np.random.default_rng(10)
    a = rng.normal(0, 100, (33, 17)).astype(np.float32)
    a[0, 0], a[1, 1], a[2, 2] = np.inf, np.nan, -0.0
    blob = encode_pfm(a)
    back = decode_pfm(blob)
    pfm_ok = back.tobytes() == a.tobytes() and encode_pfm(back) == blob
    rgb = rng.random((5, 9, 3)).astype(np.float32)
    pfm_ok &= decode_pfm(encode_pfm(rgb)).tobytes() == rgb.tobytes()

    scale = 0.001
    d = rng.uniform(0.01, 60.0, (20, 20))
    d[3, 4] = np.inf
    depth, got_scale = decode_png16(encode_png16(R.DepthMap(d), scale))
    fin = np.isfinite(d)
    png_err = np.abs(depth.values[fin] - d[fin]).max()
    png_ok = got_scale == scale and png_err <= scale and np.isinf(depth.values[3, 4])

    def tree(root):
        return {p.relative_to(root).as_posix(): p.read_bytes()
                for p in sorted(root.rglob("*")) if p.is_file()}

    outs = []
    for run in ("a", "b"):
        root = tmp_path / run
        assert cli_main(["--seed", "7", "generate", "--out", str(root / "data"),
                         "--count", "6"]) == 0
        assert cli_main(["--seed", "7", "train", "--data", str(root / "data" / "manifest.tsv"),
                         "--out-checkpoint", str(root / "model.ckpt"), "--steps", "3"]) == 0
        assert cli_main(["eval", "--data", str(root / "data" / "manifest.tsv"), "--checkpoint",
                         str(root / "model.ckpt"), "--csv", str(root / "eval.csv"),
                         "--quiet"]) == 0
        outs.append(tree(root))
    cli_ok = outs[0] == outs[1] and len(outs[0]) == 17
    criterion(10, "I/O", pfm_ok and png_ok and cli_ok,
              f"PFM bitwise {pfm_ok}, PNG16 max err {png_err:.1e} m <= step {scale}, "
              f"CLI byte-identical over {len(outs[0])} files {cli_ok}")
