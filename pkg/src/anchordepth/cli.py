"""``anchordepth`` command-line entry point.

Exit codes: 0 success, 1 usage or config error, 2 runtime error (bad input
files, divergence).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import repr_core as R
from .anchor_pool import AnchorPool, select_anchor
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import CONFIG_ENV, Config, ConfigError, load_config
from .depthio import (DepthFormatError, ManifestEntry, atomic_write, load_dataset, read_depth,
                      read_image, read_manifest, write_depth, write_image, write_manifest)
from .metrics import METRIC_NAMES, EvalConfig, aggregate, evaluate
from .model import init_params, parameter_count
from .reconstruct import CameraIntrinsics, backproject, write_pointcloud
from .scenegen import dataset_specs, generate_scene
from .training import TrainConfig, TrainingDiverged, predict_metric, train

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
log = logging.getLogger("anchordepth")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _positive(kind):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if not v > 0 or v == float("inf"):
            raise argparse.ArgumentTypeError(f"must be positive and finite, got {text}")
        return v
    return parse


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def _unit_interval(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return v


# -- generate ------------------------------------------------------------------

def cmd_generate(args, config: Config) -> int:
    out = Path(args.out)
    seed = config.seed if args.seed is None else args.seed
    specs = dataset_specs(args.count, args.mix, seed, config.scenes.size, config.scenes.primitives)
    ext = ".png" if args.depth_format == "png16" else ".pfm"
    for sub in ("images", "depth"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    entries = []
    width = len(str(args.count - 1))
    for i, spec in enumerate(specs):
        image, depth = generate_scene(spec)
        name = f"{i:0{width}d}"
        entry = ManifestEntry(f"images/{name}.pfm", f"depth/{name}{ext}", spec)
        write_image(out / entry.image, image)
        write_depth(out / entry.depth, depth, scale=args.png_scale)
        entries.append(entry)
    write_manifest(out / "manifest.tsv", entries)
    print(f"wrote {len(entries)} scenes to {out}")
    return EXIT_OK


# -- train ---------------------------------------------------------------------

def _fresh_model(config: Config, seed: int, mask_head: bool, fixed_anchor, dtype):
    rng = np.random.default_rng(seed)
    anchors = (fixed_anchor,) if fixed_anchor is not None else config.anchors
    pool = AnchorPool.create(anchors, config.embed_dim, rng)
    params = {k: v.astype(dtype) for k, v in init_params(pool, rng, mask_head=mask_head).items()}
    pool.embeddings = params["anchor_emb"]
    return params, pool


def _curve_csv(curve) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("step", "l_sn", "l_tf", "l_mask", "total"))
    for step, *vals in curve:
        w.writerow([step] + [repr(float(v)) for v in vals])
    return buf.getvalue().encode()


def cmd_train(args, config: Config) -> int:
    seed = config.seed if args.seed is None else args.seed
    _, images, depths, valid = load_dataset(args.data)
    if len(images) == 0:
        raise UsageError(f"{args.data}: manifest lists no scenes")
    dtype = np.float32 if args.precision == "float32" else np.float64
    params, pool = _fresh_model(config, seed, not args.no_mask_head, args.fixed_anchor, dtype)
    op = config.optimizer
    tc = TrainConfig(steps=args.steps, batch_size=op.batch_size, lr=op.lr,
                     momentum=op.momentum, k=config.k, seed=seed, grad_clip=op.grad_clip,
                     weights=config.loss_weights, log_every=args.log_every,
                     detach_mask=config.mask_gradient == "detached")
    result = train(params, images, depths, valid, pool, tc)
    ckpt = Path(args.out_checkpoint)
    save_checkpoint(ckpt, params, pool)
    loss_csv = Path(args.loss_csv) if args.loss_csv else ckpt.with_name(ckpt.name + ".loss.csv")
    atomic_write(loss_csv, _curve_csv(result.curve))
    meta = {
        "format": "anchordepth checkpoint v1",
        "steps": args.steps,
        "seed": seed,
        "precision": args.precision,
        "mask_head": not args.no_mask_head,
        "mask_gradient": config.mask_gradient,
        "anchors": [float(a) for a in pool.anchors],
        "parameter_count": parameter_count(params),
        "final_loss": result.curve[-1][4] if result.curve else None,
        "config": config.to_json(),
    }
    atomic_write(ckpt.with_name(ckpt.name + ".json"),
                 (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode())
    print(f"saved {ckpt} after {args.steps} steps")
    return EXIT_OK


# -- eval ----------------------------------------------------------------------

def _table(header, rows) -> str:
    cells = [header] + [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    line = lambda r: "  ".join(c.rjust(w) for c, w in zip(r, widths))
    return "\n".join([line(cells[0]), "  ".join("-" * w for w in widths)]
                     + [line(r) for r in cells[1:]])


def _check_compatible(params, pool, config: Config, images):
    if pool.dim != config.embed_dim:
        raise UsageError(f"checkpoint embedding dim {pool.dim} does not match config "
                         f"embed_dim {config.embed_dim}")
    cin = params["enc1.w"].shape[2]
    if images.shape[-1] != cin:
        raise UsageError(f"checkpoint expects {cin} input channels, data has {images.shape[-1]}")
    if images.shape[1] % 8 or images.shape[2] % 8:
        raise UsageError("image height and width must be multiples of 8")


def cmd_eval(args, config: Config) -> int:
    entries, images, depths, valid = load_dataset(args.data)
    caps = {"indoor": config.indoor_cap, "outdoor": config.outdoor_cap}
    if args.predictions:
        pred_entries = read_manifest(args.predictions)
        if len(pred_entries) != len(entries):
            raise UsageError("prediction manifest and data manifest list different counts")
        root = Path(args.predictions).parent
        preds = [read_depth(root / e.depth).values for e in pred_entries]
        predictor = lambda i, anchor: preds[i]
        anchors_to_try = [None]
    else:
        if not args.checkpoint:
            raise UsageError("eval needs --checkpoint or --predictions")
        params, pool = load_checkpoint(args.checkpoint, np.float32)
        _check_compatible(params, pool, config, images)
        predictor = lambda i, anchor: predict_metric(params, images[i], pool, anchor,
                                                     config.k, flip=args.flip)
        if args.anchor_sweep:
            anchors_to_try = [float(a) for a in pool.anchors]
        else:
            anchors_to_try = [args.anchor]

    header = ["image", "regime", "anchor", "cap"] + list(METRIC_NAMES) + ["count"]
    rows, summary = [], []
    for requested in anchors_to_try:
        reports = []
        for i, e in enumerate(entries):
            cap = args.cap if args.cap is not None else caps[e.spec.regime]
            anchor = cap if requested is None else requested
            if not args.predictions:
                anchor = float(select_anchor(pool, anchor).anchor)
            try:
                rep = evaluate(predictor(i, anchor), R.DepthMap(depths[i], valid[i]),
                               EvalConfig(cap, flip_average=args.flip))
            except ValueError:
                continue
            reports.append(rep)
            label = "-" if args.predictions else anchor
            rows.append([e.image, e.spec.regime, label, cap]
                        + [getattr(rep, m) for m in METRIC_NAMES] + [rep.count])
        if not reports:
            raise UsageError("no image has a valid pixel under the cap")
        agg = aggregate(reports)
        label = "matched" if requested is None else requested
        summary.append([f"ALL ({len(reports)})", "-", label,
                        "regime" if args.cap is None else args.cap]
                       + [getattr(agg, m) for m in METRIC_NAMES] + [agg.count])

    if not args.quiet:
        if not args.anchor_sweep:
            print(_table(header, rows))
            print()
        print(_table(header, summary))
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows + summary:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
        atomic_write(args.csv, buf.getvalue().encode())
    return EXIT_OK


# -- transform -----------------------------------------------------------------

def cmd_transform(args, config: Config) -> int:
    k = config.k if args.k is None else args.k
    out = Path(args.out)
    if args.mode == "normalize":
        depth = read_depth(args.depth_in)
        d = np.where(depth.valid, depth.values, 0.0)
        pair = R.normalize(d, args.anchor, k)
        mask = R.gt_near_mask(d, args.anchor)
        mask[~depth.valid] = R.MASK_UNSET
        buf = io.BytesIO()
        np.savez(buf, near=pair.near, far=pair.far, mask=mask, valid=depth.valid,
                 anchor=np.float64(args.anchor), k=np.float64(k))
        atomic_write(out, buf.getvalue())
        print(f"normalized {args.depth_in} at anchor {args.anchor} m -> {out}")
        return EXIT_OK
    try:
        with np.load(args.depth_in) as z:
            near, far, mask, valid = z["near"], z["far"], z["mask"], z["valid"]
            anchor = float(z["anchor"]) if args.anchor is None else args.anchor
            if args.k is None:
                k = float(z["k"])
    except (OSError, KeyError, ValueError) as exc:
        raise DepthFormatError(f"{args.depth_in}: not a normalized depth archive ({exc})") from None
    pair = R.NormalizedDepthPair(near, far, np.where(valid, mask, R.MASK_NEAR))
    depth = R.reproject(pair, anchor, k)
    depth[(mask == R.MASK_FAR) & (far == 0)] = R.INFINITE_DEPTH  # sky survives the round trip
    write_depth(out, R.DepthMap(np.where(valid, depth, 0.0), valid.astype(bool)))
    print(f"reprojected {args.depth_in} -> {out}")
    return EXIT_OK


# -- reconstruct ---------------------------------------------------------------

def cmd_reconstruct(args, config: Config) -> int:
    try:
        K = CameraIntrinsics(args.fx, args.fy, args.cx, args.cy)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    depth = read_depth(args.depth)
    image = read_image(args.image) if args.image else None
    cloud = backproject(depth, K, image)
    write_pointcloud(args.out, cloud)
    print(f"wrote {len(cloud.points)} points to {args.out}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="anchordepth", description="Anchor-conditioned metric depth toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV}, else built-in)")
    p.add_argument("--threads", type=_positive(int), default=1,
                   help="upper bound on numeric library threads (default 1)")
    p.add_argument("--seed", type=_nonneg_int, help="override the config seed")
    p.add_argument("-v", "--verbose", action="store_true")
    # also accepted after the subcommand name
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=_positive(int), default=argparse.SUPPRESS)
    common.add_argument("--seed", type=_nonneg_int, default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic dataset with a manifest")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=_positive(int), required=True)
    g.add_argument("--mix", type=_unit_interval, default=0.5, help="indoor fraction")
    g.add_argument("--depth-format", choices=("pfm", "png16"), default="pfm")
    g.add_argument("--png-scale", type=_positive(float), default=0.01,
                   help="meters per PNG16 unit (default 0.01)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="train the toy network on a manifest")
    t.add_argument("--data", required=True, help="manifest.tsv")
    t.add_argument("--out-checkpoint", required=True)
    t.add_argument("--steps", type=_nonneg_int, default=5000)
    t.add_argument("--loss-csv", help="default: <checkpoint>.loss.csv")
    t.add_argument("--precision", choices=("float32", "float64"), default="float32")
    t.add_argument("--no-mask-head", action="store_true", help="ablation: naive truncation fusion")
    t.add_argument("--fixed-anchor", type=_positive(float), help="ablation: single-anchor pool")
    t.add_argument("--log-every", type=_nonneg_int, default=100)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="score predictions against ground truth")
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint")
    e.add_argument("--predictions", help="manifest whose depth files are predictions")
    e.add_argument("--anchor", type=_positive(float),
                   help="requested anchor in meters (default: the cap)")
    e.add_argument("--anchor-sweep", action="store_true", help="aggregate for every pool anchor")
    e.add_argument("--cap", type=_positive(float), help="evaluation cap (default: per regime)")
    e.add_argument("--flip", action="store_true", help="flip-averaged prediction")
    e.add_argument("--csv")
    e.add_argument("--quiet", action="store_true")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("transform", parents=[common], help="normalize a depth map or reproject it back")
    x.add_argument("--depth-in", required=True)
    x.add_argument("--mode", choices=("normalize", "reproject"), required=True)
    x.add_argument("--anchor", type=_positive(float))
    x.add_argument("--k", type=_positive(float), help="taper rate (default from config)")
    x.add_argument("--out", required=True, help=".npz for normalize, depth file for reproject")
    x.set_defaults(func=cmd_transform)

    r = sub.add_parser("reconstruct", parents=[common], help="back-project a depth map to a PLY point cloud")
    r.add_argument("--depth", required=True)
    r.add_argument("--image", help="optional PF image for vertex colors")
    for name in ("fx", "fy", "cx", "cy"):
        r.add_argument(f"--{name}", type=float, required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reconstruct)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    if args.command == "transform" and args.mode == "normalize" and args.anchor is None:
        parser.error("transform --mode normalize needs --anchor")
    try:
        config = load_config(args.config)
        with threadpool_limits(limits=args.threads):
            return args.func(args, config)
    except (UsageError, ConfigError) as exc:
        print(f"anchordepth: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"anchordepth: training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, DepthFormatError, CheckpointError, ValueError) as exc:
        print(f"anchordepth: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
