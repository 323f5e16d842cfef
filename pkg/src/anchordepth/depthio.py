"""Depth/image file formats and dataset manifests.

PFM
    ``Pf`` (one channel) or ``PF`` (three channels) ASCII header, then
    ``width height``, then a scale whose sign gives the byte order (negative
    means little-endian), then raw float32 rows from bottom to top.  Depth
    maps are written little-endian.  Infinite depth is stored as ``+inf`` and
    pixels without ground truth as ``NaN``.
PNG16
    Single-channel 16-bit PNG with a ``depth_scale`` text chunk giving meters
    per unit.  The value 0 means infinite depth; finite depths must quantize
    to 1..65535.

All writers go through `atomic_write`, so an interrupted run never leaves a
truncated file behind.
"""
from __future__ import annotations

import io
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, PngImagePlugin

from .reconstruct import CameraIntrinsics
from .repr_core import INFINITE_DEPTH, DepthMap
from .scenegen import SceneSpec

MAX_DIM = 1 << 16
MANIFEST_HEADER = "# anchordepth manifest v1"
MANIFEST_FIELDS = ("image", "depth", "regime", "depth_min", "depth_max", "sky_fraction",
                   "primitive_count", "seed", "width", "height", "fx", "fy", "cx", "cy")


class DepthFormatError(ValueError):
    pass


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- PFM ---------------------------------------------------------------------

def encode_pfm(array: np.ndarray) -> bytes:
    a = np.asarray(array)
    if a.ndim == 2:
        tag = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        tag = b"PF"
    else:
        raise DepthFormatError(f"PFM holds (H, W) or (H, W, 3) arrays, got {a.shape}")
    h, w = a.shape[:2]
    header = tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n"
    return header + np.ascontiguousarray(a[::-1], dtype="<f4").tobytes()


def decode_pfm(data: bytes, name: str = "<pfm>") -> np.ndarray:
    buf = io.BytesIO(data)
    try:
        tag = buf.readline().strip()
        dims = buf.readline().split()
        scale = float(buf.readline().strip())
        w, h = int(dims[0]), int(dims[1])
    except (ValueError, IndexError) as exc:
        raise DepthFormatError(f"{name}: malformed PFM header") from exc
    if tag not in (b"Pf", b"PF") or len(dims) != 2:
        raise DepthFormatError(f"{name}: malformed PFM header")
    if not (0 < w < MAX_DIM and 0 < h < MAX_DIM):
        raise DepthFormatError(f"{name}: PFM dimensions {w}x{h} out of range")
    if scale == 0 or not np.isfinite(scale):
        raise DepthFormatError(f"{name}: PFM scale must be non-zero")
    channels = 3 if tag == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    raw = buf.read()
    expected = w * h * channels * 4
    if len(raw) != expected:
        raise DepthFormatError(f"{name}: expected {expected} bytes of raster, found {len(raw)}")
    a = np.frombuffer(raw, dtype=dtype).reshape((h, w, channels) if channels == 3 else (h, w))
    return a[::-1].astype(np.float32)


def write_pfm(path, array: np.ndarray) -> None:
    atomic_write(path, encode_pfm(array))


def read_pfm(path) -> np.ndarray:
    return decode_pfm(Path(path).read_bytes(), str(path))


# -- PNG16 -------------------------------------------------------------------

def encode_png16(depth: DepthMap, scale: float) -> bytes:
    if not scale > 0:
        raise DepthFormatError("PNG16 depth scale must be positive")
    if not depth.valid.all():
        raise DepthFormatError("PNG16 cannot store pixels without ground truth")
    v = depth.values
    finite = np.isfinite(v)
    q = np.zeros(v.shape, dtype=np.int64)
    q[finite] = np.round(v[finite] / scale)
    if (q[finite] < 1).any():
        raise DepthFormatError("finite depth rounds to 0, which PNG16 reserves for infinity")
    if (q > 65535).any():
        raise DepthFormatError(f"depth exceeds 16-bit range at scale {scale}")
    info = PngImagePlugin.PngInfo()
    info.add_text("depth_scale", repr(float(scale)))
    out = io.BytesIO()
    Image.fromarray(q.astype(np.uint16)).save(out, format="PNG", pnginfo=info)
    return out.getvalue()


def decode_png16(data: bytes, name: str = "<png>") -> tuple[DepthMap, float]:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise DepthFormatError(f"{name}: unreadable PNG") from exc
    if img.mode not in ("I;16", "I;16B", "I;16L", "I"):
        raise DepthFormatError(f"{name}: unsupported PNG mode {img.mode}; need 16-bit grey")
    text = getattr(img, "text", {}) or {}
    if "depth_scale" not in text:
        raise DepthFormatError(f"{name}: missing depth_scale text chunk")
    scale = float(text["depth_scale"])
    if not scale > 0:
        raise DepthFormatError(f"{name}: depth_scale must be positive")
    q = np.asarray(img, dtype=np.int64)
    values = np.where(q == 0, INFINITE_DEPTH, q * scale)
    return DepthMap(values, np.ones(q.shape, bool)), scale


# -- depth maps ----------------------------------------------------------------

def _format_for(path, fmt):
    if fmt is not None:
        return fmt.upper()
    ext = Path(path).suffix.lower()
    if ext == ".pfm":
        return "PFM"
    if ext == ".png":
        return "PNG16"
    raise DepthFormatError(f"cannot infer depth format from {path}")


def write_depth(path, depth: DepthMap, fmt: str | None = None, scale: float = 0.001) -> None:
    fmt = _format_for(path, fmt)
    if fmt == "PFM":
        values = np.where(depth.valid, depth.values, np.nan)
        write_pfm(path, values)
    elif fmt == "PNG16":
        atomic_write(path, encode_png16(depth, scale))
    else:
        raise DepthFormatError(f"unsupported depth format {fmt}")


def read_depth(path, fmt: str | None = None) -> DepthMap:
    fmt = _format_for(path, fmt)
    if fmt == "PFM":
        a = read_pfm(path)
        if a.ndim != 2:
            raise DepthFormatError(f"{path}: depth PFM must have one channel")
        return DepthMap(a.astype(np.float64), ~np.isnan(a))
    if fmt == "PNG16":
        return decode_png16(Path(path).read_bytes(), str(path))[0]
    raise DepthFormatError(f"unsupported depth format {fmt}")


def write_image(path, image: np.ndarray) -> None:
    write_pfm(path, np.asarray(image, dtype=np.float32))


def read_image(path) -> np.ndarray:
    a = read_pfm(path)
    if a.ndim != 3:
        raise DepthFormatError(f"{path}: image PFM must have three channels")
    return a


# -- manifests -----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    image: str
    depth: str
    spec: SceneSpec

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return self.spec.intrinsics


def _entry_line(e: ManifestEntry) -> str:
    s, K = e.spec, e.spec.intrinsics
    vals = (e.image, e.depth, s.regime, repr(s.depth_range[0]), repr(s.depth_range[1]),
            repr(float(s.sky_fraction)), str(s.primitive_count), str(s.seed),
            str(s.width), str(s.height), repr(K.fx), repr(K.fy), repr(K.cx), repr(K.cy))
    return "\t".join(vals)


def write_manifest(path, entries) -> None:
    lines = [MANIFEST_HEADER, "# " + "\t".join(MANIFEST_FIELDS)]
    lines += [_entry_line(e) for e in entries]
    atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_manifest(path, check_files: bool = True) -> list[ManifestEntry]:
    """Parse a manifest; image/depth paths are relative to its directory.

    Raises FileNotFoundError naming the first missing referenced file.
    """
    path = Path(path)
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != len(MANIFEST_FIELDS):
                raise ValueError(f"{path}:{lineno}: expected {len(MANIFEST_FIELDS)} "
                                 f"tab-separated fields, got {len(parts)}")
            row = dict(zip(MANIFEST_FIELDS, parts))
            try:
                spec = SceneSpec(regime=row["regime"],
                                 depth_range=(float(row["depth_min"]), float(row["depth_max"])),
                                 sky_fraction=float(row["sky_fraction"]),
                                 primitive_count=int(row["primitive_count"]),
                                 seed=int(row["seed"]), width=int(row["width"]),
                                 height=int(row["height"]), focal=float(row["fx"]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            entry = ManifestEntry(row["image"], row["depth"], spec)
            if check_files:
                for rel in (entry.image, entry.depth):
                    if not (path.parent / rel).exists():
                        raise FileNotFoundError(f"{path}:{lineno}: missing file {path.parent / rel}")
            entries.append(entry)
    return entries


def load_dataset(manifest_path):
    """Read every pair listed in a manifest into stacked arrays.

    Returns ``(entries, images float32 (N,H,W,3), depths float64 (N,H,W), valid)``.
    """
    manifest_path = Path(manifest_path)
    entries = read_manifest(manifest_path)
    root = manifest_path.parent
    images, depths, valid = [], [], []
    for e in entries:
        images.append(read_image(root / e.image))
        d = read_depth(root / e.depth)
        depths.append(d.values)
        valid.append(d.valid)
    if not entries:
        return entries, np.zeros((0, 0, 0, 3), np.float32), np.zeros((0, 0, 0)), np.zeros((0, 0, 0), bool)
    return entries, np.stack(images), np.stack(depths), np.stack(valid)
