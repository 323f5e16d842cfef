"""Procedural indoor/outdoor scenes with exact ground-truth depth.

A pinhole camera, pitched down over a ground plane, ray-casts a handful of
boxes and spheres.  Indoor scenes are closed by a back wall and ceiling;
outdoor scenes leave the region above the horizon as sky at infinite depth.

The rendered image is made depth-informative in two ways: Lambertian shading
under a fixed directional light, and a blue-grey atmospheric haze whose
transmittance ``1 / (1 + d / HAZE_DISTANCE)`` falls off with metric depth.
Surfaces are grey, so the haze shows up as a colour shift.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .reconstruct import CameraIntrinsics
from .repr_core import INFINITE_DEPTH, DepthMap

INDOOR, OUTDOOR = "indoor", "outdoor"
DEFAULT_RANGES = {INDOOR: (0.5, 10.0), OUTDOOR: (2.0, 150.0)}
DEFAULT_SKY = {INDOOR: 0.0, OUTDOOR: 0.15}

HAZE_DISTANCE = 10.0
FOG_COLOR = np.array([0.55, 0.70, 0.95])
LIGHT_DIR = np.array([-0.3, -0.8, -0.5]) / np.linalg.norm([-0.3, -0.8, -0.5])
AMBIENT = 0.25
TEXTURE_NOISE = 0.03


@dataclass(frozen=True)
class SceneSpec:
    regime: str = INDOOR
    depth_range: tuple = None
    sky_fraction: float = None
    primitive_count: int = 6
    seed: int = 0
    width: int = 64
    height: int = 64
    focal: float = 56.0

    def __post_init__(self):
        if self.regime not in (INDOOR, OUTDOOR):
            raise ValueError(f"regime must be 'indoor' or 'outdoor', got {self.regime!r}")
        if self.depth_range is None:
            object.__setattr__(self, "depth_range", DEFAULT_RANGES[self.regime])
        if self.sky_fraction is None:
            object.__setattr__(self, "sky_fraction", DEFAULT_SKY[self.regime])
        lo, hi = map(float, self.depth_range)
        object.__setattr__(self, "depth_range", (lo, hi))
        if not 0 < lo < hi:
            raise ValueError(f"depth range must satisfy 0 < min < max, got {self.depth_range}")
        if not 0 <= self.sky_fraction <= 0.5:
            raise ValueError("sky_fraction must lie in [0, 0.5]")
        if self.regime == INDOOR and self.sky_fraction != 0:
            raise ValueError("indoor scenes have no sky")
        if self.primitive_count < 0:
            raise ValueError("primitive_count must be non-negative")
        if self.width < 1 or self.height < 1 or self.focal <= 0:
            raise ValueError("invalid image size or focal length")

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.focal, self.focal,
                                (self.width - 1) / 2.0, (self.height - 1) / 2.0)


@dataclass
class Scene:
    """Geometry of one scene in camera-centred world coordinates (Y down)."""

    spec: SceneSpec
    pitch: float
    camera_height: float
    ceiling: float | None
    back_wall: float | None
    spheres: list = field(default_factory=list)   # (center, radius, albedo)
    boxes: list = field(default_factory=list)     # (lo, hi, albedo)
    ground_albedo: float = 0.6
    wall_albedo: float = 0.8


def _pixel_rays(spec: SceneSpec, pitch: float) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalised world-frame rays with unit camera-frame z, so the ray
    parameter of a hit equals its z-depth.  Returns (rays, camera y-offsets)."""
    K = spec.intrinsics
    v, u = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    xc = (u - K.cx) / K.fx
    yc = (v - K.cy) / K.fy
    s, c = np.sin(pitch), np.cos(pitch)
    rays = np.stack([xc, yc * c + s, -yc * s + c], axis=-1)
    return rays, yc


def build_scene(spec: SceneSpec) -> Scene:
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.depth_range
    K = spec.intrinsics
    if spec.regime == OUTDOOR:
        h = rng.uniform(1.5, 3.0)
        # horizon row sits at sky_fraction of the image height
        pitch = np.arctan((K.cy - spec.sky_fraction * spec.height) / K.fy)
        ceiling, wall = None, None
        z_lo, z_hi, size = max(lo, 3.0), min(hi, 120.0), (0.03, 0.1)
    else:
        h = rng.uniform(1.2, 1.8)
        pitch = np.deg2rad(rng.uniform(15.0, 30.0))
        ceiling = h - rng.uniform(2.6, 3.2)
        wall = rng.uniform(0.6, 0.95) * hi
        z_lo, z_hi, size = max(lo, 0.8), 0.85 * wall, (0.1, 0.3)
    scene = Scene(spec, pitch, h, ceiling, wall,
                  ground_albedo=rng.uniform(0.4, 0.8), wall_albedo=rng.uniform(0.5, 0.9))
    half_fov = K.cx / K.fx
    for _ in range(spec.primitive_count):
        z = np.exp(rng.uniform(np.log(z_lo), np.log(z_hi)))
        x = rng.uniform(-0.9, 0.9) * half_fov * z
        extent = rng.uniform(*size) * z
        albedo = rng.uniform(0.35, 0.95)
        if rng.random() < 0.5:
            scene.spheres.append((np.array([x, h - extent, z]), extent, albedo))
        else:
            w, d = extent * rng.uniform(0.6, 1.6, size=2)
            top = h - extent * rng.uniform(0.8, 3.0)
            scene.boxes.append((np.array([x - w, top, z - d]), np.array([x + w, h, z + d]), albedo))
    return scene


def _plane_hits(rays, axis, value):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = value / rays[..., axis]
    return np.where(t > 0, t, np.inf)


def _sphere_hits(rays, center, radius):
    a = np.einsum("...i,...i->...", rays, rays)
    b = -2.0 * rays @ center
    c = center @ center - radius ** 2
    disc = b * b - 4 * a * c
    with np.errstate(invalid="ignore"):
        t = (-b - np.sqrt(disc)) / (2 * a)
    return np.where((disc >= 0) & (t > 0), t, np.inf)


def _box_hits(rays, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = lo / rays
        t2 = hi / rays
    tmin = np.nanmax(np.minimum(t1, t2), axis=-1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=-1)
    hit = (tmax >= tmin) & (tmin > 0)
    return np.where(hit, tmin, np.inf)


def primitive_depths(scene: Scene) -> tuple[np.ndarray, list]:
    """Per-primitive z-depth layers, shape (P, H, W), ``inf`` where missed."""
    rays, _ = _pixel_rays(scene.spec, scene.pitch)
    layers, kinds = [], []
    layers.append(_plane_hits(rays, 1, scene.camera_height))
    kinds.append(("ground", None))
    if scene.ceiling is not None:
        layers.append(_plane_hits(rays, 1, scene.ceiling))
        kinds.append(("ceiling", None))
    if scene.back_wall is not None:
        layers.append(_plane_hits(rays, 2, scene.back_wall))
        kinds.append(("wall", None))
    for i, (center, radius, _) in enumerate(scene.spheres):
        layers.append(_sphere_hits(rays, center, radius))
        kinds.append(("sphere", i))
    for i, (lo, hi, _) in enumerate(scene.boxes):
        layers.append(_box_hits(rays, lo, hi))
        kinds.append(("box", i))
    return np.stack(layers), kinds


def _normals_and_albedo(scene, rays, depth, layer_id, kinds):
    hshape = depth.shape
    normals = np.zeros(hshape + (3,))
    albedo = np.zeros(hshape)
    points = rays * np.where(np.isfinite(depth), depth, 0.0)[..., None]
    for k, (kind, i) in enumerate(kinds):
        sel = layer_id == k
        if not sel.any():
            continue
        if kind == "ground":
            normals[sel] = (0.0, -1.0, 0.0)
            albedo[sel] = scene.ground_albedo
        elif kind == "ceiling":
            normals[sel] = (0.0, 1.0, 0.0)
            albedo[sel] = scene.wall_albedo
        elif kind == "wall":
            normals[sel] = (0.0, 0.0, -1.0)
            albedo[sel] = scene.wall_albedo
        elif kind == "sphere":
            center, radius, a = scene.spheres[i]
            normals[sel] = (points[sel] - center) / radius
            albedo[sel] = a
        else:
            lo, hi, a = scene.boxes[i]
            p = points[sel]
            # face whose plane the hit point lies closest to
            dist = np.concatenate([np.abs(p - lo), np.abs(p - hi)], axis=-1)
            face = np.argmin(dist, axis=-1)
            n = np.zeros_like(p)
            n[np.arange(len(p)), face % 3] = np.where(face < 3, -1.0, 1.0)
            normals[sel] = n
            albedo[sel] = a
    return normals, albedo


def render(scene: Scene) -> tuple[np.ndarray, DepthMap]:
    spec = scene.spec
    rays, _ = _pixel_rays(spec, scene.pitch)
    layers, kinds = primitive_depths(scene)
    layer_id = np.argmin(layers, axis=0)
    depth = np.min(layers, axis=0)
    sky = ~np.isfinite(depth)
    lo, hi = spec.depth_range
    if spec.sky_fraction > 0:
        depth = np.where(sky, INFINITE_DEPTH, np.clip(depth, lo, hi))
    else:
        # missed rays see a backdrop at the far end of the range
        depth = np.clip(depth, lo, hi)
    layer_id = np.where(sky, -1, layer_id)

    normals, albedo = _normals_and_albedo(scene, rays, depth, layer_id, kinds)
    shade = AMBIENT + (1 - AMBIENT) * np.clip(normals @ LIGHT_DIR, 0.0, None)
    noise = np.random.default_rng([spec.seed, 1]).normal(0.0, TEXTURE_NOISE, depth.shape)
    grey = np.where(layer_id >= 0, albedo * shade, scene.wall_albedo) + noise
    transmittance = 1.0 / (1.0 + depth / HAZE_DISTANCE)
    image = transmittance[..., None] * grey[..., None] + (1 - transmittance[..., None]) * FOG_COLOR
    return np.clip(image, 0.0, 1.0), DepthMap(depth, np.ones(depth.shape, bool))


def generate_scene(spec: SceneSpec) -> tuple[np.ndarray, DepthMap]:
    """Render ``(image, depth)`` for a spec; identical for identical specs."""
    return render(build_scene(spec))


def regime_schedule(n: int, mix: float) -> list[str]:
    """Deterministic interleaving with exactly ``round-down(n * mix)`` indoor scenes."""
    if not 0 <= mix <= 1:
        raise ValueError("mix must lie in [0, 1]")
    return [INDOOR if np.floor((i + 1) * mix) > np.floor(i * mix) else OUTDOOR
            for i in range(n)]


def dataset_specs(n: int, mix: float = 0.5, seed: int = 0, size: int = 64,
                  primitives=(3, 12)) -> list[SceneSpec]:
    if n < 1:
        raise ValueError("dataset needs at least one scene")
    ss = np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss)
    children = ss.spawn(n)
    specs = []
    for regime, child in zip(regime_schedule(n, mix), children):
        specs.append(SceneSpec(
            regime=regime,
            primitive_count=int(rng.integers(primitives[0], primitives[1] + 1)),
            seed=int(child.generate_state(1)[0]),
            width=size, height=size))
    return specs


def generate_dataset(n: int, mix: float = 0.5, seed: int = 0,
                     size: int = 64) -> Iterator[tuple[SceneSpec, np.ndarray, DepthMap]]:
    for spec in dataset_specs(n, mix, seed, size):
        image, depth = generate_scene(spec)
        yield spec, image, depth
