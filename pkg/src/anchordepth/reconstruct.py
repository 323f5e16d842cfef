"""Pinhole back-projection of depth maps to point clouds, and ASCII PLY I/O."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .repr_core import DepthMap


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def project(self, points: np.ndarray) -> np.ndarray:
        """Pixel coordinates ``(u, v)`` of camera-frame points."""
        points = np.asarray(points, dtype=np.float64)
        z = points[:, 2]
        return np.stack([points[:, 0] * self.fx / z + self.cx,
                         points[:, 1] * self.fy / z + self.cy], axis=-1)


@dataclass
class PointCloud:
    points: np.ndarray
    colors: np.ndarray | None = None
    pixels: np.ndarray | None = None

    def __len__(self):
        return len(self.points)


def backproject(depth, K: CameraIntrinsics, image: np.ndarray | None = None) -> PointCloud:
    """Lift every valid, finite depth pixel to ``((u - cx) z / fx, (v - cy) z / fy, z)``.

    Pixel centres sit at integer ``(u, v)``.  Infinite-depth pixels are skipped.
    """
    if not isinstance(depth, DepthMap):
        depth = DepthMap(depth)
    keep = depth.finite
    v, u = np.nonzero(keep)
    z = depth.values[keep]
    pts = np.stack([(u - K.cx) * z / K.fx, (v - K.cy) * z / K.fy, z], axis=-1)
    colors = None
    if image is not None:
        colors = np.clip(np.round(np.asarray(image)[keep] * 255), 0, 255).astype(np.uint8)
    return PointCloud(pts, colors, np.stack([u, v], axis=-1))


def write_pointcloud(path, cloud: PointCloud) -> None:
    from .depthio import atomic_write

    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
             "property double x", "property double y", "property double z"]
    if cloud.colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    for i, p in enumerate(cloud.points):
        row = " ".join(repr(float(c)) for c in p)
        if cloud.colors is not None:
            row += " " + " ".join(str(int(c)) for c in cloud.colors[i])
        lines.append(row)
    atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_pointcloud(path) -> PointCloud:
    with open(path, "r", encoding="ascii") as f:
        if f.readline().strip() != "ply":
            raise ValueError(f"{path}: not a PLY file")
        count, props = 0, []
        for line in f:
            parts = line.split()
            if parts[:2] == ["element", "vertex"]:
                count = int(parts[2])
            elif parts and parts[0] == "property":
                props.append(parts[-1])
            elif parts == ["end_header"]:
                break
        rows = [f.readline().split() for _ in range(count)]
    data = np.array(rows, dtype=np.float64).reshape(count, len(props))
    xyz = data[:, [props.index(c) for c in "xyz"]]
    colors = None
    if "red" in props:
        colors = data[:, [props.index(c) for c in ("red", "green", "blue")]].astype(np.uint8)
    return PointCloud(xyz, colors)
