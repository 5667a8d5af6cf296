"""Pinhole camera model, metric depth frames, and 2D<->3D reprojection.

All geometry is in millimeters, camera coordinates: x right, y down,
z along the optical axis. Depth images store z (not ray length), with
0 reserved as the "no measurement" sentinel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEPTH_SENTINEL = 0
MAX_DEPTH_MM = 10_000.0


@dataclass(frozen=True)
class CameraIntrinsics:
    """Focal lengths and principal point, in pixels.

    With c_u = c_v = 0 the reprojection reduces to the plain
    (u/f_u * D, v/f_v * D, D) form; loaders default the principal
    point to the image center because real sensors are off-center.
    """

    f_u: float
    f_v: float
    c_u: float = 0.0
    c_v: float = 0.0

    def __post_init__(self):
        if not (self.f_u > 0 and self.f_v > 0):
            raise ValueError(f"focal lengths must be positive, got ({self.f_u}, {self.f_v})")

    @classmethod
    def centered(cls, f_u: float, f_v: float, width: int, height: int) -> "CameraIntrinsics":
        return cls(f_u, f_v, (width - 1) / 2.0, (height - 1) / 2.0)


@dataclass(frozen=True)
class DepthFrame:
    """A single depth image bound to its intrinsics.

    `depth` is a read-only float64 (height, width) array in millimeters;
    entries equal to DEPTH_SENTINEL carry no measurement.
    """

    depth: np.ndarray
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        depth = np.ascontiguousarray(np.asarray(self.depth, dtype=np.float64))
        if depth.ndim != 2:
            raise ValueError(f"depth must be 2D (height, width), got shape {depth.shape}")
        valid = depth != DEPTH_SENTINEL
        if valid.any():
            vals = depth[valid]
            if not ((vals > 0).all() and (vals < MAX_DEPTH_MM).all()):
                raise ValueError("non-sentinel depth values must lie in (0, 10000) mm")
        depth.setflags(write=False)
        object.__setattr__(self, "depth", depth)
        c = self.intrinsics
        if not (0 <= c.c_u < self.width and 0 <= c.c_v < self.height):
            raise ValueError("principal point must lie inside the frame")

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    def valid_mask(self) -> np.ndarray:
        return self.depth != DEPTH_SENTINEL


def reproject(frame: DepthFrame) -> np.ndarray:
    """Lift every measured pixel into 3D camera coordinates.

    Returns an (n, 3) float64 array with one row per non-sentinel pixel,
    in row-major pixel order:

        (x, y, z) = ((u - c_u)/f_u * D,  (v - c_v)/f_v * D,  D)

    Sentinel pixels are skipped, so z equals the source depth exactly.
    """
    mask = frame.valid_mask()
    v, u = np.nonzero(mask)
    d = frame.depth[v, u]
    c = frame.intrinsics
    x = (u - c.c_u) / c.f_u * d
    y = (v - c.c_v) / c.f_v * d
    return np.column_stack([x, y, d])


def project(point: np.ndarray, intrinsics: CameraIntrinsics) -> tuple[float, float]:
    """Project a 3D camera-space point to pixel coordinates (u, v).

    Exact inverse of `reproject` for points in front of the camera.
    Raises ValueError for z <= 0 (point behind or on the camera plane).
    """
    x, y, z = float(point[0]), float(point[1]), float(point[2])
    if z <= 0:
        raise ValueError(f"cannot project point behind camera (z={z})")
    return (x / z * intrinsics.f_u + intrinsics.c_u,
            y / z * intrinsics.f_v + intrinsics.c_v)


def project_points(points: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Vectorized `project` for an (n, 3) array; returns (n, 2) pixels."""
    points = np.asarray(points, dtype=np.float64)
    z = points[:, 2]
    if (z <= 0).any():
        raise ValueError("cannot project points behind camera (z <= 0)")
    u = points[:, 0] / z * intrinsics.f_u + intrinsics.c_u
    v = points[:, 1] / z * intrinsics.f_v + intrinsics.c_v
    return np.column_stack([u, v])
