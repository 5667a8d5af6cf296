"""Analytic depth rendering of capsule hands and background synthesis.

The renderer ray-casts the skeleton's bone capsules per pixel, which
keeps synthesis self-contained and exactly invertible for tests: train
and test imagery come from the same process, so correctness claims stay
internal to the renderer. Per-joint visibility falls out of the z-buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, DepthFrame, DEPTH_SENTINEL
from .errors import VoxhandError
from .kinematics import (HandPose, HandSkeleton, PoseParams, capsule_segments,
                         default_skeleton, fk_batch, sample_pose)
from .skeleton import adjacent_bone_radii


class RenderError(VoxhandError):
    """The subject produced no pixels (outside the frustum or depth range)."""


@dataclass(frozen=True)
class RenderConfig:
    intrinsics: CameraIntrinsics
    width: int = 160
    height: int = 120
    depth_range: tuple[float, float] = (150.0, 2500.0)
    visibility_margin: float = 3.0   # mm beyond the bone radius along the ray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        near, far = self.depth_range
        if not (0 < near < far):
            raise ValueError("depth range must be positive and increasing")

    @classmethod
    def default(cls, width: int = 160, height: int = 120) -> "RenderConfig":
        f = 1.2 * width  # ~45 degree horizontal field of view
        return cls(intrinsics=CameraIntrinsics.centered(f, f, width, height),
                   width=width, height=height)


@dataclass
class SynthSample:
    """A rendered frame with its generating parameters and full annotation."""

    frame: DepthFrame
    pose: HandPose
    params: PoseParams


def _ray_directions(config: RenderConfig) -> np.ndarray:
    c = config.intrinsics
    u = np.arange(config.width, dtype=np.float64)
    v = np.arange(config.height, dtype=np.float64)
    du = (u - c.c_u) / c.f_u
    dv = (v - c.c_v) / c.f_v
    dirs = np.empty((config.height, config.width, 3))
    dirs[..., 0] = du[None, :]
    dirs[..., 1] = dv[:, None]
    dirs[..., 2] = 1.0
    return dirs.reshape(-1, 3)


def _ray_capsule_depth(dirs: np.ndarray, a: np.ndarray, b: np.ndarray,
                       radius: float) -> np.ndarray:
    """Smallest positive ray parameter t (== depth, since dir_z = 1) where
    t*dir enters the capsule [a, b] of the given radius; inf for misses."""
    t_best = np.full(len(dirs), np.inf)

    axis = b - a
    uu = float(axis @ axis)
    if uu > 1e-12:
        u_hat = axis / math.sqrt(uu)
        d_u = dirs @ u_hat
        a_u = float(a @ u_hat)
        dd = np.einsum("ij,ij->i", dirs, dirs)
        da = dirs @ a
        aa = float(a @ a)
        # |t d - a|^2 - ((t d - a).u)^2 = r^2
        qa = dd - d_u * d_u
        qb = -2.0 * (da - d_u * a_u)
        qc = aa - a_u * a_u - radius * radius
        disc = qb * qb - 4.0 * qa * qc
        valid = (disc >= 0) & (qa > 1e-12)
        sq = np.sqrt(np.where(valid, disc, 0.0))
        t = np.where(valid, (-qb - sq) / (2.0 * qa), np.inf)
        s = t * d_u - a_u  # position along the axis, in mm
        body = valid & (t > 0) & (s >= 0) & (s <= math.sqrt(uu))
        t_best = np.where(body, t, t_best)

    for center in (a, b):
        dd = np.einsum("ij,ij->i", dirs, dirs)
        dc = dirs @ center
        cc = float(center @ center)
        disc = dc * dc - dd * (cc - radius * radius)
        valid = disc >= 0
        sq = np.sqrt(np.where(valid, disc, 0.0))
        t = np.where(valid, (dc - sq) / dd, np.inf)
        hit = valid & (t > 0)
        t_best = np.minimum(t_best, np.where(hit, t, np.inf))
    return t_best


def _capsule_pixel_rect(a, b, r, config: RenderConfig):
    """Conservative pixel bounding box of a capsule, or None if it may
    reach behind the camera (caller falls back to the full frame)."""
    c = config.intrinsics
    z_min = min(a[2], b[2]) - r
    if z_min <= 1.0:
        return None
    us, vs = [], []
    for p in (a, b):
        us.append(p[0] / p[2] * c.f_u + c.c_u)
        vs.append(p[1] / p[2] * c.f_v + c.c_v)
    pad_u = r / z_min * c.f_u * 1.5 + 2.0
    pad_v = r / z_min * c.f_v * 1.5 + 2.0
    u0 = max(int(np.floor(min(us) - pad_u)), 0)
    u1 = min(int(np.ceil(max(us) + pad_u)) + 1, config.width)
    v0 = max(int(np.floor(min(vs) - pad_v)), 0)
    v1 = min(int(np.ceil(max(vs) + pad_v)) + 1, config.height)
    if u0 >= u1 or v0 >= v1:
        return (0, 0, 0, 0)
    return (u0, u1, v0, v1)


def render_zbuffer(theta: PoseParams, config: RenderConfig,
                   skeleton: HandSkeleton) -> np.ndarray:
    """Depth of the nearest capsule surface per pixel; inf where none.

    Each capsule is only intersected against the rays inside its projected
    bounding box, which keeps rendering linear in covered pixels.
    """
    dirs = _ray_directions(config).reshape(config.height, config.width, 3)
    starts, ends, radii, _ = capsule_segments(theta, skeleton)
    z = np.full((config.height, config.width), np.inf)
    for a, b, r in zip(starts, ends, radii):
        rect = _capsule_pixel_rect(a, b, float(r), config)
        if rect == (0, 0, 0, 0):
            continue
        if rect is None:
            u0, u1, v0, v1 = 0, config.width, 0, config.height
        else:
            u0, u1, v0, v1 = rect
        sub = dirs[v0:v1, u0:u1].reshape(-1, 3)
        t = _ray_capsule_depth(sub, a, b, float(r))
        view = z[v0:v1, u0:u1]
        np.minimum(view, t.reshape(v1 - v0, u1 - u0), out=view)
    return z


def joint_visibility(joints: np.ndarray, zbuffer: np.ndarray,
                     config: RenderConfig, skeleton: HandSkeleton,
                     scale: float = 1.0) -> np.ndarray:
    """A joint is visible when a rendered surface sits within its own bone
    radius (plus margin) in front of it along its line of sight."""
    n = len(joints)
    radii = adjacent_bone_radii(skeleton)
    visible = np.zeros(n, dtype=bool)
    for j in range(n):
        x, y, z = joints[j]
        if z <= 0:
            continue
        u = int(round(x / z * config.intrinsics.f_u + config.intrinsics.c_u))
        v = int(round(y / z * config.intrinsics.f_v + config.intrinsics.c_v))
        if not (0 <= u < config.width and 0 <= v < config.height):
            continue
        zb = zbuffer[v, u]
        if not np.isfinite(zb):
            continue
        margin = radii[j] * scale + config.visibility_margin
        visible[j] = (z - zb) <= margin and (zb - z) <= config.visibility_margin
    return visible


def render_depth(theta: PoseParams, config: RenderConfig,
                 skeleton: HandSkeleton) -> SynthSample:
    """Render a posed hand to a metric depth frame with full annotation.

    Raises RenderError if no pixel lands inside the frustum and depth range.
    """
    zbuf = render_zbuffer(theta, config, skeleton)
    near, far = config.depth_range
    zbuf = np.where((zbuf >= near) & (zbuf <= far), zbuf, np.inf)
    if not np.isfinite(zbuf).any():
        raise RenderError("hand renders no pixels inside frustum/depth range")
    depth = np.where(np.isfinite(zbuf), zbuf, DEPTH_SENTINEL)
    frame = DepthFrame(depth=depth, intrinsics=config.intrinsics)
    joints = fk_batch(theta.values[None, :], skeleton)[0]
    visible = joint_visibility(joints, zbuf, config, skeleton, theta.scale)
    return SynthSample(frame=frame,
                       pose=HandPose(joints=joints, visible=visible),
                       params=theta)


@dataclass
class GenerationStats:
    requested: int = 0
    render_retries: int = 0


DEFAULT_TRANSLATION = ((-40.0, 40.0), (-40.0, 40.0), (430.0, 650.0))


def generate_set(count: int, seed: int, config: RenderConfig,
                 skeleton: HandSkeleton,
                 overrides: dict[str, tuple[float, float]] | None = None,
                 translation_range=DEFAULT_TRANSLATION,
                 stats: GenerationStats | None = None) -> list[SynthSample]:
    """Sample, place, and render `count` hands, deterministically per seed.

    Each sample derives its own rng stream from (seed, index), so results
    are independent of generation order or parallelism. Render failures
    (subject fully outside the frustum) are resampled and counted.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if stats is None:
        stats = GenerationStats()
    stats.requested += count
    out = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        while True:
            theta = sample_pose(rng, skeleton, overrides)
            t = [rng.uniform(lo, hi) for lo, hi in translation_range]
            theta = theta.with_translation(t)
            try:
                out.append(render_depth(theta, config, skeleton))
                break
            except RenderError:
                stats.render_retries += 1
    return out


def affine_resample(frame: DepthFrame, rotation_deg: float = 0.0,
                    scale: float = 1.0,
                    translation_px: tuple[float, float] = (0.0, 0.0)) -> DepthFrame:
    """Apply a similarity transform to a depth image with nearest-neighbor
    resampling; pixels pulled from outside the source become sentinel.

    The forward map takes source pixel p to scale*R(p - center) + center
    + translation, so a pure (5, 0) translation gives out(u, v) =
    in(u - 5, v).
    """
    h, w = frame.height, frame.width
    cu, cv = (w - 1) / 2.0, (h - 1) / 2.0
    phi = math.radians(rotation_deg)
    cos_p, sin_p = math.cos(phi), math.sin(phi)
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    du = uu - cu - translation_px[0]
    dv = vv - cv - translation_px[1]
    inv_scale = 1.0 / scale
    su = (cos_p * du + sin_p * dv) * inv_scale + cu
    sv = (-sin_p * du + cos_p * dv) * inv_scale + cv
    si = np.rint(su).astype(np.int64)
    sj = np.rint(sv).astype(np.int64)
    inside = (si >= 0) & (si < w) & (sj >= 0) & (sj < h)
    out = np.full((h, w), float(DEPTH_SENTINEL))
    out[inside] = frame.depth[sj[inside], si[inside]]
    return DepthFrame(depth=out, intrinsics=frame.intrinsics)


def augment_background(scene: DepthFrame, rng: np.random.Generator,
                       max_rotation_deg: float = 15.0,
                       scale_range: tuple[float, float] = (0.9, 1.1),
                       max_translation_frac: float = 0.1) -> DepthFrame:
    """Random similarity warp of a background depth image (quasi-synthetic
    augmentation): rotation up to +-15 degrees, scale 0.9-1.1, translation
    up to +-10% of the frame."""
    rot = rng.uniform(-max_rotation_deg, max_rotation_deg)
    s = rng.uniform(*scale_range)
    tu = rng.uniform(-max_translation_frac, max_translation_frac) * scene.width
    tv = rng.uniform(-max_translation_frac, max_translation_frac) * scene.height
    return affine_resample(scene, rotation_deg=rot, scale=s, translation_px=(tu, tv))


def composite(hand: SynthSample, background: DepthFrame) -> SynthSample:
    """Merge a rendered hand into a background: nearer surface wins per
    pixel, and joint visibility is recomputed against the merged z-buffer."""
    frame = hand.frame
    if background.depth.shape != frame.depth.shape:
        raise ValueError("hand and background frame sizes differ")
    if background.intrinsics != frame.intrinsics:
        raise ValueError("hand and background intrinsics differ")
    a = np.where(frame.depth == DEPTH_SENTINEL, np.inf, frame.depth)
    b = np.where(background.depth == DEPTH_SENTINEL, np.inf, background.depth)
    merged = np.minimum(a, b)
    zbuf = merged.copy()
    depth = np.where(np.isfinite(merged), merged, DEPTH_SENTINEL)
    out_frame = DepthFrame(depth=depth, intrinsics=frame.intrinsics)
    config = RenderConfig(intrinsics=frame.intrinsics, width=frame.width,
                          height=frame.height)
    skeleton = default_skeleton()
    visible = joint_visibility(hand.pose.joints, zbuf, config, skeleton,
                               hand.params.scale)
    return SynthSample(frame=out_frame,
                       pose=HandPose(joints=hand.pose.joints, visible=visible),
                       params=hand.params)


def room_scene(seed: int, config: RenderConfig) -> DepthFrame:
    """A procedural planes-and-boxes background: back wall, floor, and a
    few box faces at random depths. Stands in for warped real scenes."""
    rng = np.random.default_rng(seed)
    dirs = _ray_directions(config).reshape(config.height, config.width, 3)
    near, far = config.depth_range
    z = np.full((config.height, config.width), rng.uniform(0.75 * far, 0.95 * far))

    # floor plane: n.p = d with n pointing up (-y is up in camera coords)
    floor_y = rng.uniform(300.0, 700.0)
    denom = dirs[..., 1]
    t_floor = np.where(denom > 1e-6, floor_y / np.where(denom > 1e-6, denom, 1.0), np.inf)
    z = np.minimum(z, np.where(t_floor > 0, t_floor, np.inf))

    for _ in range(rng.integers(2, 5)):
        bw = rng.integers(config.width // 8, config.width // 3)
        bh = rng.integers(config.height // 8, config.height // 3)
        u0 = rng.integers(0, config.width - bw)
        v0 = rng.integers(0, config.height - bh)
        bz = rng.uniform(1.3 * near, 0.6 * far)
        patch = z[v0:v0 + bh, u0:u0 + bw]
        np.minimum(patch, bz, out=patch)

    z = np.clip(z, None, 0.98 * far)
    return DepthFrame(depth=z, intrinsics=config.intrinsics)
