"""Pose parameterization, forward kinematics, and pose sampling.

The parameter vector drives per-joint bend/side articulation (twist is
deliberately absent), per-joint elongation where anatomy warrants it,
an isotropic global scale, the camera-relative viewpoint (tilt, yaw,
roll), and the root translation. Sampling draws every articulated
parameter from a bounded uniform range and rejects self-intersecting
configurations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import fk_kernel
from .skeleton import HandSkeleton, load_skeleton

# Uniform sampling ranges for the synthetic pose distribution. bend is
# flexion/extension, side is ab-/adduction, elongation stretches the bones
# fanning out of a joint. Global scale is U(2/3, 3/2); viewpoint tilt,
# yaw, and roll are each U(0, 2pi).
FINGER_BEND = (-math.pi / 2, math.pi / 7)
MCP_SIDE = (-math.pi / 8, math.pi / 8)
THUMB_CMC_BEND = (-1.0, 0.5)
THUMB_CMC_SIDE = (-0.7, 1.2)
THUMB_CMC_ELONG = (0.8, 1.2)
THUMB_MCP_BEND = (-1.0, -0.6)
THUMB_MCP_SIDE = (-0.2, 0.5)
WRIST_BEND = (-1.0, 1.0)
WRIST_SIDE = (-0.5, 0.8)
SCALE_RANGE = (2.0 / 3.0, 3.0 / 2.0)
VIEW_RANGE = (0.0, 2 * math.pi)


def _param_layout(skeleton: HandSkeleton) -> list[str]:
    names = ["scale", "tilt", "yaw", "roll", "tx", "ty", "tz"]
    for joint in skeleton.joint_names:
        for dof in skeleton.articulation.get(joint, ()):
            names.append(f"{joint}.{dof}")
    return names


def sampling_ranges(skeleton: HandSkeleton) -> dict[str, tuple[float, float]]:
    """Closed uniform range per parameter name; degenerate ranges are fixed values."""
    ranges: dict[str, tuple[float, float]] = {
        "scale": SCALE_RANGE,
        "tilt": VIEW_RANGE, "yaw": VIEW_RANGE, "roll": VIEW_RANGE,
        "tx": (0.0, 0.0), "ty": (0.0, 0.0), "tz": (0.0, 0.0),
        "wrist.bend": WRIST_BEND, "wrist.side": WRIST_SIDE,
        "thumb_cmc.bend": THUMB_CMC_BEND, "thumb_cmc.side": THUMB_CMC_SIDE,
        "thumb_cmc.elongation": THUMB_CMC_ELONG,
        "thumb_mcp.bend": THUMB_MCP_BEND, "thumb_mcp.side": THUMB_MCP_SIDE,
        "thumb_ip.bend": (0.0, 0.0),
    }
    for finger in ("index", "middle", "ring", "pinky"):
        ranges[f"{finger}_mcp.bend"] = FINGER_BEND
        ranges[f"{finger}_mcp.side"] = MCP_SIDE
        ranges[f"{finger}_pip.bend"] = FINGER_BEND
        ranges[f"{finger}_dip.bend"] = FINGER_BEND
    return ranges


@dataclass
class PoseParams:
    """Flat kinematic parameter vector with a named layout.

    Index 0 is the global scale, 1:4 viewpoint (tilt, yaw, roll), 4:7 root
    translation in mm, and the remainder per-joint DOFs in canonical joint
    order. Elongation parameters rest at 1, angles at 0.
    """

    values: np.ndarray
    names: tuple[str, ...] = field(repr=False)

    @classmethod
    def rest(cls, skeleton: HandSkeleton) -> "PoseParams":
        names = tuple(_param_layout(skeleton))
        values = np.zeros(len(names))
        for i, n in enumerate(names):
            if n == "scale" or n.endswith(".elongation"):
                values[i] = 1.0
        return cls(values=values, names=names)

    def copy(self) -> "PoseParams":
        return PoseParams(values=self.values.copy(), names=self.names)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def __setitem__(self, name: str, value: float) -> None:
        self.values[self.names.index(name)] = value

    @property
    def scale(self) -> float:
        return float(self.values[0])

    @property
    def translation(self) -> np.ndarray:
        return self.values[4:7]

    def with_translation(self, t) -> "PoseParams":
        out = self.copy()
        out.values[4:7] = np.asarray(t, dtype=np.float64)
        return out

    def with_viewpoint(self, tilt: float, yaw: float, roll: float) -> "PoseParams":
        out = self.copy()
        out.values[1:4] = (tilt, yaw, roll)
        return out


@dataclass
class HandPose:
    """21 metric joint positions with per-joint visibility flags."""

    joints: np.ndarray        # (21, 3) mm
    visible: np.ndarray       # (21,) bool

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        self.visible = np.asarray(self.visible, dtype=bool)
        if self.joints.shape != (self.visible.shape[0], 3):
            raise ValueError("joints must be (n, 3) with matching visibility flags")
        if not np.isfinite(self.joints).all():
            raise ValueError("joint positions must be finite")

    @classmethod
    def all_visible(cls, joints: np.ndarray) -> "HandPose":
        joints = np.asarray(joints, dtype=np.float64)
        return cls(joints=joints, visible=np.ones(len(joints), dtype=bool))

    def centroid(self) -> np.ndarray:
        return self.joints.mean(axis=0)

    def translated(self, offset) -> "HandPose":
        return HandPose(joints=self.joints + np.asarray(offset, dtype=np.float64),
                        visible=self.visible.copy())


def rot_x(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(a.shape + (3, 3))
    out[..., 0, 0] = 1
    out[..., 1, 1] = c
    out[..., 1, 2] = -s
    out[..., 2, 1] = s
    out[..., 2, 2] = c
    return out


def rot_y(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(a.shape + (3, 3))
    out[..., 1, 1] = 1
    out[..., 0, 0] = c
    out[..., 0, 2] = s
    out[..., 2, 0] = -s
    out[..., 2, 2] = c
    return out


def rot_z(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(a.shape + (3, 3))
    out[..., 2, 2] = 1
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def viewpoint_matrix(tilt, yaw, roll) -> np.ndarray:
    """Root orientation: roll about z after yaw about y after tilt about x."""
    return rot_z(roll) @ rot_y(yaw) @ rot_x(tilt)


class _FkPlan:
    """Per-skeleton index arrays so batched FK is a flat loop over joints."""

    def __init__(self, skeleton: HandSkeleton):
        self.skeleton = skeleton
        names = _param_layout(skeleton)
        self.names = tuple(names)
        index = {n: i for i, n in enumerate(names)}
        n = skeleton.n_joints
        self.parents = np.asarray(skeleton.parents, dtype=np.int64)
        self.offsets = np.ascontiguousarray(skeleton.rest_offsets)
        self.bend_idx = np.full(n, -1, dtype=np.int64)
        self.side_idx = np.full(n, -1, dtype=np.int64)
        self.elong_idx = np.full(n, -1, dtype=np.int64)
        for j, joint in enumerate(skeleton.joint_names):
            for dof in skeleton.articulation.get(joint, ()):
                idx = index[f"{joint}.{dof}"]
                if dof == "bend":
                    self.bend_idx[j] = idx
                elif dof == "side":
                    self.side_idx[j] = idx
                else:
                    self.elong_idx[j] = idx


_PLAN_CACHE: dict[HandSkeleton, _FkPlan] = {}


def _plan_for(skeleton: HandSkeleton) -> _FkPlan:
    plan = _PLAN_CACHE.get(skeleton)
    if plan is None:
        plan = _FkPlan(skeleton)
        _PLAN_CACHE[skeleton] = plan
    return plan


def fk_batch(theta: np.ndarray, skeleton: HandSkeleton) -> np.ndarray:
    """Joint positions for a (batch, n_params) parameter array -> (batch, 21, 3) mm.

    Articulation at a joint rotates everything distal to it: each child
    frame is the parent frame composed with Rz(side) @ Rx(bend), bone
    offsets are scaled by elongation (of the parent joint) and the global
    scale, and the root is placed by the viewpoint rotation plus
    translation. The wrist's own bend/side articulate the hand relative
    to the (unrendered here) forearm direction.
    """
    plan = _plan_for(skeleton)
    theta = np.ascontiguousarray(np.atleast_2d(np.asarray(theta, dtype=np.float64)))
    return fk_kernel(theta, plan.parents, plan.offsets,
                     plan.bend_idx, plan.side_idx, plan.elong_idx)


def forward_kinematics(theta: PoseParams, skeleton: HandSkeleton) -> HandPose:
    """Evaluate the kinematic chain; all joints are flagged visible.

    Rendering (or compositing) is what downgrades visibility, by checking
    each joint against the z-buffer.
    """
    joints = fk_batch(theta.values[None, :], skeleton)[0]
    return HandPose.all_visible(joints)


def capsule_segments(theta: PoseParams, skeleton: HandSkeleton) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Bone capsules for rendering and intersection tests.

    Returns (starts, ends, radii, joint_pair) where joint_pair[k] holds the
    (parent, child) joint indices of capsule k; the forearm capsule uses
    (-1, 0) since it attaches at the wrist but is not itself a joint. The
    forearm ignores wrist articulation: it lives in the pre-articulation
    root frame, so bending the wrist visibly folds the hand against it.
    """
    joints = fk_batch(theta.values[None, :], skeleton)[0]
    starts, ends, radii, pairs = [], [], [], []
    for bone in skeleton.bones():
        starts.append(joints[bone.parent])
        ends.append(joints[bone.joint])
        radii.append(bone.radius * theta.scale)
        pairs.append((bone.parent, bone.joint))
    root_rot = viewpoint_matrix(theta["tilt"], theta["yaw"], theta["roll"])
    forearm_end = joints[0] + root_rot @ (skeleton.forearm_offset * theta.scale)
    starts.append(joints[0])
    ends.append(forearm_end)
    radii.append(skeleton.forearm_radius * theta.scale)
    pairs.append((-1, 0))
    return (np.asarray(starts), np.asarray(ends), np.asarray(radii),
            np.asarray(pairs, dtype=np.int64))


def segment_distances(a0, a1, b0, b1) -> np.ndarray:
    """Pairwise-batched minimum distance between segments [a0,a1] and [b0,b1].

    Clamped closest-point computation; handles degenerate (point) segments.
    """
    a0, a1, b0, b1 = (np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in (a0, a1, b0, b1))
    d1 = a1 - a0
    d2 = b1 - b0
    r = a0 - b0
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    eps = 1e-12
    a_safe = np.where(a > eps, a, 1.0)
    e_safe = np.where(e > eps, e, 1.0)
    denom = a * e - b * b
    s = np.where(denom > eps, (b * f - c * e) / np.where(denom > eps, denom, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    t = np.clip(np.where(e > eps, (b * s + f) / e_safe, 0.0), 0.0, 1.0)
    s = np.clip(np.where(a > eps, (b * t - c) / a_safe, 0.0), 0.0, 1.0)
    closest_a = a0 + s[:, None] * d1
    closest_b = b0 + t[:, None] * d2
    return np.linalg.norm(closest_a - closest_b, axis=1)


class _IntersectPlan:
    """Non-adjacent hand-bone pair indices (capsules sharing a joint meet
    there by construction and are skipped)."""

    def __init__(self, skeleton: HandSkeleton):
        bones = skeleton.bones()
        k = len(bones)
        ii, jj = [], []
        for i in range(k):
            ends_i = {bones[i].joint, bones[i].parent}
            for j in range(i + 1, k):
                if not (ends_i & {bones[j].joint, bones[j].parent}):
                    ii.append(i)
                    jj.append(j)
        self.i = np.array(ii, dtype=np.int64)
        self.j = np.array(jj, dtype=np.int64)
        self.starts_idx = np.array([b.parent for b in bones], dtype=np.int64)
        self.ends_idx = np.array([b.joint for b in bones], dtype=np.int64)
        self.radii = np.array([b.radius for b in bones])
        self.rest_lengths = np.linalg.norm(skeleton.rest_offsets[self.ends_idx], axis=1)


_INTERSECT_CACHE: dict[HandSkeleton, _IntersectPlan] = {}


def _intersect_plan(skeleton: HandSkeleton) -> _IntersectPlan:
    plan = _INTERSECT_CACHE.get(skeleton)
    if plan is None:
        plan = _IntersectPlan(skeleton)
        _INTERSECT_CACHE[skeleton] = plan
    return plan


def self_intersects(pose: HandPose, skeleton: HandSkeleton,
                    scale: float | None = None) -> bool:
    """True iff any two non-adjacent hand-bone capsules interpenetrate.

    Works on joint positions directly; capsule radii come from the
    skeleton table, multiplied by the pose's global scale. When `scale`
    is not given, it is estimated from the pose's bone lengths against
    the rest pose, so the result is invariant under rigid motion.
    """
    plan = _intersect_plan(skeleton)
    starts = pose.joints[plan.starts_idx]
    ends = pose.joints[plan.ends_idx]
    if scale is None:
        lengths = np.linalg.norm(ends - starts, axis=1)
        scale = float(np.median(lengths / plan.rest_lengths))
    d = segment_distances(starts[plan.i], ends[plan.i], starts[plan.j], ends[plan.j])
    radii = plan.radii * scale
    return bool((d < radii[plan.i] + radii[plan.j]).any())


class SamplingError(RuntimeError):
    """Raised when rejection sampling cannot produce a valid pose."""


def sample_pose(rng: np.random.Generator, skeleton: HandSkeleton,
                overrides: dict[str, tuple[float, float]] | None = None,
                max_rejections: int = 1000) -> PoseParams:
    """Draw pose parameters uniformly from the bounded ranges, rejecting
    self-intersecting configurations.

    `overrides` replaces individual parameter ranges (used e.g. to pin the
    viewpoint of a generated set). Raises SamplingError after
    `max_rejections` consecutive rejections, which signals a broken
    intersection test or an impossible override.
    """
    ranges = sampling_ranges(skeleton)
    if overrides:
        unknown = set(overrides) - set(ranges)
        if unknown:
            raise ValueError(f"unknown sampling overrides: {sorted(unknown)}")
        ranges.update(overrides)
    base = PoseParams.rest(skeleton)
    missing = set(base.names) - set(ranges)
    if missing:
        raise ValueError(f"sampling ranges missing parameters: {sorted(missing)}")
    lo = np.array([ranges[n][0] for n in base.names])
    hi = np.array([ranges[n][1] for n in base.names])

    for _ in range(max_rejections):
        theta = PoseParams(values=rng.uniform(lo, hi), names=base.names)
        if not self_intersects(forward_kinematics(theta, skeleton), skeleton,
                               scale=theta.scale):
            return theta
    raise SamplingError(f"no valid pose after {max_rejections} consecutive rejections")


def neutral_pose(skeleton: HandSkeleton) -> PoseParams:
    """Parameters at the midpoint of every sampled articulation range.

    A better prior than the rest pose for joints the data does not
    constrain: under a uniform pose distribution the midpoint minimizes
    the worst-case angular deviation.
    """
    theta = PoseParams.rest(skeleton)
    for name, (lo, hi) in sampling_ranges(skeleton).items():
        if name in ("scale", "tilt", "yaw", "roll", "tx", "ty", "tz"):
            continue
        theta[name] = (lo + hi) / 2.0
    return theta


_DEFAULT_SKELETON: HandSkeleton | None = None


def default_skeleton() -> HandSkeleton:
    """Shared instance of the bundled skeleton (plans get cached against it)."""
    global _DEFAULT_SKELETON
    if _DEFAULT_SKELETON is None:
        _DEFAULT_SKELETON = load_skeleton()
    return _DEFAULT_SKELETON
