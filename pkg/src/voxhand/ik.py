"""Least-squares inverse kinematics against 2D joint labels.

Fits the kinematic parameter vector so that projected model joints land
on labeled pixel positions, optionally anchored by per-joint depth
targets (which resolve the scale/distance ambiguity inherent to a
monocular 2D objective). Used by the annotation service, and to complete
joints a method did not predict.

Solver: damped least squares (Levenberg-style) on a numeric Jacobian,
with a small regularizer toward the initial parameters so that labeling
only a subset of keypoints stays well-posed. The returned parameters
never have a worse residual than the initial ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, DepthFrame, DEPTH_SENTINEL
from .kinematics import HandPose, HandSkeleton, PoseParams, fk_batch, neutral_pose

MIN_WELL_POSED_LABELS = 3
REG_WEIGHT = 1e-3          # pull toward theta_init, px-equivalent units
DEPTH_WEIGHT = 0.25        # px-equivalent residual per mm of depth error
DEPTH_HUBER_MM = 10.0      # soft-clip so bad anchors cannot distort the pose
FD_STEP = 1e-6             # central-difference step for the Jacobian
MAX_ITERATIONS = 200
STEP_NORM_TOL = 1e-6
RESIDUAL_TOL = 1e-3        # px
_PHASE1_ITERATIONS = 25    # exploration budget per start
_PHASE2_KEEP = 3           # starts polished to convergence

# Coarse viewpoint restarts: labels rarely pin the global orientation from
# a rest-pose initialization, so the solver descends from each of these and
# keeps the best. theta_init itself is always one of the starts.
_VIEW_GRID = [(t, y, r)
              for t in (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)
              for y in (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)
              for r in (0.0, math.pi)]


@dataclass
class IkResult:
    theta: PoseParams
    mean_residual_px: float
    residuals_px: dict[str, float]     # per labeled joint
    under_constrained: bool
    iterations: int


class _Objective:
    """Residual vector + numeric Jacobian for one labeling problem."""

    def __init__(self, labels: dict[str, np.ndarray], intrinsics: CameraIntrinsics,
                 skeleton: HandSkeleton, theta_init: PoseParams,
                 depth_targets: dict[str, float] | None = None,
                 reg_weight: float = REG_WEIGHT,
                 depth_weight: float = DEPTH_WEIGHT):
        self.joint_idx = np.array([skeleton.index(j) for j in labels], dtype=np.int64)
        self.targets = np.array([labels[j] for j in labels], dtype=np.float64)
        self.names = list(labels)
        self.intrinsics = intrinsics
        self.skeleton = skeleton
        self.theta0 = theta_init.values.copy()
        self.sqrt_reg = math.sqrt(reg_weight)
        if depth_targets:
            self.depth_idx = np.array([skeleton.index(j) for j in depth_targets],
                                      dtype=np.int64)
            self.depth_targets = np.array(list(depth_targets.values()), dtype=np.float64)
        else:
            self.depth_idx = np.empty(0, dtype=np.int64)
            self.depth_targets = np.empty(0)
        self.depth_weight = depth_weight
        self.n_label_res = 2 * len(self.joint_idx)

    def residual_batch(self, thetas: np.ndarray) -> np.ndarray:
        """(B, n_params) -> (B, n_residuals). z is clamped to stay projectable."""
        joints = fk_batch(thetas, self.skeleton)          # (B, 21, 3)
        sel = joints[:, self.joint_idx, :]                # (B, L, 3)
        z = np.maximum(sel[..., 2], 1.0)
        c = self.intrinsics
        u = sel[..., 0] / z * c.f_u + c.c_u
        v = sel[..., 1] / z * c.f_v + c.c_v
        res2d = np.stack([u, v], axis=-1) - self.targets[None, :, :]
        parts = [res2d.reshape(len(thetas), -1)]
        if len(self.depth_idx):
            zd = joints[:, self.depth_idx, 2] - self.depth_targets[None, :]
            # sqrt-Huber: quadratic inside DEPTH_HUBER_MM, linear influence
            # outside, so an anchor that hit the wrong surface cannot pull
            # the whole pose toward it
            delta = DEPTH_HUBER_MM
            mag = np.abs(zd)
            linearized = np.sqrt(delta * np.maximum(2.0 * mag - delta, 0.0))
            soft = np.where(mag <= delta, zd, np.sign(zd) * linearized)
            parts.append(self.depth_weight * soft)
        parts.append(self.sqrt_reg * (thetas - self.theta0[None, :]))
        return np.concatenate(parts, axis=1)

    def residual(self, theta: np.ndarray) -> np.ndarray:
        return self.residual_batch(theta[None, :])[0]

    def jacobian(self, theta: np.ndarray, step: float = FD_STEP) -> np.ndarray:
        """Central finite differences, batched over parameters."""
        p = len(theta)
        probes = np.repeat(theta[None, :], 2 * p, axis=0)
        for i in range(p):
            probes[2 * i, i] += step
            probes[2 * i + 1, i] -= step
        res = self.residual_batch(probes)
        return (res[0::2] - res[1::2]).T / (2.0 * step)

    def mean_label_residual(self, theta: np.ndarray) -> float:
        r = self.residual(theta)[:self.n_label_res].reshape(-1, 2)
        return float(np.linalg.norm(r, axis=1).mean())

    def label_residuals(self, theta: np.ndarray) -> dict[str, float]:
        r = self.residual(theta)[:self.n_label_res].reshape(-1, 2)
        return {name: float(np.linalg.norm(r[i])) for i, name in enumerate(self.names)}


def _descend(obj: _Objective, theta0: np.ndarray,
             max_iterations: int = MAX_ITERATIONS,
             bounds: tuple[np.ndarray, np.ndarray] | None = None
             ) -> tuple[np.ndarray, float, int]:
    """Damped least squares from one start; returns (theta, cost, iterations).

    Steps are only ever accepted when they reduce the squared residual, so
    the result cannot be worse than the start. With `bounds`, trial steps
    are projected onto the box first (the start must lie inside).
    """
    theta = theta0.copy()
    if bounds is not None:
        theta = np.clip(theta, bounds[0], bounds[1])
    r = obj.residual(theta)
    cost = float(r @ r)
    lam = 1e-3
    iterations = 0
    for _ in range(max_iterations):
        iterations += 1
        jac = obj.jacobian(theta)
        jtj = jac.T @ jac
        jtr = jac.T @ r
        accepted = False
        for _ in range(8):
            damped = jtj + lam * np.diag(np.diag(jtj)) + 1e-12 * np.eye(len(theta))
            try:
                delta = np.linalg.solve(damped, -jtr)
            except np.linalg.LinAlgError:
                lam *= 4.0
                continue
            trial = theta + delta
            if bounds is not None:
                trial = np.clip(trial, bounds[0], bounds[1])
            r_trial = obj.residual(trial)
            cost_trial = float(r_trial @ r_trial)
            if cost_trial < cost:
                delta = trial - theta
                theta, r, cost = trial, r_trial, cost_trial
                lam = max(lam / 3.0, 1e-9)
                accepted = True
                break
            lam *= 4.0
        if not accepted:
            break
        if np.linalg.norm(delta) < STEP_NORM_TOL:
            break
        if obj.mean_label_residual(theta) < RESIDUAL_TOL:
            break
    return theta, cost, iterations


def articulation_bounds(skeleton: HandSkeleton) -> tuple[np.ndarray, np.ndarray]:
    """Box constraints from the anatomical articulation ranges: joint
    angles, elongation, and scale stay inside their sampled intervals;
    viewpoint and translation are unbounded."""
    from .kinematics import sampling_ranges
    ranges = sampling_ranges(skeleton)
    names = PoseParams.rest(skeleton).names
    lo = np.full(len(names), -np.inf)
    hi = np.full(len(names), np.inf)
    for i, name in enumerate(names):
        if name in ("tilt", "yaw", "roll", "tx", "ty", "tz"):
            continue
        lo[i], hi[i] = ranges[name]
    return lo, hi


def ik_fit(labels: dict[str, tuple[float, float]], intrinsics: CameraIntrinsics,
           skeleton: HandSkeleton, theta_init: PoseParams,
           depth_targets: dict[str, float] | None = None,
           multi_start: bool = True,
           max_iterations: int = MAX_ITERATIONS,
           bounds: tuple[np.ndarray, np.ndarray] | None = None) -> IkResult:
    """Fit pose parameters to labeled 2D joints.

    labels maps joint names to (u, v) pixels. Fewer than three labels is
    accepted but flagged under-constrained (the regularizer keeps the
    problem solvable). Unknown joint names or non-finite labels raise
    ValueError.
    """
    for name, uv in labels.items():
        if name not in skeleton.name_to_index:
            raise ValueError(f"unknown joint name {name!r}")
        if not np.all(np.isfinite(uv)):
            raise ValueError(f"non-finite label for {name!r}: {uv}")
    if not labels:
        raise ValueError("at least one labeled joint is required")

    obj = _Objective(labels, intrinsics, skeleton, theta_init,
                     depth_targets=depth_targets)
    starts = [theta_init.values]
    if multi_start:
        for tilt, yaw, roll in _VIEW_GRID:
            s = theta_init.values.copy()
            s[1:4] = (tilt, yaw, roll)
            starts.append(s)

    total_iter = 0
    if len(starts) == 1:
        theta, cost, iters = _descend(obj, starts[0], max_iterations, bounds)
        total_iter += iters
        best = (theta, cost)
    else:
        # Short descent from every start, full polish for the best few.
        scored = []
        for s in starts:
            theta, cost, iters = _descend(obj, s, _PHASE1_ITERATIONS, bounds)
            total_iter += iters
            scored.append((cost, theta))
        scored.sort(key=lambda t: t[0])
        best = None
        for cost, theta in scored[:_PHASE2_KEEP]:
            theta2, cost2, iters = _descend(obj, theta, max_iterations, bounds)
            total_iter += iters
            if best is None or cost2 < best[1]:
                best = (theta2, cost2)
            if obj.mean_label_residual(best[0]) < RESIDUAL_TOL:
                break
    theta_out = PoseParams(values=best[0], names=theta_init.names)
    return IkResult(theta=theta_out,
                    mean_residual_px=obj.mean_label_residual(best[0]),
                    residuals_px=obj.label_residuals(best[0]),
                    under_constrained=len(labels) < MIN_WELL_POSED_LABELS,
                    iterations=total_iter)


def ik_jacobian(labels: dict[str, tuple[float, float]], intrinsics: CameraIntrinsics,
                skeleton: HandSkeleton, theta_init: PoseParams,
                theta: PoseParams | None = None) -> np.ndarray:
    """The Jacobian the solver uses at `theta` (defaults to theta_init)."""
    obj = _Objective(labels, intrinsics, skeleton, theta_init)
    at = theta_init if theta is None else theta
    return obj.jacobian(at.values)


def ik_residual(labels: dict[str, tuple[float, float]], intrinsics: CameraIntrinsics,
                skeleton: HandSkeleton, theta_init: PoseParams,
                theta: PoseParams | None = None) -> np.ndarray:
    """The residual vector the solver minimizes, evaluated at `theta`."""
    obj = _Objective(labels, intrinsics, skeleton, theta_init)
    at = theta_init if theta is None else theta
    return obj.residual(at.values)


def complete_missing_joints(partial: HandPose, intrinsics: CameraIntrinsics,
                            skeleton: HandSkeleton) -> HandPose:
    """Fill unlabeled joints by fitting the kinematic model to the known ones.

    Known joints are the ones flagged visible in `partial`; they are
    anchored in full 3D (projection plus a depth-consistency term) and are
    never overwritten in the output. The remaining joints come from the
    fitted model and are flagged visible, since the model now reports them.
    """
    known = np.nonzero(partial.visible)[0]
    if len(known) < MIN_WELL_POSED_LABELS:
        raise ValueError(f"need >= {MIN_WELL_POSED_LABELS} known joints, got {len(known)}")
    if len(known) == skeleton.n_joints:
        return HandPose(joints=partial.joints.copy(), visible=partial.visible.copy())

    labels: dict[str, tuple[float, float]] = {}
    depths: dict[str, float] = {}
    for j in known:
        name = skeleton.joint_names[j]
        x, y, z = partial.joints[j]
        if z <= 0:
            raise ValueError(f"known joint {name} behind the camera")
        labels[name] = (x / z * intrinsics.f_u + intrinsics.c_u,
                        y / z * intrinsics.f_v + intrinsics.c_v)
        depths[name] = float(z)

    # midpoint-of-range prior: joints the labels cannot constrain stay at
    # the neutral articulation instead of the (atypical) rest extension
    init = neutral_pose(skeleton)
    centroid = partial.joints[known].mean(axis=0)
    init = init.with_translation(centroid)
    fit = ik_fit(labels, intrinsics, skeleton, init, depth_targets=depths,
                 bounds=articulation_bounds(skeleton))
    fitted = fk_batch(fit.theta.values[None, :], skeleton)[0]

    joints = fitted.copy()
    joints[known] = partial.joints[known]
    return HandPose(joints=joints, visible=np.ones(skeleton.n_joints, dtype=bool))


@dataclass(frozen=True)
class DetectionRegion:
    """Metric z window of a detected hand plus its surface centroid depth."""

    z_window: tuple[float, float]
    centroid_depth: float

    @classmethod
    def from_detection(cls, detection, volume) -> "DetectionRegion":
        """Region of a scanning-volume detection: the window's metric z
        extent, with the centroid depth averaged over the surface voxels
        inside the window."""
        cfg = volume.config
        n = cfg.template_side
        jx, jy, jz = detection.position
        z0 = cfg.origin[2] + jz * cfg.voxel_size
        z1 = z0 + n * cfg.voxel_size
        first = volume.first_z[jx:jx + n, jy:jy + n]
        surface = first[(first >= jz) & (first < jz + n)]
        if len(surface):
            centroid = cfg.origin[2] + (float(surface.mean()) + 0.5) * cfg.voxel_size
        else:
            centroid = (z0 + z1) / 2.0
        return cls(z_window=(z0, z1), centroid_depth=centroid)


def backfill_depth(prediction2d: dict[str, tuple[float, float]],
                   frame: DepthFrame, region: DetectionRegion,
                   skeleton: HandSkeleton) -> HandPose:
    """Lift 2D joint predictions to 3D using measured depth where sane.

    Each joint takes the frame's depth at its pixel when that depth falls
    inside the detection region's z window; otherwise (background hit,
    sentinel pixel, or out-of-frame label) it falls back to the region's
    centroid depth. Joints absent from `prediction2d` sit at the centroid
    depth under the region's center and are flagged not visible.
    """
    z_lo, z_hi = region.z_window
    c = frame.intrinsics
    joints = np.zeros((skeleton.n_joints, 3))
    visible = np.zeros(skeleton.n_joints, dtype=bool)
    for j, name in enumerate(skeleton.joint_names):
        if name in prediction2d:
            u, v = prediction2d[name]
            z = region.centroid_depth
            ui, vi = int(round(u)), int(round(v))
            if 0 <= ui < frame.width and 0 <= vi < frame.height:
                d = frame.depth[vi, ui]
                if d != DEPTH_SENTINEL and z_lo <= d <= z_hi:
                    z = float(d)
            visible[j] = True
        else:
            u, v = c.c_u, c.c_v
            z = region.centroid_depth
        joints[j] = ((u - c.c_u) / c.f_u * z, (v - c.c_v) / c.f_v * z, z)
    return HandPose(joints=joints, visible=visible)
