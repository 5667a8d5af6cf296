"""End-to-end glue: training frames -> exemplar DB -> per-frame estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import DepthFrame
from .errors import ExemplarBuildError
from .kinematics import HandPose
from .voxels import (Detection, ExemplarTemplate, GridConfig, SceneVolume,
                     TemplateIndex, build_exemplar, build_scene_volume,
                     default_detection_threshold, scan)


@dataclass
class BuildStats:
    attempted: int = 0
    built: int = 0
    rejected: list[tuple[str, str]] = field(default_factory=list)  # (source, reason)


def build_exemplar_database(frames: list[tuple[str, DepthFrame, list[HandPose]]],
                            config: GridConfig,
                            stats: BuildStats | None = None) -> list[ExemplarTemplate]:
    """Build one template per (frame, annotated hand), skipping bad crops.

    Rejections (empty crops, out-of-cube joints) are recorded in `stats`
    rather than aborting: real training sets always contain a few
    unusable annotations.
    """
    if stats is None:
        stats = BuildStats()
    templates = []
    for frame_id, frame, poses in frames:
        for k, pose in enumerate(poses):
            source = frame_id if len(poses) == 1 else f"{frame_id}#{k}"
            stats.attempted += 1
            try:
                templates.append(build_exemplar(frame, pose, config, source_id=source))
                stats.built += 1
            except ExemplarBuildError as exc:
                stats.rejected.append((source, str(exc)))
    return templates


def estimate_frame(frame: DepthFrame | SceneVolume, index: TemplateIndex,
                   tau_det: float | None = None,
                   workers: int = 1) -> HandPose | None:
    """Most confident single prediction for a frame, or None.

    Scans the scene volume against the exemplar database; the detection is
    rejected (None) when the best distance exceeds tau_det or the scene
    holds no surface at all. The returned pose reports all joints visible:
    the matched exemplar's annotation is complete by construction.
    """
    if tau_det is None:
        tau_det = default_detection_threshold(index.config)
    volume = frame if isinstance(frame, SceneVolume) else build_scene_volume(frame, index.config)
    det = scan(volume, index, workers=workers)
    if det is None or not det.accepted(tau_det):
        return None
    return HandPose(joints=det.pose.joints.copy(),
                    visible=np.ones(len(det.pose.joints), dtype=bool))


def detect_frame(frame: DepthFrame | SceneVolume, index: TemplateIndex,
                 workers: int = 1) -> Detection | None:
    """Raw best-match detection (argmin without the acceptance bound)."""
    volume = frame if isinstance(frame, SceneVolume) else build_scene_volume(frame, index.config)
    return scan(volume, index, workers=workers)
