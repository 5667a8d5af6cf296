"""Annotation service: the HTTP backend of the browser labeling tool.

The annotator clicks 2D joints; the server fits the kinematic model to
the labels (anchored by measured depth at plausible labeled pixels, which
pins the monocular scale/distance ambiguity) and returns the projected
21-joint overlay with per-label residuals, updating live as labels
arrive. Accepted annotations persist immediately (JSONL, one record per
accept; latest accept per frame+annotator wins), so a restart loses
nothing. All endpoints live under /v1.
"""

from __future__ import annotations

import io
import json
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import HTMLResponse, Response
from pydantic import BaseModel

from .camera import DEPTH_SENTINEL, project_points
from .datasets import Dataset
from .evaluate import DEFAULT_THRESHOLDS, annotator_agreement
from .ik import articulation_bounds, ik_fit
from .kinematics import HandPose, default_skeleton, forward_kinematics, neutral_pose
from .skeleton import JOINT_NAMES, adjacent_bone_radii, skeleton_edges

API_PREFIX = "/v1"

# Depth measured at a labeled pixel anchors the fit only when it lies
# within this window around the median labeled depth (else: background
# hit or dead pixel, e.g. under an occluded-joint label).
DEPTH_ANCHOR_WINDOW_MM = 250.0

# After a first fit, anchors this far from the fitted joint depth are
# treated as occluder hits and removed for the refit.
DEPTH_ANCHOR_OUTLIER_MM = 25.0


class FitRequest(BaseModel):
    labels: dict[str, tuple[float, float]]
    annotator: str = "anonymous"


class AcceptRequest(BaseModel):
    labels: dict[str, tuple[float, float]]
    annotator: str
    occluded: list[str] = []


class AnnotationStore:
    """Write-through JSONL store; one live annotation per (frame, annotator)."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.lock = threading.Lock()
        self.records: dict[tuple[str, str], dict] = {}
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self.records[(rec["frame_id"], rec["annotator"])] = rec

    def accept(self, record: dict) -> None:
        with self.lock:
            self.records[(record["frame_id"], record["annotator"])] = record
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record) + "\n")

    def for_frame(self, frame_id: str) -> list[dict]:
        return sorted((r for (fid, _), r in self.records.items() if fid == frame_id),
                      key=lambda r: r["annotator"])

    def frames_with_annotations(self) -> dict[str, list[dict]]:
        out: dict[str, list[dict]] = {}
        for (fid, _), rec in sorted(self.records.items()):
            out.setdefault(fid, []).append(rec)
        return out


def normalize_depth(depth: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Min-max normalization over measured pixels to 8-bit grayscale;
    sentinel pixels map to 0. Returns (image, lo, hi) so clients can
    invert the mapping."""
    valid = depth != DEPTH_SENTINEL
    if not valid.any():
        return np.zeros_like(depth, dtype=np.uint8), 0.0, 0.0
    lo = float(depth[valid].min())
    hi = float(depth[valid].max())
    span = max(hi - lo, 1.0)
    img = np.zeros_like(depth, dtype=np.uint8)
    img[valid] = np.clip(np.rint((depth[valid] - lo) / span * 254.0) + 1, 1, 255)
    return img, lo, hi


def _pose_record(pose: HandPose) -> dict:
    return {name: {"p": [float(v) for v in pose.joints[i]],
                   "v": bool(pose.visible[i])}
            for i, name in enumerate(JOINT_NAMES)}


def _pose_from_record(rec: dict) -> HandPose:
    joints = np.array([rec[n]["p"] for n in JOINT_NAMES])
    visible = np.array([rec[n]["v"] for n in JOINT_NAMES], dtype=bool)
    return HandPose(joints=joints, visible=visible)


def create_app(dataset: Dataset, annotations_path: Path | None = None,
               ui_dir: Path | None = None) -> FastAPI:
    skeleton = default_skeleton()
    store = AnnotationStore(annotations_path or dataset.root / "annotations.jsonl")
    app = FastAPI(title="voxhand annotation service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    records = {rec.frame_id: rec for rec in dataset.manifest.frames}
    order = [rec.frame_id for rec in dataset.manifest.frames]
    edges = skeleton_edges(skeleton)

    def record_or_404(frame_id: str):
        if frame_id not in records:
            raise HTTPException(status_code=404, detail=f"unknown frame {frame_id!r}")
        return records[frame_id]

    def run_fit(frame_id: str, labels: dict[str, tuple[float, float]]):
        for name in labels:
            if name not in skeleton.name_to_index:
                raise HTTPException(status_code=422, detail=f"unknown joint {name!r}")
        frame = dataset.load_depth(record_or_404(frame_id))
        intr = dataset.manifest.intrinsics

        depths = {}
        measured = []
        surface_offsets = adjacent_bone_radii(skeleton)
        for name, (u, v) in labels.items():
            ui, vi = int(round(u)), int(round(v))
            if 0 <= ui < frame.width and 0 <= vi < frame.height:
                # nearest measured surface in the 3x3 around the click: a
                # rounded edge pixel must not sample whatever lies behind
                # the silhouette
                patch = frame.depth[max(0, vi - 1):vi + 2, max(0, ui - 1):ui + 2]
                valid = patch[patch != DEPTH_SENTINEL]
                if len(valid):
                    # the measured surface sits about one bone radius in
                    # front of the joint center
                    offset = surface_offsets[skeleton.index(name)]
                    measured.append((name, float(valid.min()) + float(offset)))
        if measured:
            median = float(np.median([d for _, d in measured]))
            depths = {name: d for name, d in measured
                      if abs(d - median) <= DEPTH_ANCHOR_WINDOW_MM}

        anchor_z = float(np.median([d for d in depths.values()])) if depths else 500.0
        cu, cv = intr.c_u, intr.c_v
        mean_u = float(np.mean([uv[0] for uv in labels.values()]))
        mean_v = float(np.mean([uv[1] for uv in labels.values()]))
        center = np.array([(mean_u - cu) / intr.f_u * anchor_z,
                           (mean_v - cv) / intr.f_v * anchor_z, anchor_z])
        init = neutral_pose(skeleton).with_translation(center)
        bounds = articulation_bounds(skeleton)

        # stage 1: 2D-only multi-start fit nails the projections (a depth
        # anchor that hit an occluder must not steer the global search)
        fit = ik_fit(labels, intr, skeleton, init, bounds=bounds)
        pose = forward_kinematics(fit.theta, skeleton)

        if depths:
            # stage 2: projections are depth/size ambiguous, so rescale the
            # whole solution by the median anchor ratio (a similarity map
            # that leaves every projection unchanged)
            ratios = [d / pose.joints[skeleton.index(name), 2]
                      for name, d in depths.items()
                      if pose.joints[skeleton.index(name), 2] > 1.0]
            if ratios:
                k = float(np.median(ratios))
                theta_k = fit.theta.copy()
                theta_k.values[4:7] *= k
                theta_k["scale"] = float(np.clip(theta_k.scale * k,
                                                 bounds[0][0], bounds[1][0]))
                pose = forward_kinematics(theta_k, skeleton)
                fit = ik_fit(labels, intr, skeleton, theta_k, bounds=bounds,
                             multi_start=False)
                pose = forward_kinematics(fit.theta, skeleton)
            # stage 3: only anchors the corrected geometry agrees with are
            # trustworthy (the rest hit occluders or background); refit
            # with those from the warm start
            consistent = {name: d for name, d in depths.items()
                          if abs(pose.joints[skeleton.index(name), 2] - d)
                          <= DEPTH_ANCHOR_OUTLIER_MM}
            if consistent:
                fit = ik_fit(labels, intr, skeleton, fit.theta,
                             depth_targets=consistent, bounds=bounds,
                             multi_start=False)
                pose = forward_kinematics(fit.theta, skeleton)
        overlay = project_points(pose.joints, intr)
        return fit, pose, overlay

    @app.get(f"{API_PREFIX}/meta")
    def meta():
        return {"dataset": dataset.manifest.name,
                "n_frames": len(order),
                "joint_names": list(JOINT_NAMES),
                "edges": [list(e) for e in edges],
                "thresholds_mm": [float(t) for t in DEFAULT_THRESHOLDS]}

    @app.get(f"{API_PREFIX}/frames")
    def frames():
        return {"frames": [{"id": fid,
                            "annotators": [r["annotator"] for r in store.for_frame(fid)]}
                           for fid in order]}

    @app.get(f"{API_PREFIX}/frames/{{frame_id}}")
    def frame_meta(frame_id: str):
        rec = record_or_404(frame_id)
        frame = dataset.load_depth(rec)
        _, lo, hi = normalize_depth(frame.depth)
        return {"id": frame_id,
                "index": order.index(frame_id),
                "width": frame.width,
                "height": frame.height,
                "has_rgb": rec.rgb_path is not None,
                "depth_range": [lo, hi],
                "intrinsics": {"f_u": frame.intrinsics.f_u, "f_v": frame.intrinsics.f_v,
                               "c_u": frame.intrinsics.c_u, "c_v": frame.intrinsics.c_v},
                "annotations": store.for_frame(frame_id)}

    @app.get(f"{API_PREFIX}/frames/{{frame_id}}/depth.png")
    def depth_png(frame_id: str):
        from PIL import Image
        frame = dataset.load_depth(record_or_404(frame_id))
        img, _, _ = normalize_depth(frame.depth)
        buf = io.BytesIO()
        Image.fromarray(img, mode="L").save(buf, format="png")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get(f"{API_PREFIX}/frames/{{frame_id}}/rgb.png")
    def rgb_png(frame_id: str):
        rec = record_or_404(frame_id)
        if rec.rgb_path is None:
            raise HTTPException(status_code=404, detail="frame has no RGB image")
        return Response(content=(dataset.root / rec.rgb_path).read_bytes(),
                        media_type="image/png")

    @app.post(f"{API_PREFIX}/frames/{{frame_id}}/fit")
    def fit_labels(frame_id: str, req: FitRequest):
        record_or_404(frame_id)
        if not req.labels:
            return {"fit": None, "warning": "under_constrained",
                    "detail": "no labels placed yet"}
        fit, pose, overlay = run_fit(frame_id, req.labels)
        return {"fit": {
                    "theta": [float(v) for v in fit.theta.values],
                    "joints2d": {n: [float(overlay[i, 0]), float(overlay[i, 1])]
                                 for i, n in enumerate(JOINT_NAMES)},
                    "joints3d": {n: [float(v) for v in pose.joints[i]]
                                 for i, n in enumerate(JOINT_NAMES)},
                    "residuals_px": fit.residuals_px,
                    "mean_residual_px": fit.mean_residual_px,
                },
                "warning": "under_constrained" if fit.under_constrained else None}

    @app.post(f"{API_PREFIX}/frames/{{frame_id}}/accept")
    def accept(frame_id: str, req: AcceptRequest):
        record_or_404(frame_id)
        if not req.labels:
            raise HTTPException(status_code=422,
                                detail="cannot accept a frame with no labels")
        fit, pose, _ = run_fit(frame_id, req.labels)
        visible = np.ones(skeleton.n_joints, dtype=bool)
        for name in req.occluded:
            if name not in skeleton.name_to_index:
                raise HTTPException(status_code=422, detail=f"unknown joint {name!r}")
            visible[skeleton.index(name)] = False
        final = HandPose(joints=pose.joints, visible=visible)
        record = {"frame_id": frame_id,
                  "annotator": req.annotator,
                  "labels": {k: list(v) for k, v in sorted(req.labels.items())},
                  "joints": _pose_record(final),
                  "mean_residual_px": fit.mean_residual_px}
        store.accept(record)
        return {"accepted": True, "annotation": record}

    @app.get(f"{API_PREFIX}/agreement")
    def agreement(mode: str = "max"):
        if mode not in ("max", "mean"):
            raise HTTPException(status_code=422, detail="mode must be max or mean")
        frames_ann = []
        for fid, recs in store.frames_with_annotations().items():
            frames_ann.append([(r["annotator"], _pose_from_record(r["joints"]))
                               for r in recs])
        try:
            report = annotator_agreement(frames_ann, mode=mode)
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return {"mode": mode,
                "thresholds_mm": [float(t) for t in report.thresholds],
                "proportions": [float(p) for p in report.proportions],
                "n_frames": len(report.scores)}

    if ui_dir is not None and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    @app.get("/", response_class=HTMLResponse)
    def index():
        if ui_dir is not None and (Path(ui_dir) / "index.html").exists():
            return '<html><meta http-equiv="refresh" content="0; url=/ui/"></html>'
        return ("<html><body><h3>voxhand annotation service</h3>"
                f"<p>API under {API_PREFIX}; the browser tool lives in "
                "frontend/ (serve with --ui-dir frontend).</p></body></html>")

    return app
