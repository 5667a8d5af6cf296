"""Frame scoring, threshold curves, and report generation.

Scoring follows the benchmark procedure exactly: a frame with no hand and
no prediction scores 0; a missed hand or a false positive on an empty
frame scores infinity ("maxed-out"); otherwise the prediction is scored
against every ground-truth hand over that hand's visible joints and the
minimum error wins. Infinity is an honest failure state, never a large
number, so it fails every finite threshold.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .kinematics import HandPose

INF = math.inf

DEFAULT_THRESHOLDS = tuple(np.arange(0.0, 200.0 + 1e-9, 2.5))
HIGHLIGHT_THRESHOLDS = (20.0, 50.0, 100.0)


@dataclass(frozen=True)
class FrameScore:
    error: float            # mm, or math.inf on detection failure
    mode: str               # "max" | "mean"
    matched: int | None     # index into the frame's ground truths, if finite

    def __post_init__(self):
        if not (self.error >= 0):
            raise ValueError("error must be non-negative")


def _pose_error(gt: HandPose, pred: HandPose, mode: str) -> float:
    """Error of one prediction against one ground truth, over the ground
    truth's visible joints; infinity if the prediction omits any of them."""
    vis = gt.visible
    if not vis.any():
        raise ValueError("ground-truth pose with zero visible joints is not scoreable")
    if len(gt.joints) != len(pred.joints):
        raise ValueError("joint vocabulary mismatch between ground truth and prediction")
    if not pred.visible[vis].all():
        return INF
    d = np.linalg.norm(gt.joints[vis] - pred.joints[vis], axis=1)
    return float(d.max() if mode == "max" else d.mean())


def score_frame(prediction: HandPose | None, ground_truths: Sequence[HandPose],
                mode: str = "max") -> FrameScore:
    """Score one frame (see module docstring for the branch semantics)."""
    if mode not in ("max", "mean"):
        raise ValueError(f"mode must be 'max' or 'mean', got {mode!r}")
    if not ground_truths:
        error = 0.0 if prediction is None else INF
        return FrameScore(error=error, mode=mode, matched=None)
    if prediction is None:
        return FrameScore(error=INF, mode=mode, matched=None)
    best = INF
    matched = None
    for i, gt in enumerate(ground_truths):
        err = _pose_error(gt, prediction, mode)
        if err < best:
            best = err
            matched = i
    return FrameScore(error=best, mode=mode, matched=matched)


def threshold_curve(scores: Sequence[FrameScore] | Sequence[float],
                    thresholds: Sequence[float]) -> np.ndarray:
    """Proportion of frames with error <= t for each threshold t.

    Thresholds must be sorted ascending; infinite errors count as failures
    at every finite threshold, so the curve is non-decreasing.
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if len(thresholds) == 0:
        raise ValueError("need at least one threshold")
    if (np.diff(thresholds) < 0).any():
        raise ValueError("thresholds must be sorted ascending")
    errors = np.array([s.error if isinstance(s, FrameScore) else float(s)
                       for s in scores], dtype=np.float64)
    if len(errors) == 0:
        raise ValueError("no scores to aggregate")
    return (errors[None, :] <= thresholds[:, None]).mean(axis=1)


@dataclass
class EvalReport:
    mode: str
    thresholds: np.ndarray
    proportions: np.ndarray
    scores: list[FrameScore]

    @classmethod
    def from_scores(cls, scores: list[FrameScore], mode: str,
                    thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> "EvalReport":
        thresholds = np.asarray(thresholds, dtype=np.float64)
        return cls(mode=mode, thresholds=thresholds,
                   proportions=threshold_curve(scores, thresholds),
                   scores=list(scores))

    def proportion_at(self, threshold: float) -> float:
        errors = np.array([s.error for s in self.scores])
        return float((errors <= threshold).mean())

    def summary(self) -> dict[str, float]:
        return {f"{t:g}mm": self.proportion_at(t) for t in HIGHLIGHT_THRESHOLDS}

    def median_error(self) -> float:
        return float(np.median([s.error for s in self.scores]))

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "thresholds_mm": [float(t) for t in self.thresholds],
            "proportions": [float(p) for p in self.proportions],
            "summary": self.summary(),
            "frames": [{"error_mm": None if math.isinf(s.error) else s.error,
                        "matched": s.matched} for s in self.scores],
        }

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold_mm", "proportion"])
            for t, p in zip(self.thresholds, self.proportions):
                writer.writerow([f"{t:g}", f"{p:.6f}"])

    def save_svg(self, path, title: str = "") -> None:
        plot_curves({self.mode: self}, path, title=title)


def plot_curves(reports: dict[str, EvalReport], path, title: str = "") -> None:
    """Proportion-vs-threshold plot as deterministic SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "voxhand"}):
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        for label, report in reports.items():
            ax.plot(report.thresholds, report.proportions, label=label)
        for t in HIGHLIGHT_THRESHOLDS:
            ax.axvline(t, color="0.85", linewidth=0.8, zorder=0)
        ax.set_xlabel("max allowed joint error (mm)")
        ax.set_ylabel("proportion of frames")
        ax.set_ylim(0, 1.02)
        ax.set_xlim(float(min(r.thresholds.min() for r in reports.values())),
                    float(max(r.thresholds.max() for r in reports.values())))
        if title:
            ax.set_title(title)
        ax.legend(loc="lower right", fontsize=8)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def annotator_agreement(frames: Sequence[Sequence[tuple[str, HandPose]]],
                        mode: str = "max",
                        thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> EvalReport:
    """Human-consistency baseline: for frames annotated by two or more
    people, score the second annotator's pose against the first's as if it
    were a prediction. Raises if no frame has two annotations."""
    scores = []
    for annotations in frames:
        if len(annotations) < 2:
            continue
        ordered = sorted(annotations, key=lambda t: t[0])
        first, second = ordered[0][1], ordered[1][1]
        scores.append(score_frame(second, [first], mode=mode))
    if not scores:
        raise ValueError("annotator agreement needs at least one frame "
                         "with two annotations")
    return EvalReport.from_scores(scores, mode=mode, thresholds=thresholds)


@dataclass
class MatrixEntry:
    proportion_max_50: float
    proportion_mean_50: float
    median_max_error: float
    n_frames: int


def cross_dataset_matrix(train_sets: dict[str, object],
                         test_sets: dict[str, list[tuple]],
                         config, tau_det: float | None = None,
                         workers: int = 1) -> dict[tuple[str, str], MatrixEntry]:
    """Train-x-test generalization grid for the exemplar scanner.

    train_sets maps names to template lists (or TemplateIndex); test_sets
    maps names to (DepthFrame, [ground-truth HandPose]) pairs. Each entry
    reports the proportion of frames within 50mm under max and mean error
    plus the median max-error.
    """
    from .pipeline import estimate_frame
    from .voxels import TemplateIndex, default_detection_threshold

    if tau_det is None:
        tau_det = default_detection_threshold(config)
    indexes = {name: (db if isinstance(db, TemplateIndex) else TemplateIndex(db, config))
               for name, db in train_sets.items()}
    out: dict[tuple[str, str], MatrixEntry] = {}
    for test_name, pairs in test_sets.items():
        if not pairs:
            raise ValueError(f"test set {test_name!r} is empty")
        for train_name, index in indexes.items():
            smax, smean = [], []
            for frame, gts in pairs:
                pred = estimate_frame(frame, index, tau_det=tau_det, workers=workers)
                smax.append(score_frame(pred, gts, mode="max"))
                smean.append(score_frame(pred, gts, mode="mean"))
            out[(train_name, test_name)] = MatrixEntry(
                proportion_max_50=float(np.mean([s.error <= 50.0 for s in smax])),
                proportion_mean_50=float(np.mean([s.error <= 50.0 for s in smean])),
                median_max_error=float(np.median([s.error for s in smax])),
                n_frames=len(pairs),
            )
    return out
