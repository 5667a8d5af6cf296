"""Desk-scale experiments: memorization, training-set-size trends,
viewpoint transfer, pruning effectiveness, and the metric-template check.

These are the runnable counterparts of the acceptance criteria; the
scripts/ directory exposes each as a CLI. Grids here are sized so every
sampled hand fits its template cube (480mm side), keeping exemplar
construction lossless for the memorization experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .evaluate import cross_dataset_matrix, score_frame
from .kinematics import default_skeleton, sample_pose
from .pipeline import BuildStats, build_exemplar_database, estimate_frame
from .render import RenderConfig, generate_set, render_depth
from .voxels import (GridConfig, TemplateIndex, build_scene_volume,
                     build_exemplar, prune_candidates, scan)


@dataclass(frozen=True)
class ExperimentConfig:
    """Shared geometry for the synthetic-data experiments."""

    grid: GridConfig = GridConfig.centered(scene_side=52, template_side=24,
                                           voxel_size=20.0)
    render: RenderConfig = field(default_factory=RenderConfig.default)
    workers: int = 1


def synth_training_frames(samples):
    """(frame_id, frame, [pose]) triples from rendered samples."""
    return [(f"synth{i:05d}", s.frame, [s.pose]) for i, s in enumerate(samples)]


@dataclass
class MemorizationResult:
    n_frames: int
    n_templates: int
    proportion_max_50: float
    n_distance_zero: int
    build_rejections: list


def memorization(n_frames: int = 200, seed: int = 101,
                 config: ExperimentConfig = ExperimentConfig()) -> MemorizationResult:
    """Train and test on the same rendered frames: 1-NN must memorize.

    Every self-match lands at distance zero because templates snap to the
    scene lattice, so the 50mm max-error proportion is exactly 1.
    """
    skeleton = default_skeleton()
    samples = generate_set(n_frames, seed, config.render, skeleton)
    stats = BuildStats()
    templates = build_exemplar_database(synth_training_frames(samples),
                                        config.grid, stats=stats)
    index = TemplateIndex(templates, config.grid)
    n_zero = 0
    scores = []
    for s in samples:
        volume = build_scene_volume(s.frame, config.grid)
        det = scan(volume, index, workers=config.workers)
        if det is not None and det.distance == 0:
            n_zero += 1
        pred = estimate_frame(volume, index, workers=config.workers)
        scores.append(score_frame(pred, [s.pose], mode="max"))
    prop = float(np.mean([sc.error <= 50.0 for sc in scores]))
    return MemorizationResult(n_frames=n_frames, n_templates=len(templates),
                              proportion_max_50=prop, n_distance_zero=n_zero,
                              build_rejections=stats.rejected)


@dataclass
class SizeTrendResult:
    sizes: list[int]
    proportions_max_50: list[float]
    db_sizes: list[int]
    n_test: int


# Train and test share this band: full articulation and scale from the
# sampling table, viewpoint restricted to a quarter-turn cone the way real
# benchmark sets are viewpoint-limited. Under uniform SO(3) viewpoints no
# desk-scale exemplar count covers anything measurable.
TREND_BAND = {"tilt": (0.0, math.pi / 4), "yaw": (0.0, math.pi / 4),
              "roll": (0.0, math.pi / 4)}


def size_trend(sizes=(100, 1000, 10_000), n_test: int = 200,
               train_seed: int = 7_000, test_seed: int = 9_999,
               config: ExperimentConfig = ExperimentConfig()) -> SizeTrendResult:
    """Accuracy on a fixed held-out synthetic test set as the training set
    grows; nearest-neighbor coverage improves with more exemplars."""
    skeleton = default_skeleton()
    test = generate_set(n_test, test_seed, config.render, skeleton,
                        overrides=TREND_BAND)
    test_volumes = [(build_scene_volume(s.frame, config.grid), s.pose) for s in test]
    proportions = []
    db_sizes = []
    largest = max(sizes)
    all_train = generate_set(largest, train_seed, config.render, skeleton,
                             overrides=TREND_BAND)
    for size in sizes:
        templates = build_exemplar_database(
            synth_training_frames(all_train[:size]), config.grid)
        index = TemplateIndex(templates, config.grid)
        db_sizes.append(len(templates))
        hits = 0
        for volume, gt in test_volumes:
            pred = estimate_frame(volume, index, workers=config.workers)
            hits += score_frame(pred, [gt], mode="max").error <= 50.0
        proportions.append(hits / len(test_volumes))
    return SizeTrendResult(sizes=list(sizes), proportions_max_50=proportions,
                           db_sizes=db_sizes, n_test=n_test)


# Disjoint viewpoint bands for the cross-dataset transfer experiment:
# narrow enough that a few hundred exemplars cover their own band, and
# half a turn apart so the bands never share an orientation. Articulation
# and scale are shared and kept moderate so viewpoint is the only factor
# separating the two sets.
_MILD_ARTICULATION = {
    "scale": (0.9, 1.1),
    "wrist.bend": (-0.3, 0.3), "wrist.side": (-0.2, 0.3),
    **{f"{f}_mcp.bend": (-0.5, 0.1) for f in ("index", "middle", "ring", "pinky")},
    **{f"{f}_mcp.side": (-0.15, 0.15) for f in ("index", "middle", "ring", "pinky")},
    **{f"{f}_pip.bend": (-0.5, 0.1) for f in ("index", "middle", "ring", "pinky")},
    **{f"{f}_dip.bend": (-0.5, 0.1) for f in ("index", "middle", "ring", "pinky")},
}
VIEW_BAND_A = {**_MILD_ARTICULATION,
               "tilt": (0.0, math.pi / 8), "yaw": (0.0, math.pi / 8),
               "roll": (0.0, math.pi / 8)}
# only the yaw moves: shifting all three Euler angles by pi would land back
# near the identity (Rz(pi) Ry(pi) Rx(pi) == I)
VIEW_BAND_B = {**_MILD_ARTICULATION,
               "tilt": (0.0, math.pi / 8), "yaw": (math.pi, 9 * math.pi / 8),
               "roll": (0.0, math.pi / 8)}


@dataclass
class TransferResult:
    matrix: dict          # (train, test) -> proportion at 50mm max-error
    entries: dict         # (train, test) -> full MatrixEntry


def viewpoint_transfer(n_train: int = 250, n_test: int = 100,
                       seed: int = 333,
                       config: ExperimentConfig = ExperimentConfig()) -> TransferResult:
    """2x2 train/test grid over two viewpoint-disjoint synthetic sets."""
    skeleton = default_skeleton()
    train_sets = {}
    test_sets = {}
    for name, band, offset in (("A", VIEW_BAND_A, 0), ("B", VIEW_BAND_B, 10_000)):
        train = generate_set(n_train, seed + offset, config.render, skeleton,
                             overrides=band)
        test = generate_set(n_test, seed + offset + 1, config.render, skeleton,
                            overrides=band)
        templates = build_exemplar_database(synth_training_frames(train), config.grid)
        train_sets[name] = TemplateIndex(templates, config.grid)
        test_sets[name] = [(s.frame, [s.pose]) for s in test]
    entries = cross_dataset_matrix(train_sets, test_sets, config.grid,
                                   workers=config.workers)
    matrix = {key: entry.proportion_max_50 for key, entry in entries.items()}
    return TransferResult(matrix=matrix, entries=entries)


@dataclass
class FigurineResult:
    distance_full: int
    distance_half: int
    template_mass: int


def figurine_check(seed: int = 55,
                   config: ExperimentConfig = ExperimentConfig()) -> FigurineResult:
    """Metric templates must not fire on a half-scale hand.

    Renders one pose at its sampled scale and at half that scale (same
    distance); the full-scale scene self-matches at distance 0, the
    half-scale scene cannot: its surface occupies a quarter of the pixels
    and a different metric volume.
    """
    skeleton = default_skeleton()
    rng = np.random.default_rng(seed)
    theta = sample_pose(rng, skeleton).with_translation([0.0, 0.0, 520.0])
    sample = render_depth(theta, config.render, skeleton)
    template = build_exemplar(sample.frame, sample.pose, config.grid, source_id="full")
    index = TemplateIndex([template], config.grid)

    det_full = scan(build_scene_volume(sample.frame, config.grid), index)
    half = theta.copy()
    half["scale"] = theta.scale * 0.5
    sample_half = render_depth(half, config.render, skeleton)
    det_half = scan(build_scene_volume(sample_half.frame, config.grid), index)
    return FigurineResult(distance_full=det_full.distance,
                          distance_half=det_half.distance,
                          template_mass=int(template.proj.sum()))


@dataclass
class PruningResult:
    ratios: list[float]
    grid: GridConfig


def pruning_ratio(n_scenes: int = 10, seed: int = 77,
                  grid: GridConfig | None = None,
                  render: RenderConfig | None = None) -> PruningResult:
    """Candidate fraction of all offsets on rendered hand scenes.

    Defaults to the full-scale viewing grid (200^3 voxels of 10mm), where
    a single hand occupies a tiny clustered region; the snug experiment
    grid would make the fraction meaninglessly large.
    """
    skeleton = default_skeleton()
    grid = grid if grid is not None else GridConfig.centered()
    render = render if render is not None else RenderConfig.default()
    samples = generate_set(n_scenes, seed, render, skeleton)
    total = (grid.scene_side - grid.template_side + 1) ** 3
    ratios = []
    for s in samples:
        volume = build_scene_volume(s.frame, grid)
        ratios.append(len(prune_candidates(volume)) / total)
    return PruningResult(ratios=ratios, grid=grid)
