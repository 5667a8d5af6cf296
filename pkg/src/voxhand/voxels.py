"""Occlusion-filled voxel volumes and the scanning-volume exemplar search.

A depth observation at (x', y', z') occludes every voxel behind it, and
occluded voxels count as occupied. That convention makes every column of
the binary grid a suffix run of ones, so a whole M^3 scene collapses to
two M x M maps: the index of the first occupied voxel per column and the
resulting column count. Volumetric Hamming distances between such
volumes reduce exactly to L1 distances between the 2D count maps, which
is what the scanner computes.

Dense 3D grids never exist here; test oracles materialize them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .camera import DepthFrame, reproject
from .errors import ExemplarBuildError
from .kinematics import HandPose
from ._kernels import scan_kernel

EMPTY_COLUMN = -1  # first_z value for columns with no observation

# Fraction of the template volume N^3 used as the default detect/no-detect
# distance bound; calibrate on validation data for a given sensor+grid.
DEFAULT_DETECT_FRACTION = 0.35


@dataclass(frozen=True)
class GridConfig:
    """Scene and template grid geometry.

    scene_side M voxels per scene axis, template_side N per template axis,
    cubic voxels of voxel_size millimeters, and the metric position of the
    scene grid's (0,0,0) corner in camera coordinates.
    """

    scene_side: int = 200
    template_side: int = 30
    voxel_size: float = 10.0
    origin: tuple[float, float, float] = (-1000.0, -1000.0, 0.0)

    def __post_init__(self):
        if not (self.scene_side >= self.template_side >= 1):
            raise ValueError("need scene_side >= template_side >= 1")
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")

    @classmethod
    def centered(cls, scene_side: int = 200, template_side: int = 30,
                 voxel_size: float = 10.0, z_start: float = 0.0) -> "GridConfig":
        """Grid covering the viewable region: x/y centered on the optical
        axis, z starting at `z_start` mm."""
        half = scene_side * voxel_size / 2.0
        return cls(scene_side, template_side, voxel_size, (-half, -half, z_start))

    @property
    def n_offsets(self) -> int:
        k = self.scene_side - self.template_side + 1
        return k ** 3

    def origin_array(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=np.float64)


def _voxelize(points: np.ndarray, origin: np.ndarray, voxel_size: float,
              side: int) -> np.ndarray:
    """Quantize points to voxel indices, dropping everything outside the
    half-open [0, side)^3 box (far-boundary points are dropped)."""
    idx = np.floor((points - origin[None, :]) / voxel_size).astype(np.int64)
    keep = ((idx >= 0) & (idx < side)).all(axis=1)
    return idx[keep]


def _column_first_z(idx: np.ndarray, side: int) -> np.ndarray:
    """Per-(x, y) index of the nearest occupied voxel; EMPTY_COLUMN if none.

    The nearest observation wins: anything behind it is occlusion-filled.
    """
    first = np.full((side, side), side, dtype=np.int64)
    if len(idx):
        np.minimum.at(first, (idx[:, 0], idx[:, 1]), idx[:, 2])
    first[first == side] = EMPTY_COLUMN
    return first


@dataclass(frozen=True)
class SceneVolume:
    """Scene-scale occupancy as column count + first-occupied-z maps.

    proj[x, y] counts occupied voxels along z including occlusion fill,
    so proj = M - first_z for non-empty columns and 0 for empty ones.
    """

    config: GridConfig
    proj: np.ndarray      # (M, M) int64
    first_z: np.ndarray   # (M, M) int64, EMPTY_COLUMN where no observation

    def __post_init__(self):
        self.proj.setflags(write=False)
        self.first_z.setflags(write=False)

    @property
    def side(self) -> int:
        return self.config.scene_side


def build_scene_volume(frame: DepthFrame, config: GridConfig) -> SceneVolume:
    """Reproject a depth frame and fill the scene grid.

    An all-sentinel frame (or one whose points all fall outside the grid)
    yields an all-empty volume.
    """
    points = reproject(frame)
    return scene_volume_from_points(points, config)


def scene_volume_from_points(points: np.ndarray, config: GridConfig) -> SceneVolume:
    m = config.scene_side
    idx = _voxelize(np.asarray(points, dtype=np.float64).reshape(-1, 3),
                    config.origin_array(), config.voxel_size, m)
    first = _column_first_z(idx, m)
    proj = np.where(first == EMPTY_COLUMN, 0, m - first)
    return SceneVolume(config=config, proj=proj, first_z=first)


@dataclass(frozen=True)
class ExemplarTemplate:
    """A hand-scale template: N x N column counts plus the annotated pose
    expressed relative to the template origin."""

    side: int
    proj: np.ndarray          # (N, N) int64
    pose: HandPose            # joints relative to the template origin, mm
    source_id: str

    def __post_init__(self):
        self.proj.setflags(write=False)
        if self.proj.shape != (self.side, self.side):
            raise ValueError("proj must be (side, side)")
        if (self.proj < 0).any() or (self.proj > self.side).any():
            raise ValueError("column counts must lie in [0, side]")


def template_counts_from_points(points: np.ndarray, origin: np.ndarray,
                                voxel_size: float, side: int) -> np.ndarray:
    """Occlusion-filled column counts of a template box, filled from the
    whole point set: the template must hold exactly what a scan window
    over this training scene would see, so surfaces in front of the cube
    (forearm, clutter) occlusion-fill it and surfaces behind leave it
    empty."""
    rel = np.asarray(points, dtype=np.float64).reshape(-1, 3) - origin[None, :]
    col = np.floor(rel[:, :2] / voxel_size).astype(np.int64)
    in_footprint = ((col >= 0) & (col < side)).all(axis=1)
    col = col[in_footprint]
    zidx = np.floor(rel[in_footprint, 2] / voxel_size).astype(np.int64)
    sentinel = np.int64(1) << 40  # farther than any representable surface
    first = np.full((side, side), sentinel, dtype=np.int64)
    if len(col):
        np.minimum.at(first, (col[:, 0], col[:, 1]), zidx)
    first[first == sentinel] = side  # empty column -> count 0 via the formula
    return np.clip(side - np.maximum(first, 0), 0, side)


def template_origin(pose: HandPose, config: GridConfig) -> np.ndarray:
    """Metric corner of the template cube for a pose: the cube is centered
    on the pose centroid, then snapped onto the scene voxel lattice so the
    template is exactly one of the scene's scan windows."""
    n = config.template_side
    anchor = pose.centroid() - n * config.voxel_size / 2.0
    origin = config.origin_array()
    snapped = origin + np.floor((anchor - origin) / config.voxel_size) * config.voxel_size
    return snapped


def build_exemplar(frame: DepthFrame, pose: HandPose, config: GridConfig,
                   source_id: str = "", min_columns: int = 10,
                   occluded_slack: float = 0.25) -> ExemplarTemplate:
    """Crop, voxelize, and occlusion-fill a training frame around its pose.

    Visible joints must lie inside the template cube; occluded joints may
    protrude up to `occluded_slack` * cube side outside it. Raises
    ExemplarBuildError for crops with fewer than `min_columns` occupied
    columns (a bad crop) or out-of-cube joints.
    """
    if not pose.visible.any():
        raise ExemplarBuildError("pose has no visible joints")
    n = config.template_side
    size = n * config.voxel_size
    origin = template_origin(pose, config)

    rel = pose.joints - origin[None, :]
    inside = (rel >= 0).all(axis=1) & (rel < size).all(axis=1)
    slack = occluded_slack * size
    near = (rel >= -slack).all(axis=1) & (rel < size + slack).all(axis=1)
    if not inside[pose.visible].all():
        raise ExemplarBuildError("visible joint outside the template cube; "
                                 "enlarge template_side or voxel_size")
    if not near.all():
        raise ExemplarBuildError("occluded joint too far outside the template cube")

    proj = template_counts_from_points(reproject(frame), origin,
                                       config.voxel_size, n)
    occupied = int((proj > 0).sum())
    if occupied < min_columns:
        raise ExemplarBuildError(
            f"only {occupied} occupied columns in crop (need >= {min_columns})")
    return ExemplarTemplate(side=n, proj=proj,
                            pose=HandPose(joints=rel, visible=pose.visible.copy()),
                            source_id=source_id)


def hamming_distance_dense(e: np.ndarray, v_sub: np.ndarray) -> int:
    """Voxel-level Hamming distance between two dense binary volumes.

    Reference form of the distance; the scanner never materializes dense
    grids and computes the identical value from 2D count maps.
    """
    e = np.asarray(e, dtype=bool)
    v_sub = np.asarray(v_sub, dtype=bool)
    if e.shape != v_sub.shape:
        raise ValueError(f"shape mismatch {e.shape} vs {v_sub.shape}")
    return int(np.count_nonzero(e != v_sub))


def projected_l1_distance(e: np.ndarray, v_sub: np.ndarray) -> int:
    """L1 distance between column count maps == dense Hamming distance for
    occlusion-filled (suffix-run) volumes."""
    e = np.asarray(e, dtype=np.int64)
    v_sub = np.asarray(v_sub, dtype=np.int64)
    if e.shape != v_sub.shape:
        raise ValueError(f"shape mismatch {e.shape} vs {v_sub.shape}")
    return int(np.abs(e - v_sub).sum())


def window_counts(volume: SceneVolume, offset: tuple[int, int, int],
                  n: int | None = None) -> np.ndarray:
    """Column counts of one N^3 scan window, clamped to its z range.

    For a suffix-run column whose first occupied index is f, the window
    [jz, jz+N) sees clamp(jz + N - max(f, jz), 0, N) occupied voxels;
    empty columns see 0.
    """
    n = volume.config.template_side if n is None else n
    m = volume.side
    jx, jy, jz = (int(v) for v in offset)
    if not (0 <= jx <= m - n and 0 <= jy <= m - n and 0 <= jz <= m - n):
        raise ValueError(f"offset {offset} outside [0, {m - n}]^3")
    f = volume.first_z[jx:jx + n, jy:jy + n]
    counts = np.clip(jz + n - np.maximum(f, jz), 0, n)
    counts[f == EMPTY_COLUMN] = 0
    return counts.astype(np.int64)


def prune_candidates(volume: SceneVolume, n: int | None = None) -> np.ndarray:
    """Offsets whose window contains at least one visible surface voxel.

    Windows that are entirely empty or contain only occlusion fill carry
    no evidence and are excluded from the search: a surface column at
    (x, y, f) supports exactly the offsets with jx in (x-N, x],
    jy in (y-N, y], jz in (f-N, f], intersected with the valid offset
    range. Returned lexicographically sorted, shape (n_candidates, 3).
    """
    cfg = volume.config
    n = cfg.template_side if n is None else n
    m = volume.side
    k = m - n + 1
    xs, ys = np.nonzero(volume.first_z != EMPTY_COLUMN)
    if len(xs) == 0:
        return np.empty((0, 3), dtype=np.int64)
    fs = volume.first_z[xs, ys]

    # Box-union via 3D difference array + prefix sums.
    acc = np.zeros((k + 1, k + 1, k + 1), dtype=np.int32)
    x0 = np.maximum(xs - n + 1, 0); x1 = np.minimum(xs, k - 1)
    y0 = np.maximum(ys - n + 1, 0); y1 = np.minimum(ys, k - 1)
    z0 = np.maximum(fs - n + 1, 0); z1 = np.minimum(fs, k - 1)
    ok = (x0 <= x1) & (y0 <= y1) & (z0 <= z1)
    x0, x1, y0, y1, z0, z1 = (a[ok] for a in (x0, x1, y0, y1, z0, z1))
    for sx, ex in ((x0, 1), (x1 + 1, -1)):
        for sy, ey in ((y0, 1), (y1 + 1, -1)):
            for sz, ez in ((z0, 1), (z1 + 1, -1)):
                np.add.at(acc, (sx, sy, sz), ex * ey * ez)
    covered = np.cumsum(np.cumsum(np.cumsum(acc, axis=0), axis=1), axis=2)[:k, :k, :k]
    return np.argwhere(covered > 0).astype(np.int64)


@dataclass(frozen=True)
class Detection:
    """Best-matching exemplar and where it matched."""

    exemplar_id: int
    position: tuple[int, int, int]   # voxel offset of the matched window
    distance: int                    # differing-voxel count
    pose: HandPose                   # exemplar pose lifted to scene coordinates

    def accepted(self, threshold: float) -> bool:
        return self.distance <= threshold


class TemplateIndex:
    """Templates stacked and sorted by total count for bound-based pruning.

    Build once per database; reusable across frames and threads.
    """

    def __init__(self, templates: list[ExemplarTemplate], config: GridConfig):
        if not templates:
            raise ValueError("empty exemplar database")
        n = config.template_side
        for t in templates:
            if t.side != n:
                raise ValueError(f"template side {t.side} != grid template_side {n}")
        self.config = config
        self.templates = list(templates)
        stack = np.stack([t.proj for t in templates]).astype(np.int64)
        sums = stack.reshape(len(templates), -1).sum(axis=1)
        order = np.argsort(sums, kind="stable")
        self.stack_sorted = np.ascontiguousarray(stack[order])
        self.sums_sorted = np.ascontiguousarray(sums[order])
        self.order = np.ascontiguousarray(order.astype(np.int64))


def default_detection_threshold(config: GridConfig,
                                fraction: float = DEFAULT_DETECT_FRACTION) -> float:
    return fraction * config.template_side ** 3


def scan(volume: SceneVolume, db, workers: int = 1,
         coarse_to_fine: bool = False) -> Detection | None:
    """Find the globally best (exemplar, window) pair by differing-voxel count.

    `db` is a list of ExemplarTemplate or a prebuilt TemplateIndex. Ties
    break by lower distance, then lower exemplar id, then lexicographically
    smaller offset, so the result is independent of enumeration order and
    worker count. Returns None when the scene contains no surface voxel
    (no candidate windows).

    `coarse_to_fine` is an approximation: offsets are first visited at
    stride 2 per axis, then refined within +-1 of the coarse winner. It
    can miss the global argmin and must stay off wherever exactness
    matters (it is off for every correctness test).
    """
    index = db if isinstance(db, TemplateIndex) else TemplateIndex(db, volume.config)
    if index.config != volume.config:
        raise ValueError("template database grid config does not match the scene volume")
    cands = prune_candidates(volume)
    if len(cands) == 0:
        return None
    n = volume.config.template_side

    def run(subset: np.ndarray):
        if len(subset) == 0:
            return None
        if workers <= 1 or len(subset) < 2 * workers:
            chunks = [subset]
        else:
            chunks = np.array_split(subset, workers)

        def one(chunk):
            return scan_kernel(volume.first_z, n, np.ascontiguousarray(chunk),
                               index.stack_sorted, index.sums_sorted, index.order)

        if len(chunks) == 1:
            results = [one(chunks[0])]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(one, chunks))
        return min(results, key=lambda r: (r[0], r[1], r[2], r[3], r[4]))

    if coarse_to_fine:
        coarse = cands[(cands % 2 == 0).all(axis=1)]
        best = run(coarse if len(coarse) else cands)
        center = np.array(best[2:], dtype=np.int64)
        near = cands[(np.abs(cands - center[None, :]) <= 1).all(axis=1)]
        refined = run(near)
        if refined is not None:
            best = min([best, refined], key=lambda r: (r[0], r[1], r[2], r[3], r[4]))
    else:
        best = run(cands)

    dist, ex_id, jx, jy, jz = (int(v) for v in best)
    offset = (jx, jy, jz)
    shift = volume.config.origin_array() + np.array(offset) * volume.config.voxel_size
    template = index.templates[ex_id]
    return Detection(exemplar_id=ex_id, position=offset, distance=dist,
                     pose=template.pose.translated(shift))
