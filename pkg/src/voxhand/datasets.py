"""Canonical on-disk dataset format, loaders/writers, and the exemplar DB.

A dataset is a directory with one `manifest.json` and 16-bit grayscale
depth PNGs (value = millimeters, 0 = no measurement). The manifest inlines
all annotations with explicit joint names so joint-order bugs fail loudly.
The exemplar database is a little-endian binary stream with per-record
checksums; see docs/FORMATS.md for the byte layout.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import CameraIntrinsics, DepthFrame
from .errors import DataFormatError
from .kinematics import HandPose
from .skeleton import JOINT_NAMES
from .voxels import ExemplarTemplate, GridConfig

MANIFEST_VERSION = 1
DB_MAGIC = b"VXDB"
DB_VERSION = 1


@dataclass
class Annotation:
    annotator: str
    pose: HandPose


@dataclass
class FrameRecord:
    frame_id: str
    depth_path: str               # relative to the dataset root
    rgb_path: str | None = None
    annotations: list[Annotation] = field(default_factory=list)


@dataclass
class DatasetManifest:
    name: str
    intrinsics: CameraIntrinsics
    frames: list[FrameRecord]
    units: str = "mm"


class Dataset:
    """A loaded manifest with lazy frame decoding."""

    def __init__(self, root: Path, manifest: DatasetManifest):
        self.root = Path(root)
        self.manifest = manifest

    def __len__(self) -> int:
        return len(self.manifest.frames)

    def load_depth(self, record: FrameRecord) -> DepthFrame:
        path = self.root / record.depth_path
        try:
            img = Image.open(path)
            arr = np.asarray(img)
        except Exception as exc:
            raise DataFormatError(f"cannot decode depth image {path}: {exc}") from exc
        if arr.ndim != 2:
            raise DataFormatError(f"depth image {path} is not single-channel")
        return DepthFrame(depth=arr.astype(np.float64),
                          intrinsics=self.manifest.intrinsics)

    def frames(self):
        """Yield (record, DepthFrame) pairs lazily."""
        for record in self.manifest.frames:
            yield record, self.load_depth(record)


def _pose_to_json(pose: HandPose) -> dict:
    return {name: {"p": [float(v) for v in pose.joints[i]],
                   "v": bool(pose.visible[i])}
            for i, name in enumerate(JOINT_NAMES)}


def _pose_from_json(obj: dict, where: str) -> HandPose:
    missing = [n for n in JOINT_NAMES if n not in obj]
    extra = [n for n in obj if n not in JOINT_NAMES]
    if missing or extra:
        raise DataFormatError(
            f"{where}: annotation joints do not match the canonical vocabulary "
            f"(missing {missing[:3]}..., unexpected {extra[:3]}...)"
            if len(missing) > 3 or len(extra) > 3 else
            f"{where}: annotation joints mismatch (missing {missing}, unexpected {extra})")
    joints = np.array([obj[n]["p"] for n in JOINT_NAMES], dtype=np.float64)
    visible = np.array([bool(obj[n]["v"]) for n in JOINT_NAMES], dtype=bool)
    return HandPose(joints=joints, visible=visible)


def load_dataset(path) -> Dataset:
    """Load and validate a canonical dataset directory.

    Raises DataFormatError naming the offending entry for missing files,
    malformed annotations, unsupported schema versions, or missing/alien
    unit declarations.
    """
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.exists():
        raise DataFormatError(f"no manifest.json in {root}")
    try:
        raw = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{mpath}: invalid JSON: {exc}") from exc

    version = raw.get("schema_version")
    if version != MANIFEST_VERSION:
        raise DataFormatError(f"{mpath}: unsupported schema_version {version!r}")
    units = raw.get("units")
    if units != "mm":
        raise DataFormatError(f"{mpath}: units must be declared as 'mm', got {units!r}")
    try:
        intr = CameraIntrinsics(**raw["intrinsics"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{mpath}: bad intrinsics: {exc}") from exc

    frames = []
    for i, fr in enumerate(raw.get("frames", [])):
        where = f"{mpath} frame[{i}]"
        try:
            frame_id = fr["id"]
            depth_path = fr["depth"]
        except KeyError as exc:
            raise DataFormatError(f"{where}: missing field {exc}") from exc
        if not (root / depth_path).exists():
            raise DataFormatError(f"{where}: depth image not found: {depth_path}")
        rgb = fr.get("rgb")
        if rgb is not None and not (root / rgb).exists():
            raise DataFormatError(f"{where}: rgb image not found: {rgb}")
        annotations = [
            Annotation(annotator=a.get("annotator", "unknown"),
                       pose=_pose_from_json(a["joints"], f"{where} annotation[{k}]"))
            for k, a in enumerate(fr.get("annotations", []))]
        frames.append(FrameRecord(frame_id=frame_id, depth_path=depth_path,
                                  rgb_path=rgb, annotations=annotations))
    manifest = DatasetManifest(name=raw.get("name", root.name), intrinsics=intr,
                               frames=frames, units=units)
    return Dataset(root, manifest)


class _DirLock:
    """Advisory exclusive lock for dataset writers."""

    def __init__(self, root: Path):
        self.path = Path(root) / ".voxhand.lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            os.close(fd)
        except FileExistsError:
            raise DataFormatError(
                f"dataset {self.path.parent} is locked by another writer "
                f"(remove {self.path.name} if stale)")
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def write_dataset(path, name: str, intrinsics: CameraIntrinsics,
                  frames: list[tuple[str, np.ndarray, list[Annotation]]]) -> Dataset:
    """Write a canonical dataset: frames are (frame_id, depth_mm_array,
    annotations). Depth is stored as 16-bit PNG, losslessly (values are
    rounded to whole millimeters on write)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    with _DirLock(root):
        (root / "depth").mkdir(exist_ok=True)
        records = []
        for frame_id, depth, annotations in frames:
            depth16 = np.rint(np.asarray(depth)).astype(np.uint16)
            rel = f"depth/{frame_id}.png"
            Image.fromarray(depth16).save(root / rel)
            records.append({
                "id": frame_id,
                "depth": rel,
                "annotations": [{"annotator": a.annotator,
                                 "joints": _pose_to_json(a.pose)}
                                for a in annotations],
            })
        manifest = {
            "schema_version": MANIFEST_VERSION,
            "name": name,
            "units": "mm",
            "intrinsics": {"f_u": intrinsics.f_u, "f_v": intrinsics.f_v,
                           "c_u": intrinsics.c_u, "c_v": intrinsics.c_v},
            "frames": records,
        }
        (root / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return load_dataset(root)


@dataclass
class ExemplarDb:
    config: GridConfig
    templates: list[ExemplarTemplate]
    version: int = DB_VERSION


def _pack_template(t: ExemplarTemplate) -> bytes:
    sid = t.source_id.encode("utf-8")
    parts = [struct.pack("<I", len(sid)), sid,
             t.proj.astype("<u2").tobytes()]
    for i in range(len(t.pose.joints)):
        parts.append(struct.pack("<3dB", *t.pose.joints[i], int(t.pose.visible[i])))
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def save_exemplar_db(db: ExemplarDb, path) -> None:
    """Persist templates with a self-describing header and per-record CRCs.

    Writing the same database twice produces byte-identical files.
    """
    cfg = db.config
    header = DB_MAGIC + struct.pack("<IIId3dQ", DB_VERSION, cfg.scene_side,
                                    cfg.template_side, cfg.voxel_size,
                                    *cfg.origin, len(db.templates))
    with open(path, "wb") as fh:
        fh.write(header)
        for t in db.templates:
            fh.write(_pack_template(t))


def _read_exact(fh, count: int, what: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise DataFormatError(f"truncated exemplar DB while reading {what}")
    return buf


def load_exemplar_db(path) -> ExemplarDb:
    n_joints = len(JOINT_NAMES)
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != DB_MAGIC:
            raise DataFormatError(f"not an exemplar DB (bad magic {magic!r})")
        head = _read_exact(fh, struct.calcsize("<IIId3dQ"), "header")
        version, m, n, voxel, ox, oy, oz, count = struct.unpack("<IIId3dQ", head)
        if version != DB_VERSION:
            raise DataFormatError(f"unsupported exemplar DB version {version}")
        config = GridConfig(scene_side=m, template_side=n, voxel_size=voxel,
                            origin=(ox, oy, oz))
        templates = []
        for rec in range(count):
            where = f"record {rec}"
            sid_len, = struct.unpack("<I", _read_exact(fh, 4, where))
            sid = _read_exact(fh, sid_len, where)
            proj_bytes = _read_exact(fh, n * n * 2, where)
            pose_bytes = _read_exact(fh, n_joints * struct.calcsize("<3dB"), where)
            crc, = struct.unpack("<I", _read_exact(fh, 4, where))
            payload = struct.pack("<I", sid_len) + sid + proj_bytes + pose_bytes
            if zlib.crc32(payload) & 0xFFFFFFFF != crc:
                raise DataFormatError(f"checksum mismatch in exemplar DB {where}")
            proj = np.frombuffer(proj_bytes, dtype="<u2").reshape(n, n).astype(np.int64)
            joints = np.empty((n_joints, 3))
            visible = np.empty(n_joints, dtype=bool)
            step = struct.calcsize("<3dB")
            for i in range(n_joints):
                x, y, z, vis = struct.unpack_from("<3dB", pose_bytes, i * step)
                joints[i] = (x, y, z)
                visible[i] = bool(vis)
            templates.append(ExemplarTemplate(
                side=n, proj=proj,
                pose=HandPose(joints=joints, visible=visible),
                source_id=sid.decode("utf-8")))
        if fh.read(1):
            raise DataFormatError("trailing bytes after final exemplar DB record")
    return ExemplarDb(config=config, templates=templates, version=version)


# --- external dataset adapters -------------------------------------------

def _import_depth_png_joints_txt(path, joint_map: dict[str, str] | None = None,
                                 **_) -> Dataset:
    """Adapter for the common 'depth PNGs + per-frame joint text' layout.

    Expects intrinsics.txt (f_u f_v c_u c_v), depth_*.png, and a matching
    joints_*.txt with lines '<name> <x> <y> <z> <visible 0/1>'. External
    joint names must map onto the canonical vocabulary via `joint_map`
    (identity by default); unmapped names raise.
    """
    root = Path(path)
    intr_path = root / "intrinsics.txt"
    if not intr_path.exists():
        raise DataFormatError(f"{root}: adapter needs intrinsics.txt")
    vals = intr_path.read_text().split()
    if len(vals) != 4:
        raise DataFormatError(f"{intr_path}: expected 'f_u f_v c_u c_v'")
    intr = CameraIntrinsics(*(float(v) for v in vals))
    joint_map = joint_map or {}

    frames = []
    for depth_path in sorted(root.glob("depth_*.png")):
        stem = depth_path.stem.removeprefix("depth_")
        jpath = root / f"joints_{stem}.txt"
        if not jpath.exists():
            raise DataFormatError(f"{root}: missing {jpath.name} for {depth_path.name}")
        joints = {}
        for ln, line in enumerate(jpath.read_text().splitlines()):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 5:
                raise DataFormatError(f"{jpath}:{ln + 1}: expected 'name x y z visible'")
            name = joint_map.get(parts[0], parts[0])
            if name not in JOINT_NAMES:
                raise DataFormatError(
                    f"{jpath}:{ln + 1}: joint {parts[0]!r} does not map onto the "
                    f"canonical vocabulary (add it to the adapter joint_map)")
            joints[name] = {"p": [float(parts[1]), float(parts[2]), float(parts[3])],
                            "v": parts[4] == "1"}
        pose = _pose_from_json(joints, str(jpath))
        frames.append(FrameRecord(frame_id=stem, depth_path=depth_path.name,
                                  annotations=[Annotation("import", pose)]))
    manifest = DatasetManifest(name=root.name, intrinsics=intr, frames=frames)
    return Dataset(root, manifest)


ADAPTERS = {
    "depth_png_joints_txt": _import_depth_png_joints_txt,
}


def import_adapter(format_id: str, path, **options) -> Dataset:
    """Convert an external dataset layout into a canonical in-memory dataset.

    Pure function of the input directory, so re-importing is idempotent.
    Unknown ids raise with the list of registered adapters.
    """
    try:
        adapter = ADAPTERS[format_id]
    except KeyError:
        raise DataFormatError(
            f"unknown dataset format {format_id!r}; registered adapters: "
            f"{sorted(ADAPTERS)}") from None
    return adapter(path, **options)


def write_manifest(dataset: Dataset, path=None) -> Path:
    """Serialize a dataset's manifest (e.g. after an adapter import)."""
    root = Path(path) if path is not None else dataset.root
    m = dataset.manifest
    out = {
        "schema_version": MANIFEST_VERSION,
        "name": m.name,
        "units": m.units,
        "intrinsics": {"f_u": m.intrinsics.f_u, "f_v": m.intrinsics.f_v,
                       "c_u": m.intrinsics.c_u, "c_v": m.intrinsics.c_v},
        "frames": [{
            "id": fr.frame_id,
            "depth": fr.depth_path,
            **({"rgb": fr.rgb_path} if fr.rgb_path else {}),
            "annotations": [{"annotator": a.annotator, "joints": _pose_to_json(a.pose)}
                            for a in fr.annotations],
        } for fr in m.frames],
    }
    target = root / "manifest.json"
    target.write_text(json.dumps(out, indent=1))
    return target
