import json

import numpy as np
import pytest

from voxhand.camera import CameraIntrinsics
from voxhand.datasets import (Annotation, ExemplarDb, _DirLock, import_adapter,
                              load_dataset, load_exemplar_db, save_exemplar_db,
                              write_dataset, write_manifest)
from voxhand.errors import DataFormatError
from voxhand.kinematics import HandPose
from voxhand.skeleton import JOINT_NAMES
from voxhand.voxels import ExemplarTemplate, GridConfig


def random_pose(rng):
    return HandPose(joints=rng.normal(0, 100, size=(21, 3)),
                    visible=rng.random(21) > 0.3)


def make_dataset(tmp_path, rng, n_frames=5, name="fixture"):
    intr = CameraIntrinsics.centered(100.0, 100.0, 32, 24)
    frames = []
    for i in range(n_frames):
        depth = rng.integers(0, 4000, size=(24, 32)).astype(np.float64)
        frames.append((f"frame{i:04d}", depth, [Annotation("a1", random_pose(rng))]))
    return write_dataset(tmp_path / name, name, intr, frames), frames


class TestDatasetRoundTrip:
    def test_minimal_single_frame(self, tmp_path, rng):
        ds, _ = make_dataset(tmp_path, rng, n_frames=1)
        assert len(ds) == 1
        record, frame = next(ds.frames())
        assert frame.width == 32 and frame.height == 24
        assert len(record.annotations[0].pose.joints) == 21

    def test_depth_bit_exact(self, tmp_path, rng):
        ds, frames = make_dataset(tmp_path, rng, n_frames=4)
        for (record, loaded), (_, depth, _) in zip(ds.frames(), frames):
            assert (loaded.depth == depth).all()

    def test_poses_round_trip(self, tmp_path, rng):
        ds, frames = make_dataset(tmp_path, rng, n_frames=3)
        for record, (_, _, annotations) in zip(ds.manifest.frames, frames):
            got = record.annotations[0].pose
            want = annotations[0].pose
            np.testing.assert_array_equal(got.joints, want.joints)
            np.testing.assert_array_equal(got.visible, want.visible)

    def test_missing_depth_file_named_in_error(self, tmp_path, rng):
        ds, _ = make_dataset(tmp_path, rng, n_frames=2)
        (ds.root / ds.manifest.frames[1].depth_path).unlink()
        with pytest.raises(DataFormatError, match="frame0001"):
            load_dataset(ds.root)

    def test_missing_units_rejected(self, tmp_path, rng):
        ds, _ = make_dataset(tmp_path, rng, n_frames=1)
        raw = json.loads((ds.root / "manifest.json").read_text())
        del raw["units"]
        (ds.root / "manifest.json").write_text(json.dumps(raw))
        with pytest.raises(DataFormatError, match="units"):
            load_dataset(ds.root)

    def test_wrong_schema_version_rejected(self, tmp_path, rng):
        ds, _ = make_dataset(tmp_path, rng, n_frames=1)
        raw = json.loads((ds.root / "manifest.json").read_text())
        raw["schema_version"] = 99
        (ds.root / "manifest.json").write_text(json.dumps(raw))
        with pytest.raises(DataFormatError, match="schema_version"):
            load_dataset(ds.root)

    def test_bad_joint_vocabulary_rejected(self, tmp_path, rng):
        ds, _ = make_dataset(tmp_path, rng, n_frames=1)
        raw = json.loads((ds.root / "manifest.json").read_text())
        joints = raw["frames"][0]["annotations"][0]["joints"]
        joints["palm_center"] = joints.pop("wrist")
        (ds.root / "manifest.json").write_text(json.dumps(raw))
        with pytest.raises(DataFormatError):
            load_dataset(ds.root)

    def test_writer_lock_excludes_second_writer(self, tmp_path, rng):
        target = tmp_path / "locked"
        target.mkdir()
        with _DirLock(target):
            with pytest.raises(DataFormatError, match="locked"):
                write_dataset(target, "x", CameraIntrinsics.centered(10, 10, 4, 4), [])


def make_db(rng, n_templates, config):
    n = config.template_side
    templates = []
    for i in range(n_templates):
        proj = rng.integers(0, n + 1, size=(n, n)).astype(np.int64)
        templates.append(ExemplarTemplate(side=n, proj=proj,
                                          pose=random_pose(rng),
                                          source_id=f"frame{i:05d}"))
    return ExemplarDb(config=config, templates=templates)


class TestExemplarDb:
    CFG = GridConfig(scene_side=32, template_side=6, voxel_size=12.5,
                     origin=(-200.0, -200.0, 50.0))

    def test_empty_db_round_trips(self, tmp_path, rng):
        db = ExemplarDb(config=self.CFG, templates=[])
        save_exemplar_db(db, tmp_path / "empty.vxdb")
        loaded = load_exemplar_db(tmp_path / "empty.vxdb")
        assert loaded.config == self.CFG
        assert loaded.templates == []

    def test_round_trip_equality(self, tmp_path, rng):
        db = make_db(rng, 50, self.CFG)
        path = tmp_path / "db.vxdb"
        save_exemplar_db(db, path)
        loaded = load_exemplar_db(path)
        assert loaded.config == db.config
        assert len(loaded.templates) == 50
        for a, b in zip(db.templates, loaded.templates):
            assert a.source_id == b.source_id
            np.testing.assert_array_equal(a.proj, b.proj)
            np.testing.assert_array_equal(a.pose.joints, b.pose.joints)
            np.testing.assert_array_equal(a.pose.visible, b.pose.visible)

    def test_rewrite_is_byte_identical(self, tmp_path, rng):
        db = make_db(rng, 10, self.CFG)
        save_exemplar_db(db, tmp_path / "a.vxdb")
        save_exemplar_db(db, tmp_path / "b.vxdb")
        assert (tmp_path / "a.vxdb").read_bytes() == (tmp_path / "b.vxdb").read_bytes()

    def test_truncated_file_is_structured_error(self, tmp_path, rng):
        db = make_db(rng, 5, self.CFG)
        path = tmp_path / "db.vxdb"
        save_exemplar_db(db, path)
        data = path.read_bytes()
        path.write_bytes(data[:len(data) - 7])
        with pytest.raises(DataFormatError, match="truncated"):
            load_exemplar_db(path)

    def test_corrupted_record_fails_checksum(self, tmp_path, rng):
        db = make_db(rng, 5, self.CFG)
        path = tmp_path / "db.vxdb"
        save_exemplar_db(db, path)
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(DataFormatError, match="checksum"):
            load_exemplar_db(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.vxdb"
        path.write_bytes(b"NOPE" + b"\0" * 64)
        with pytest.raises(DataFormatError, match="magic"):
            load_exemplar_db(path)


class TestImportAdapter:
    def make_external(self, tmp_path, rng, n=3):
        from PIL import Image
        root = tmp_path / "external"
        root.mkdir()
        (root / "intrinsics.txt").write_text("100.0 100.0 15.5 11.5")
        mapping = {f"J{i}": name for i, name in enumerate(JOINT_NAMES)}
        for k in range(n):
            depth = rng.integers(100, 3000, size=(24, 32)).astype(np.uint16)
            Image.fromarray(depth).save(root / f"depth_{k:03d}.png")
            lines = []
            for i, name in enumerate(JOINT_NAMES):
                x, y, z = rng.normal(0, 50, size=3)
                lines.append(f"J{i} {x} {y} {z + 500} 1")
            (root / f"joints_{k:03d}.txt").write_text("\n".join(lines))
        return root, {v: k for k, v in {n: m for m, n in mapping.items()}.items()}

    def test_fixture_imports_with_mapping(self, tmp_path, rng):
        root, _ = self.make_external(tmp_path, rng)
        mapping = {f"J{i}": name for i, name in enumerate(JOINT_NAMES)}
        ds = import_adapter("depth_png_joints_txt", root, joint_map=mapping)
        assert len(ds) == 3
        record, frame = next(ds.frames())
        assert frame.width == 32
        assert record.annotations[0].pose.joints.shape == (21, 3)

    def test_unknown_format_lists_adapters(self, tmp_path):
        with pytest.raises(DataFormatError, match="depth_png_joints_txt"):
            import_adapter("no_such_format", tmp_path)

    def test_unmapped_joint_fails_loudly(self, tmp_path, rng):
        root, _ = self.make_external(tmp_path, rng, n=1)
        with pytest.raises(DataFormatError, match="vocabulary"):
            import_adapter("depth_png_joints_txt", root)  # no joint_map

    def test_import_is_idempotent(self, tmp_path, rng):
        root, _ = self.make_external(tmp_path, rng)
        mapping = {f"J{i}": name for i, name in enumerate(JOINT_NAMES)}
        a = import_adapter("depth_png_joints_txt", root, joint_map=mapping)
        b = import_adapter("depth_png_joints_txt", root, joint_map=mapping)
        for fa, fb in zip(a.manifest.frames, b.manifest.frames):
            assert fa.frame_id == fb.frame_id
            np.testing.assert_array_equal(fa.annotations[0].pose.joints,
                                          fb.annotations[0].pose.joints)

    def test_imported_manifest_reloads_canonically(self, tmp_path, rng):
        root, _ = self.make_external(tmp_path, rng)
        mapping = {f"J{i}": name for i, name in enumerate(JOINT_NAMES)}
        ds = import_adapter("depth_png_joints_txt", root, joint_map=mapping)
        write_manifest(ds)
        reloaded = load_dataset(root)
        assert len(reloaded) == 3
        np.testing.assert_array_equal(
            reloaded.manifest.frames[0].annotations[0].pose.joints,
            ds.manifest.frames[0].annotations[0].pose.joints)
