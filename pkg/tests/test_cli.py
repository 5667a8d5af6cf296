import json
from pathlib import Path

import numpy as np
import pytest

from voxhand.cli import main


def run(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def synth_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "train"
    assert run(["synth", "--count", 12, "--seed", 5, "--out", out]) == 0
    return out


GRID_FLAGS = ["--scene-side", 52, "--template-side", 24, "--voxel-size", 20.0]


@pytest.fixture(scope="module")
def built_db(synth_dataset, tmp_path_factory):
    db = tmp_path_factory.mktemp("cli_db") / "train.vxdb"
    assert run(["build-db", "--dataset", synth_dataset, "--out", db] + GRID_FLAGS) == 0
    return db


class TestSynth:
    def test_dataset_loads_back(self, synth_dataset):
        from voxhand.datasets import load_dataset
        ds = load_dataset(synth_dataset)
        assert len(ds) == 12
        record, frame = next(ds.frames())
        assert record.annotations[0].annotator == "synthetic"

    def test_rerun_is_bit_identical(self, synth_dataset, tmp_path):
        again = tmp_path / "again"
        assert run(["synth", "--count", 12, "--seed", 5, "--out", again]) == 0
        for name in sorted(p.name for p in (synth_dataset / "depth").iterdir()):
            a = (synth_dataset / "depth" / name).read_bytes()
            b = (again / "depth" / name).read_bytes()
            assert a == b

    def test_usage_error_exit_1(self):
        assert run(["synth", "--count", 3]) == 1  # missing --out


class TestBuildDb:
    def test_db_round_trips(self, built_db):
        from voxhand.datasets import load_exemplar_db
        db = load_exemplar_db(built_db)
        assert 1 <= len(db.templates) <= 12
        assert db.config.template_side == 24

    def test_rerun_byte_identical(self, synth_dataset, built_db, tmp_path):
        db2 = tmp_path / "again.vxdb"
        assert run(["build-db", "--dataset", synth_dataset, "--out", db2]
                   + GRID_FLAGS) == 0
        assert Path(built_db).read_bytes() == db2.read_bytes()

    def test_dataset_without_annotations_is_data_error(self, tmp_path):
        from voxhand.camera import CameraIntrinsics
        from voxhand.datasets import write_dataset
        empty = tmp_path / "empty_ds"
        write_dataset(empty, "empty", CameraIntrinsics.centered(100, 100, 16, 12),
                      [("f0", np.full((12, 16), 500.0), [])])
        db = tmp_path / "x.vxdb"
        assert run(["build-db", "--dataset", empty, "--out", db] + GRID_FLAGS) == 2


class TestEstimateEvaluate:
    def test_self_match_pipeline(self, synth_dataset, built_db, tmp_path):
        pred = tmp_path / "pred.json"
        assert run(["estimate", "--dataset", synth_dataset, "--db", built_db,
                    "--out", pred]) == 0
        raw = json.loads(pred.read_text())
        assert len(raw["frames"]) == 12
        hits = [f for f in raw["frames"] if f["prediction"] is not None]
        assert len(hits) == 12
        assert all(f["distance"] == 0 for f in hits)

        prefix = tmp_path / "report"
        assert run(["evaluate", "--predictions", pred, "--dataset", synth_dataset,
                    "--mode", "max", "--out-prefix", prefix]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["summary"]["50mm"] == 1.0
        assert (tmp_path / "report.csv").exists()
        assert (tmp_path / "report.svg").exists()

    def test_estimate_grid_mismatch_is_error(self, synth_dataset, built_db, tmp_path):
        # a DB whose grid differs from the frames' natural grid still runs;
        # a frame-count mismatch at evaluate time must fail loudly
        pred = tmp_path / "pred.json"
        run(["estimate", "--dataset", synth_dataset, "--db", built_db, "--out", pred])
        raw = json.loads(pred.read_text())
        raw["frames"] = raw["frames"][:-1]
        pred.write_text(json.dumps(raw))
        assert run(["evaluate", "--predictions", pred, "--dataset", synth_dataset,
                    "--out-prefix", tmp_path / "r"]) == 2

    def test_deterministic_outputs(self, synth_dataset, built_db, tmp_path):
        outs = []
        for name in ("a", "b"):
            pred = tmp_path / f"{name}.json"
            run(["estimate", "--dataset", synth_dataset, "--db", built_db,
                 "--out", pred, "--workers", 2 if name == "b" else 1])
            outs.append(json.loads(pred.read_text()))
        assert outs[0] == outs[1]


class TestConfigFile:
    def test_config_provides_defaults_flags_win(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"synth": {"count": 2, "seed": 9,
                                             "out": str(tmp_path / "from_cfg")}}))
        assert run(["--config", cfg, "synth"]) == 0
        assert (tmp_path / "from_cfg" / "manifest.json").exists()
        # explicit flag beats the file
        assert run(["--config", cfg, "synth", "--out", tmp_path / "flag_wins"]) == 0
        assert (tmp_path / "flag_wins" / "manifest.json").exists()
