import numpy as np
import pytest
from fastapi.testclient import TestClient

from voxhand.camera import project
from voxhand.datasets import write_dataset
from voxhand.kinematics import default_skeleton
from voxhand.render import RenderConfig
from voxhand.service import create_app, normalize_depth
from voxhand.skeleton import JOINT_NAMES


@pytest.fixture(scope="module")
def annotated_dataset(tmp_path_factory, posed_sample, fist_sample):
    root = tmp_path_factory.mktemp("service_ds")
    config = RenderConfig.default()
    frames = [("frame00000", posed_sample.frame.depth, []),
              ("frame00001", fist_sample.frame.depth, [])]
    ds = write_dataset(root / "ds", "service-fixture", config.intrinsics, frames)
    return ds


@pytest.fixture()
def client(annotated_dataset, tmp_path):
    app = create_app(annotated_dataset, annotations_path=tmp_path / "ann.jsonl")
    return TestClient(app)


def true_labels(sample, config, names=None):
    skeleton = default_skeleton()
    names = names or JOINT_NAMES
    labels = {}
    for name in names:
        j = skeleton.index(name)
        u, v = project(sample.pose.joints[j], config.intrinsics)
        labels[name] = [float(u), float(v)]
    return labels


class TestFrameEndpoints:
    def test_meta_lists_joints_and_edges(self, client):
        meta = client.get("/v1/meta").json()
        assert meta["joint_names"] == list(JOINT_NAMES)
        assert len(meta["edges"]) == 20

    def test_frames_listing(self, client):
        frames = client.get("/v1/frames").json()["frames"]
        assert [f["id"] for f in frames] == ["frame00000", "frame00001"]

    def test_frame_metadata_and_depth_png(self, client):
        meta = client.get("/v1/frames/frame00000").json()
        assert meta["width"] == 160 and meta["height"] == 120
        png = client.get("/v1/frames/frame00000/depth.png")
        assert png.status_code == 200
        assert png.headers["content-type"] == "image/png"

    def test_unknown_frame_404(self, client):
        assert client.get("/v1/frames/nope").status_code == 404

    def test_rgb_absent_404(self, client):
        assert client.get("/v1/frames/frame00000/rgb.png").status_code == 404

    def test_normalization_rule(self):
        depth = np.array([[0.0, 500.0], [1000.0, 750.0]])
        img, lo, hi = normalize_depth(depth)
        assert (lo, hi) == (500.0, 1000.0)
        assert img[0, 0] == 0           # sentinel stays black
        assert img[0, 1] == 1           # nearest measured pixel
        assert img[1, 0] == 255         # farthest


class TestFit:
    def test_empty_labels_warn_without_fit(self, client):
        r = client.post("/v1/frames/frame00000/fit", json={"labels": {}})
        assert r.status_code == 200
        body = r.json()
        assert body["fit"] is None
        assert body["warning"] == "under_constrained"

    def test_two_labels_fit_but_flagged(self, client, posed_sample, render_config):
        labels = true_labels(posed_sample, render_config, ["wrist", "index_tip"])
        r = client.post("/v1/frames/frame00000/fit", json={"labels": labels})
        body = r.json()
        assert body["fit"] is not None
        assert body["warning"] == "under_constrained"

    def test_full_labels_fit_close_to_clicks(self, client, posed_sample, render_config):
        labels = true_labels(posed_sample, render_config)
        r = client.post("/v1/frames/frame00000/fit", json={"labels": labels})
        body = r.json()
        assert body["warning"] is None
        fit = body["fit"]
        for name, (u, v) in labels.items():
            fu, fv = fit["joints2d"][name]
            assert abs(fu - u) < 2.0 and abs(fv - v) < 2.0
        assert fit["mean_residual_px"] < 2.0

    def test_fit_recovers_3d_within_30mm(self, client, posed_sample, render_config):
        labels = true_labels(posed_sample, render_config)
        body = client.post("/v1/frames/frame00000/fit", json={"labels": labels}).json()
        skeleton = default_skeleton()
        err = []
        for i, name in enumerate(JOINT_NAMES):
            got = np.array(body["fit"]["joints3d"][name])
            err.append(np.linalg.norm(got - posed_sample.pose.joints[i]))
        assert max(err) < 30.0

    def test_unknown_joint_in_labels_422(self, client):
        r = client.post("/v1/frames/frame00000/fit",
                        json={"labels": {"knuckle": [5.0, 5.0]}})
        assert r.status_code == 422


class TestAcceptAndAgreement:
    def test_accept_persists_and_round_trips(self, client, posed_sample, render_config):
        labels = true_labels(posed_sample, render_config)
        r = client.post("/v1/frames/frame00000/accept",
                        json={"labels": labels, "annotator": "alice"})
        assert r.status_code == 200
        meta = client.get("/v1/frames/frame00000").json()
        assert [a["annotator"] for a in meta["annotations"]] == ["alice"]

    def test_accept_twice_same_annotator_idempotent(self, client, posed_sample,
                                                    render_config):
        labels = true_labels(posed_sample, render_config)
        for _ in range(2):
            client.post("/v1/frames/frame00000/accept",
                        json={"labels": labels, "annotator": "alice"})
        meta = client.get("/v1/frames/frame00000").json()
        assert len(meta["annotations"]) == 1

    def test_accept_without_labels_rejected(self, client):
        r = client.post("/v1/frames/frame00000/accept",
                        json={"labels": {}, "annotator": "alice"})
        assert r.status_code == 422

    def test_restart_keeps_annotations(self, annotated_dataset, tmp_path,
                                       posed_sample, render_config):
        store = tmp_path / "persist.jsonl"
        app1 = create_app(annotated_dataset, annotations_path=store)
        c1 = TestClient(app1)
        labels = true_labels(posed_sample, render_config)
        c1.post("/v1/frames/frame00000/accept",
                json={"labels": labels, "annotator": "alice"})
        app2 = create_app(annotated_dataset, annotations_path=store)
        c2 = TestClient(app2)
        meta = c2.get("/v1/frames/frame00000").json()
        assert [a["annotator"] for a in meta["annotations"]] == ["alice"]

    def test_agreement_needs_two_annotators(self, client, posed_sample, render_config):
        labels = true_labels(posed_sample, render_config)
        client.post("/v1/frames/frame00000/accept",
                    json={"labels": labels, "annotator": "alice"})
        assert client.get("/v1/agreement").status_code == 409
        client.post("/v1/frames/frame00000/accept",
                    json={"labels": labels, "annotator": "bob"})
        body = client.get("/v1/agreement").json()
        assert body["n_frames"] == 1
        # same labels -> same fit -> perfect agreement
        assert body["proportions"][-1] == 1.0

    def test_agreement_matches_library_curve(self, client, posed_sample, fist_sample,
                                             render_config):
        for frame_id, sample in (("frame00000", posed_sample),
                                 ("frame00001", fist_sample)):
            labels = true_labels(sample, render_config)
            for annotator in ("alice", "bob"):
                client.post(f"/v1/frames/{frame_id}/accept",
                            json={"labels": labels, "annotator": annotator})
        body = client.get("/v1/agreement?mode=max").json()
        assert body["n_frames"] == 2
        assert body["proportions"][0] == 1.0
