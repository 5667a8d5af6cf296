import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxhand.camera import (CameraIntrinsics, DepthFrame, DEPTH_SENTINEL,
                            project, project_points, reproject)


def frame_from(depth, f_u=1.0, f_v=1.0, c_u=0.0, c_v=0.0):
    return DepthFrame(depth=np.asarray(depth, dtype=float),
                      intrinsics=CameraIntrinsics(f_u, f_v, c_u, c_v))


class TestReproject:
    def test_on_axis_point(self):
        frame = frame_from([[1000.0]])
        pts = reproject(frame)
        assert pts.shape == (1, 3)
        np.testing.assert_allclose(pts[0], [0.0, 0.0, 1000.0])

    def test_direct_substitution(self):
        # pixel (u=2, v=4) at 100mm with f=2: (u/f*D, v/f*D, D) = (100, 200, 100)
        depth = np.zeros((5, 5))
        depth[4, 2] = 100.0
        pts = reproject(frame_from(depth, f_u=2.0, f_v=2.0))
        np.testing.assert_allclose(pts, [[100.0, 200.0, 100.0]])

    def test_mixed_sentinels_against_scalar_oracle(self, rng):
        depth = rng.uniform(100, 2000, size=(4, 4))
        depth[rng.random((4, 4)) < 0.4] = DEPTH_SENTINEL
        frame = frame_from(depth, f_u=300.0, f_v=280.0, c_u=1.5, c_v=2.0)
        pts = reproject(frame)
        expected = []
        for v in range(4):
            for u in range(4):
                d = depth[v, u]
                if d == DEPTH_SENTINEL:
                    continue
                expected.append(((u - 1.5) / 300.0 * d, (v - 2.0) / 280.0 * d, d))
        assert len(pts) == np.count_nonzero(depth)
        np.testing.assert_allclose(pts, expected)

    def test_depth_preserved_exactly(self, rng):
        depth = rng.uniform(1, 9999, size=(6, 7))
        frame = frame_from(depth, f_u=500.0, f_v=500.0, c_u=3.0, c_v=2.5)
        pts = reproject(frame)
        assert (pts[:, 2] == depth.ravel()).all()

    def test_x_monotone_in_depth_right_of_center(self):
        c = CameraIntrinsics(100.0, 100.0)
        xs = [((5 - c.c_u) / c.f_u) * d for d in (100.0, 200.0, 400.0)]
        assert xs[0] < xs[1] < xs[2]


class TestProject:
    def test_center(self):
        assert project(np.array([0.0, 0.0, 1000.0]), CameraIntrinsics(1.0, 1.0)) == (0.0, 0.0)

    def test_inverse_of_substitution_example(self):
        u, v = project(np.array([100.0, 200.0, 100.0]), CameraIntrinsics(2.0, 2.0))
        assert (u, v) == pytest.approx((2.0, 4.0))

    def test_behind_camera_rejected(self):
        with pytest.raises(ValueError):
            project(np.array([0.0, 0.0, -5.0]), CameraIntrinsics(1.0, 1.0))
        with pytest.raises(ValueError):
            project_points(np.array([[0.0, 0.0, 0.0]]), CameraIntrinsics(1.0, 1.0))

    def test_round_trip_100_random_points(self, rng):
        intr = CameraIntrinsics(320.0, 300.0, 79.0, 59.0)
        depth = rng.uniform(50, 5000, size=(120, 160))
        frame = DepthFrame(depth=depth, intrinsics=intr)
        pts = reproject(frame)
        pick = rng.choice(len(pts), size=100, replace=False)
        uv = project_points(pts[pick], intr)
        v_idx, u_idx = np.unravel_index(pick, depth.shape)
        np.testing.assert_allclose(uv[:, 0], u_idx, atol=1e-9)
        np.testing.assert_allclose(uv[:, 1], v_idx, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(f_u=st.floats(1.0, 5000.0), f_v=st.floats(1.0, 5000.0),
       u=st.integers(0, 63), v=st.integers(0, 47),
       d=st.floats(1.0, 9999.0))
def test_round_trip_property(f_u, f_v, u, v, d):
    intr = CameraIntrinsics(f_u, f_v, 31.5, 23.5)
    x = (u - intr.c_u) / intr.f_u * d
    y = (v - intr.c_v) / intr.f_v * d
    uu, vv = project(np.array([x, y, d]), intr)
    assert abs(uu - u) < 1e-9
    assert abs(vv - v) < 1e-9


class TestValidation:
    def test_negative_depth_rejected(self):
        with pytest.raises(ValueError):
            frame_from([[-1.0]])

    def test_too_deep_rejected(self):
        with pytest.raises(ValueError):
            frame_from([[10000.0]])

    def test_non_positive_focal_rejected(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(0.0, 1.0)

    def test_principal_point_must_be_inside(self):
        with pytest.raises(ValueError):
            DepthFrame(depth=np.ones((2, 2)),
                       intrinsics=CameraIntrinsics(1.0, 1.0, c_u=5.0, c_v=0.0))

    def test_frames_are_immutable(self):
        frame = frame_from([[100.0]])
        with pytest.raises(ValueError):
            frame.depth[0, 0] = 5.0
