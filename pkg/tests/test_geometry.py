import math

import numpy as np
import pytest

import uwdepth as uw
from uwdepth import (CoordField, DepthMap, GeometryError, Image, Intrinsics,
                     ParameterError, Pose, RotationSpec, backproject_points,
                     bilinear_sample, crop_dims, reproject, rotate_center_crop,
                     rotate_center_crop_depth, synthesize_view)
from uwdepth.geometry import _residual_grid, _split_quarter_turns

from conftest import make_plane_scene


def rot_z(deg):
    a = math.radians(deg)
    return np.array([[math.cos(a), -math.sin(a), 0.0],
                     [math.sin(a), math.cos(a), 0.0],
                     [0.0, 0.0, 1.0]])


class TestPoseIntrinsics:
    def test_invalid_rotation_rejected(self):
        with pytest.raises(ParameterError):
            Pose(np.eye(3) * 2.0, np.zeros(3))
        with pytest.raises(ParameterError):
            Pose(-np.eye(3), np.zeros(3))  # det = -1

    def test_inverse_round_trip(self):
        p = Pose(rot_z(17.0), np.array([0.3, -0.2, 0.5]))
        pts = np.random.default_rng(0).normal(size=(10, 3))
        back = p.inverse().apply(p.apply(pts))
        np.testing.assert_allclose(back, pts, atol=1e-12)

    def test_compose(self):
        a = Pose(rot_z(10.0), np.array([1.0, 0.0, 0.0]))
        b = Pose(rot_z(20.0), np.array([0.0, 1.0, 0.0]))
        pts = np.random.default_rng(1).normal(size=(4, 3))
        np.testing.assert_allclose(a.compose(b).apply(pts),
                                   a.apply(b.apply(pts)), atol=1e-12)

    def test_matrix_round_trip(self):
        p = Pose(rot_z(-33.0), np.array([0.1, 0.2, 0.3]))
        q = Pose.from_matrix(p.matrix)
        np.testing.assert_allclose(q.rotation, p.rotation)
        np.testing.assert_allclose(q.translation, p.translation)

    def test_bad_intrinsics(self):
        with pytest.raises(ParameterError):
            Intrinsics(fx=0.0, fy=1.0, cx=0.0, cy=0.0)


class TestReproject:
    def test_identity_pose_exact_grid(self):
        d = DepthMap(np.full((6, 8), 2.0))
        K = Intrinsics(fx=49.0, fy=31.0, cx=3.3, cy=2.9)
        coords = reproject(d, Pose.identity(), K)
        grid = CoordField.identity_grid(6, 8)
        assert np.array_equal(coords.u, grid.u)
        assert np.array_equal(coords.v, grid.v)
        assert coords.valid.all()

    def test_pure_x_translation_uniform_shift(self, plane_scene):
        coords = reproject(plane_scene.depth, plane_scene.pose, plane_scene.K)
        grid = CoordField.identity_grid(plane_scene.depth.height,
                                        plane_scene.depth.width)
        np.testing.assert_allclose(coords.u - grid.u, plane_scene.shift, atol=1e-9)
        np.testing.assert_allclose(coords.v, grid.v, atol=1e-9)

    def test_z_translation_fixes_principal_point(self):
        d = 2.0
        K = Intrinsics(fx=50.0, fy=50.0, cx=4.0, cy=3.0)
        depth = DepthMap(np.full((7, 9), d))
        pose = Pose(np.eye(3), np.array([0.0, 0.0, -d / 2]))
        coords = reproject(depth, pose, K)
        assert abs(coords.u[3, 4] - 4.0) < 1e-12
        assert abs(coords.v[3, 4] - 3.0) < 1e-12

    def test_behind_camera_invalidated(self):
        depth = DepthMap(np.full((4, 4), 1.0))
        K = Intrinsics(fx=10.0, fy=10.0, cx=1.5, cy=1.5)
        pose = Pose(np.eye(3), np.array([0.0, 0.0, -2.0]))  # z' = -1
        coords = reproject(depth, pose, K)
        assert not coords.valid.any()

    def test_nonpositive_depth_rejected(self):
        bad = DepthMap(np.zeros((3, 3)), np.ones((3, 3), bool))
        with pytest.raises(ParameterError):
            reproject(bad, Pose.identity(), Intrinsics(fx=1, fy=1, cx=1, cy=1))

    def test_inverse_pose_composition_is_identity(self):
        # static plane viewed under a small rotation + translation; the
        # source-view depth of the plane follows from the transformed plane
        # equation z' = (d + n'.t) / (n'.ray)
        scene = make_plane_scene(h=40, w=56, d=2.0, tx=0.1)
        rot = rot_z(2.0) @ np.array([[math.cos(math.radians(1.5)), 0, math.sin(math.radians(1.5))],
                                     [0, 1, 0],
                                     [-math.sin(math.radians(1.5)), 0, math.cos(math.radians(1.5))]])
        pose = Pose(rot, np.array([0.08, 0.02, 0.05]))
        coords = reproject(scene.depth, pose, scene.K)

        n_prime = rot[:, 2]
        offset = scene.d + float(n_prime @ pose.translation)
        rays = scene.K.rays(40, 56)
        denom = rays @ n_prime
        depth_s = DepthMap(offset / denom)
        coords_back = reproject(depth_s, pose.inverse(), scene.K)

        # sample the source->target field at the target->source coordinates
        u_img = Image(coords_back.u[:, :, None])
        v_img = Image(coords_back.v[:, :, None])
        u_rt, mask = bilinear_sample(u_img, coords)
        v_rt, _ = bilinear_sample(v_img, coords)
        grid = CoordField.identity_grid(40, 56)
        sel = mask.keep & coords.valid
        assert sel.mean() > 0.8
        assert np.abs(u_rt.data[sel, 0] - grid.u[sel]).max() < 0.05
        assert np.abs(v_rt.data[sel, 0] - grid.v[sel]).max() < 0.05


class TestSynthesizeView:
    def test_identity_pose_bitwise(self):
        rng = np.random.default_rng(2)
        img = Image(rng.random((15, 17, 3)))
        depth = DepthMap(np.full((15, 17), 3.0))
        K = Intrinsics(fx=23.0, fy=29.0, cx=8.0, cy=7.0)
        out, mask = synthesize_view(img, depth, Pose.identity(), K)
        assert np.array_equal(out.data, img.data)
        assert mask.keep.all()

    def test_true_depth_reconstructs_target(self, plane_scene):
        warped, mask = synthesize_view(plane_scene.source, plane_scene.depth,
                                       plane_scene.pose, plane_scene.K)
        pe = uw.photometric_error(plane_scene.target, warped)
        sel = plane_scene.interior() & mask.keep
        assert pe.value[sel].mean() < 1e-3

    def test_wrong_depth_increases_error(self, plane_scene):
        warped_true, m1 = synthesize_view(plane_scene.source, plane_scene.depth,
                                          plane_scene.pose, plane_scene.K)
        double = DepthMap(plane_scene.depth.depth * 2.0)
        warped_wrong, m2 = synthesize_view(plane_scene.source, double,
                                           plane_scene.pose, plane_scene.K)
        pe_true = uw.photometric_error(plane_scene.target, warped_true).value
        pe_wrong = uw.photometric_error(plane_scene.target, warped_wrong).value
        sel = plane_scene.interior() & m1.keep & m2.keep
        assert pe_true[sel].mean() < pe_wrong[sel].mean()

    def test_resolution_mismatch_rejected(self, plane_scene):
        small = Image(np.zeros((8, 8, 3)))
        with pytest.raises(ParameterError):
            synthesize_view(small, plane_scene.depth, plane_scene.pose,
                            plane_scene.K)


class TestBackproject:
    def test_principal_point(self):
        K = Intrinsics(fx=3.0, fy=3.0, cx=4.0, cy=4.0)
        pm = backproject_points(DepthMap(np.full((9, 9), 2.5)), K)
        np.testing.assert_allclose(pm.xyz[4, 4], [0.0, 0.0, 2.5], atol=1e-12)

    def test_one_focal_length_off_center(self):
        # pixel (cx + fx, cy) backprojects to (d, 0, d)
        K = Intrinsics(fx=3.0, fy=3.0, cx=4.0, cy=4.0)
        pm = backproject_points(DepthMap(np.full((9, 9), 2.0)), K)
        np.testing.assert_allclose(pm.xyz[4, 7], [2.0, 0.0, 2.0], atol=1e-12)

    def test_scaling_linearity(self):
        rng = np.random.default_rng(3)
        vals = rng.uniform(1.0, 5.0, (6, 6))
        K = Intrinsics(fx=11.0, fy=13.0, cx=2.5, cy=2.5)
        a = backproject_points(DepthMap(vals), K)
        b = backproject_points(DepthMap(vals * 3.0), K)
        np.testing.assert_allclose(b.xyz, a.xyz * 3.0, rtol=1e-12)

    def test_projection_round_trip(self):
        rng = np.random.default_rng(4)
        K = Intrinsics(fx=40.0, fy=45.0, cx=7.5, cy=6.5)
        depth = DepthMap(rng.uniform(0.5, 6.0, (14, 16)))
        pm = backproject_points(depth, K)
        u = K.fx * pm.xyz[:, :, 0] / pm.xyz[:, :, 2] + K.cx
        v = K.fy * pm.xyz[:, :, 1] / pm.xyz[:, :, 2] + K.cy
        grid = CoordField.identity_grid(14, 16)
        assert np.abs(u - grid.u).max() < 1e-6
        assert np.abs(v - grid.v).max() < 1e-6
        np.testing.assert_array_equal(pm.xyz[:, :, 2], depth.depth)


class TestCropDims:
    def test_zero_angle(self):
        assert crop_dims(288, 448, 0.0) == (288, 448)

    def test_fifteen_degrees(self):
        # (288 cos15 - 448 sin15)/cos30 = 187.33.., (448 cos15 - 288 sin15)/cos30 = 413.6..
        assert crop_dims(288, 448, 15.0) == (187, 413)

    def test_quarter_turn_swaps_losslessly(self):
        assert crop_dims(288, 448, 90.0) == (448, 288)
        assert crop_dims(288, 448, -90.0) == (448, 288)
        assert crop_dims(288, 448, 180.0) == (288, 448)

    def test_45_degrees_degenerate(self):
        with pytest.raises(GeometryError):
            crop_dims(100, 100, 45.0)

    def test_elongated_image_infeasible(self):
        with pytest.raises(GeometryError):
            crop_dims(10, 1000, 30.0)

    def test_negative_angle_symmetric(self):
        assert crop_dims(288, 448, -15.0) == crop_dims(288, 448, 15.0)

    def test_corners_stay_inside_source(self):
        # re-rotating the crop rectangle by -theta must keep all 4 corners
        # inside the original pixel-center box (0.5 px tolerance)
        rng = np.random.default_rng(5)
        for _ in range(200):
            H = int(rng.integers(16, 256))
            W = int(rng.integers(16, 256))
            theta = float(rng.uniform(-44.0, 44.0))
            try:
                h, w = crop_dims(H, W, theta)
            except GeometryError:
                continue
            turns, residual = _split_quarter_turns(theta)
            hh, ww = (W, H) if turns % 2 else (H, W)
            us, vs = _residual_grid(hh, ww, residual, h, w)
            corners_u = [us[0, 0], us[0, -1], us[-1, 0], us[-1, -1]]
            corners_v = [vs[0, 0], vs[0, -1], vs[-1, 0], vs[-1, -1]]
            assert min(corners_u) >= -0.5 and max(corners_u) <= ww - 0.5
            assert min(corners_v) >= -0.5 and max(corners_v) <= hh - 0.5


class TestRotateCenterCrop:
    def test_zero_angle_identity(self):
        rng = np.random.default_rng(6)
        img = Image(rng.random((12, 18, 3)))
        out = rotate_center_crop(img, RotationSpec(0.0, 30.0))
        assert np.array_equal(out.data, img.data)

    def test_180_exact_reversal(self):
        rng = np.random.default_rng(7)
        img = Image(rng.random((9, 13, 3)))
        out = rotate_center_crop(img, RotationSpec(180.0, 180.0))
        assert np.array_equal(out.data, img.data[::-1, ::-1, :])

    def test_quarter_turn_round_trip_bitwise(self):
        rng = np.random.default_rng(8)
        img = Image(rng.random((10, 14, 3)))
        once = rotate_center_crop(img, RotationSpec(90.0, 90.0))
        back = rotate_center_crop(once, RotationSpec(-90.0, 90.0))
        assert np.array_equal(back.data, img.data)

    def test_sentinel_never_leaks(self):
        # rotate a -1-padded canvas with the same residual grid the
        # production path uses; any sample outside the source extent would
        # pull in a negative value
        rng = np.random.default_rng(9)
        pad = 8
        for theta in [float(rng.uniform(-44.9, 44.9)) for _ in range(25)] \
                + [90.0, -90.0, 180.0]:
            H = W = 61
            img = rng.uniform(0.1, 1.0, (H, W))
            turns, residual = _split_quarter_turns(theta)
            base = np.rot90(img, turns)
            h, w = crop_dims(H, W, theta)
            if residual == 0.0:
                assert (h, w) == base.shape
                continue
            us, vs = _residual_grid(base.shape[0], base.shape[1], residual, h, w)
            canvas = np.full((H + 2 * pad, W + 2 * pad), -1.0)
            canvas[pad:pad + H, pad:pad + W] = base
            out, _ = bilinear_sample(Image(canvas),
                                     CoordField(us + pad, vs + pad))
            assert out.data.min() >= 0.0

    def test_output_matches_crop_dims(self):
        img = Image(np.random.default_rng(10).random((48, 48, 3)))
        out = rotate_center_crop(img, RotationSpec(20.0, 45.0))
        assert (out.height, out.width) == crop_dims(48, 48, 20.0)

    def test_depth_rotation_never_blends(self):
        # nearest-neighbor gathering: every output depth exists in the input
        rng = np.random.default_rng(11)
        vals = rng.uniform(1.0, 5.0, (40, 40))
        depth = DepthMap(vals)
        out = rotate_center_crop_depth(depth, RotationSpec(17.0, 45.0))
        assert np.isin(out.depth[out.valid], vals).all()

    def test_depth_rotation_carries_validity(self):
        vals = np.full((40, 40), 2.0)
        valid = np.ones((40, 40), bool)
        valid[10:20, 10:20] = False
        out = rotate_center_crop_depth(DepthMap(vals, valid),
                                       RotationSpec(10.0, 45.0))
        assert not out.valid.all() and out.valid.any()

    def test_rotation_spec_range_enforced(self):
        with pytest.raises(ParameterError):
            RotationSpec(theta=20.0, gamma=15.0)

    def test_geometry_error_propagates(self):
        img = Image(np.zeros((8, 400, 1)))
        with pytest.raises(GeometryError):
            rotate_center_crop(img, RotationSpec(40.0, 45.0))
