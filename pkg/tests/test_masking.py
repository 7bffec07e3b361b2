import math

import numpy as np
import pytest

import uwdepth as uw
from uwdepth import (DepthMap, Image, LossMap, Mask, ParameterError,
                     TgamState, auto_mask, consistency_mask,
                     consistency_mask_multi, percentile, synthesize_view,
                     tgam_mask, tgam_update)

from conftest import make_plane_scene


class TestTgamUpdate:
    def test_first_image_initializes(self):
        state = TgamState()
        new, thr = tgam_update(state, LossMap(np.full((10, 10), 0.33)))
        assert thr == 0.33 and new.initialized

    def test_ema_step(self):
        state = TgamState(threshold=1.0, initialized=True)
        new, thr = tgam_update(state, LossMap(np.full((10, 10), 2.0)))
        np.testing.assert_allclose(thr, 1.02, atol=1e-12)

    def test_trace_matches_scalar_recurrence(self):
        # oracle: recompute t(i) from an independent full sort and run the
        # recurrence in plain floats
        rng = np.random.default_rng(0)
        state = TgamState()
        expected = None
        for i in range(200):
            vals = rng.uniform(0, 1, 400)
            state, thr = tgam_update(state, LossMap(vals.reshape(20, 20)))
            k = math.ceil(0.05 * vals.size)
            t_i = sorted(vals.tolist())[vals.size - k]
            expected = t_i if expected is None else 0.98 * expected + 0.02 * t_i
            assert abs(thr - expected) < 1e-9

    def test_replay_is_bit_identical(self):
        rng = np.random.default_rng(1)
        maps = [LossMap(rng.uniform(0, 1, (12, 12))) for _ in range(20)]
        traces = []
        for _ in range(2):
            state = TgamState()
            trace = []
            for m in maps:
                state, thr = tgam_update(state, m)
                trace.append(thr)
            traces.append(trace)
        assert traces[0] == traces[1]

    def test_empty_loss_map_rejected(self):
        state = TgamState()
        empty = LossMap(np.zeros((4, 4)), np.zeros((4, 4), bool))
        with pytest.raises(ParameterError):
            tgam_update(state, empty)

    def test_ignores_invalid_pixels(self):
        vals = np.full((10, 10), 0.2)
        vals[0, 0] = 100.0
        valid = np.ones((10, 10), bool)
        valid[0, 0] = False
        _, thr = tgam_update(TgamState(), LossMap(vals, valid))
        assert thr == 0.2


class TestTgamMask:
    def test_all_below_keeps_everything(self):
        out = tgam_mask(LossMap(np.full((6, 6), 0.1)), 0.5)
        assert out.keep.all()

    def test_exact_top_fraction_dropped(self):
        rng = np.random.default_rng(2)
        vals = rng.permutation(400).astype(float).reshape(20, 20)
        loss = LossMap(vals)
        state, thr = tgam_update(TgamState(), loss)
        out = tgam_mask(loss, thr)
        dropped = (~out.keep).sum()
        assert dropped == math.ceil(0.05 * 400)

    def test_equal_to_threshold_dropped(self):
        vals = np.array([[0.1, 0.5], [0.5, 0.9]])
        out = tgam_mask(LossMap(vals), 0.5)
        assert out.keep.tolist() == [[True, False], [False, False]]

    def test_invalid_pixels_dropped(self):
        valid = np.array([[True, False]])
        out = tgam_mask(LossMap(np.array([[0.0, 0.0]]), valid), 1.0)
        assert out.keep.tolist() == [[True, False]]

    def test_drop_fraction_within_one_quantum_of_percentile(self):
        rng = np.random.default_rng(3)
        for n in (100, 101, 173, 400):
            vals = rng.uniform(0, 1, n)
            loss = LossMap(vals.reshape(1, n))
            thr = percentile(vals, 100.0 - 5.0)
            dropped = (~tgam_mask(loss, thr).keep).mean()
            assert abs(dropped - 0.05) <= 1.0 / n + 1e-12


class TestAutoMask:
    def test_static_frames_drop_everything(self, plane_scene):
        # target == source: the raw source is a perfect match, warped can
        # at best tie, so the strict comparison drops every pixel
        warped, mask = synthesize_view(plane_scene.target, plane_scene.depth,
                                       plane_scene.pose, plane_scene.K)
        out = auto_mask(plane_scene.target, [plane_scene.target],
                        [(warped, mask)])
        assert out.keep_rate() == 0.0

    def test_real_motion_keeps_most(self):
        # moderate baseline so only ~2 columns leave the view; everything
        # the warp covers should beat the 1.8 px shifted raw source
        scene = make_plane_scene(tx=0.06)
        warped, mask = synthesize_view(scene.source, scene.depth,
                                       scene.pose, scene.K)
        out = auto_mask(scene.target, [scene.source], [(warped, mask)])
        assert out.keep_rate() > 0.95
        assert out.keep[scene.interior() & mask.keep].all()

    def test_exact_tie_drops_all(self):
        rng = np.random.default_rng(4)
        t = Image(rng.random((8, 8, 3)))
        full = Mask(np.ones((8, 8), bool))
        out = auto_mask(t, [t], [(t, full)])
        assert not out.keep.any()

    def test_length_mismatch_rejected(self):
        t = Image(np.zeros((4, 4, 3)))
        full = Mask(np.ones((4, 4), bool))
        with pytest.raises(ParameterError):
            auto_mask(t, [t, t], [(t, full)])

    def test_never_keeps_identical_source_pixel(self):
        # property: wherever some raw source equals the target exactly and
        # every warp differs, the pixel must be dropped
        rng = np.random.default_rng(5)
        t = Image(rng.random((8, 8, 3)))
        warp = Image(np.clip(t.data + 0.2, 0, 1))
        full = Mask(np.ones((8, 8), bool))
        out = auto_mask(t, [t], [(warp, full)])
        assert not out.keep.any()


def test_masks_combine_with_and():
    # the student's training mask is the AND of anomaly and auto masks
    a = Mask(np.array([[True, True], [False, True]]))
    b = Mask(np.array([[True, False], [False, True]]))
    assert (a & b).keep.tolist() == [[True, False], [False, True]]


class TestConsistencyMask:
    def test_perfect_static_scene_keeps_in_view(self, plane_scene):
        depth_s = DepthMap(np.full((48, 64), plane_scene.d))
        out = consistency_mask(plane_scene.depth, depth_s, plane_scene.pose,
                               plane_scene.K, tau=0.03)
        coords = uw.reproject(plane_scene.depth, plane_scene.pose, plane_scene.K)
        in_view = coords.valid & (coords.u >= 0) & (coords.u <= 63)
        assert out.keep[in_view].all()
        assert not out.keep[~in_view].any()

    def test_biased_source_drops_everything(self):
        scene = make_plane_scene(d=1.0, tx=0.05)
        biased = DepthMap(np.full((48, 64), 1.0 + 2 * 0.03))
        out = consistency_mask(scene.depth, biased, scene.pose, scene.K,
                               tau=0.03)
        assert out.keep_rate() < 0.01

    def test_default_tau(self):
        import inspect
        sig = inspect.signature(consistency_mask)
        assert sig.parameters["tau"].default == 0.03

    def test_swap_symmetry_on_perfect_scene(self, plane_scene):
        depth_s = DepthMap(np.full((48, 64), plane_scene.d))
        fwd = consistency_mask(plane_scene.depth, depth_s, plane_scene.pose,
                               plane_scene.K)
        rev = consistency_mask(depth_s, plane_scene.depth,
                               plane_scene.pose.inverse(), plane_scene.K)
        # both directions keep exactly their in-view pixels; the shift is
        # mirrored so the keep counts agree
        assert fwd.keep.sum() == rev.keep.sum()
        assert np.array_equal(fwd.keep[:, ::-1], rev.keep)

    def test_invalid_source_region_dropped(self, plane_scene):
        vals = np.full((48, 64), plane_scene.d)
        valid = np.ones((48, 64), bool)
        valid[:, 30:40] = False
        depth_s = DepthMap(vals, valid)
        out = consistency_mask(plane_scene.depth, depth_s, plane_scene.pose,
                               plane_scene.K)
        coords = uw.reproject(plane_scene.depth, plane_scene.pose, plane_scene.K)
        # pixels landing strictly inside the invalid band cannot be sampled
        inside_hole = (coords.u > 30.0) & (coords.u < 39.0)
        assert not out.keep[inside_hole].any()

    def test_multi_source_takes_minimum(self, plane_scene):
        good = DepthMap(np.full((48, 64), plane_scene.d))
        bad = DepthMap(np.full((48, 64), plane_scene.d + 1.0))
        single = consistency_mask(plane_scene.depth, good, plane_scene.pose,
                                  plane_scene.K)
        multi = consistency_mask_multi(
            plane_scene.depth,
            [(bad, plane_scene.pose), (good, plane_scene.pose)],
            plane_scene.K)
        assert np.array_equal(multi.keep, single.keep)
