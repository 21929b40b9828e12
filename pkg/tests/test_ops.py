import math

import numpy as np
import pytest

from gaanet.errors import GeometryError, ShapeError
from gaanet.ops import (
    ConvParams,
    LetterboxTransform,
    concat_channels,
    conv2d,
    letterbox,
    maxpool2d,
    sigmoid,
    silu,
    tensor,
    upsample_nearest2x,
)

from oracles import conv2d_loops, conv2d_six_loops, maxpool2d_loops, silu_scalar


def rng(seed=0):
    return np.random.default_rng(seed)


class TestConv2d:
    def test_identity_kernel(self):
        x = np.ones((1, 1, 3, 3), dtype=np.float32)
        w = np.ones((1, 1, 1, 1), dtype=np.float32)
        out = conv2d(x, w, None, ConvParams(1, 1, 1))
        np.testing.assert_array_equal(out, x)

    def test_matches_six_loop_oracle(self):
        r = rng(1)
        x = r.normal(size=(1, 2, 4, 4)).astype(np.float32)
        w = r.normal(size=(3, 2, 3, 3)).astype(np.float32)
        out = conv2d(x, w, None, ConvParams(2, 3, 3, stride=1, padding=1))
        ref = conv2d_six_loops(x, w, stride=1, padding=1)
        np.testing.assert_allclose(out, ref, rtol=1e-5, atol=1e-5)

    def test_k2_s2_halves_spatial_dims(self):
        x = rng(2).normal(size=(1, 4, 8, 8)).astype(np.float32)
        w = rng(3).normal(size=(6, 4, 2, 2)).astype(np.float32)
        out = conv2d(x, w, None, ConvParams(4, 6, 2, stride=2, padding=0))
        assert out.shape == (1, 6, 4, 4)

    def test_bias_and_silu(self):
        x = np.zeros((1, 1, 2, 2), dtype=np.float32)
        w = np.zeros((1, 1, 1, 1), dtype=np.float32)
        b = np.array([1.0], dtype=np.float32)
        out = conv2d(x, w, b, ConvParams(1, 1, 1, activation="silu"))
        np.testing.assert_allclose(out, silu_scalar(1.0), rtol=1e-6)

    def test_depthwise_equals_per_channel_oracle(self):
        r = rng(4)
        c = 4
        x = r.normal(size=(1, c, 6, 6)).astype(np.float32)
        w = r.normal(size=(c, 1, 3, 3)).astype(np.float32)
        out = conv2d(x, w, None, ConvParams(c, c, 3, padding=1, groups=c))
        ref = conv2d_loops(x, w, padding=1, groups=c)
        np.testing.assert_allclose(out, ref, rtol=1e-5, atol=1e-5)

    def test_randomized_against_loop_oracle(self):
        r = rng(5)
        for _ in range(25):
            k = int(r.integers(1, 4))
            g = int(r.choice([1, 1, 2]))
            cg_in = int(r.integers(1, 4))
            cg_out = int(r.integers(1, 4))
            c_in, c_out = g * cg_in, g * cg_out
            s = int(r.integers(1, 3))
            p = int(r.integers(0, k))
            h = int(r.integers(k, 10))
            w = int(r.integers(k, 10))
            x = r.normal(size=(2, c_in, h, w)).astype(np.float32)
            wt = r.normal(size=(c_out, cg_in, k, k)).astype(np.float32)
            b = r.normal(size=(c_out,)).astype(np.float32)
            params = ConvParams(c_in, c_out, k, stride=s, padding=p, groups=g)
            out = conv2d(x, wt, b, params)
            ref = conv2d_loops(x, wt, b, stride=s, padding=p, groups=g)
            np.testing.assert_allclose(out, ref, rtol=1e-5, atol=1e-5)

    def test_input_not_mutated(self):
        x = rng(6).normal(size=(1, 2, 5, 5)).astype(np.float32)
        w = rng(7).normal(size=(2, 2, 3, 3)).astype(np.float32)
        before = x.copy()
        conv2d(x, w, None, ConvParams(2, 2, 3))
        np.testing.assert_array_equal(x, before)

    def test_channel_mismatch_raises(self):
        x = np.zeros((1, 3, 4, 4), dtype=np.float32)
        w = np.zeros((2, 2, 1, 1), dtype=np.float32)
        with pytest.raises(ShapeError, match="channels"):
            conv2d(x, w, None, ConvParams(2, 2, 1))

    def test_weight_shape_mismatch_raises(self):
        x = np.zeros((1, 2, 4, 4), dtype=np.float32)
        w = np.zeros((2, 2, 3, 3), dtype=np.float32)
        with pytest.raises(ShapeError, match="weights"):
            conv2d(x, w, None, ConvParams(2, 2, 1))

    def test_empty_output_raises(self):
        x = np.zeros((1, 1, 2, 2), dtype=np.float32)
        w = np.zeros((1, 1, 5, 5), dtype=np.float32)
        with pytest.raises(GeometryError):
            conv2d(x, w, None, ConvParams(1, 1, 5, padding=0))

    def test_groups_must_divide_channels(self):
        with pytest.raises(ShapeError):
            ConvParams(3, 4, 1, groups=2)

    def test_default_padding_is_half_kernel(self):
        assert ConvParams(1, 1, 3).padding == 1
        assert ConvParams(1, 1, 5).padding == 2
        assert ConvParams(1, 1, 1).padding == 0


class TestSilu:
    def test_zero(self):
        assert silu(np.zeros((1, 1, 1, 1), dtype=np.float32))[0, 0, 0, 0] == 0.0

    def test_large_positive_approaches_identity(self):
        z = np.full((1, 1, 1, 1), 30.0, dtype=np.float32)
        np.testing.assert_allclose(silu(z), z, rtol=1e-6)

    def test_scalar_reference_at_one(self):
        z = np.ones((1, 1, 1, 1), dtype=np.float32)
        np.testing.assert_allclose(silu(z)[0, 0, 0, 0], silu_scalar(1.0), rtol=1e-6)

    def test_no_overflow_for_large_negative(self):
        z = np.full((1, 1, 1, 1), -100.0, dtype=np.float32)
        out = silu(z)
        assert np.isfinite(out).all()
        assert abs(out[0, 0, 0, 0]) < 1e-20

    def test_sigmoid_symmetry(self):
        z = rng(8).normal(size=(1, 1, 4, 4)).astype(np.float32)
        np.testing.assert_allclose(sigmoid(z) + sigmoid(-z), 1.0, atol=1e-6)


class TestMaxPool:
    def test_constant_input(self):
        x = np.full((1, 2, 6, 6), 3.5, dtype=np.float32)
        out = maxpool2d(x, 2, stride=2)
        assert out.shape == (1, 2, 3, 3)
        np.testing.assert_array_equal(out, np.full((1, 2, 3, 3), 3.5))

    def test_ramp(self):
        x = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
        out = maxpool2d(x, 2, stride=2)
        np.testing.assert_array_equal(out[0, 0], [[5, 7], [13, 15]])

    def test_sppf_geometry_preserves_shape_and_matches_oracle(self):
        x = rng(9).normal(size=(1, 3, 7, 5)).astype(np.float32)
        out = maxpool2d(x, 5, stride=1, padding=2)
        assert out.shape == x.shape
        ref = maxpool2d_loops(x, 5, stride=1, padding=2)
        np.testing.assert_array_equal(out, ref)

    def test_bounded_by_input_extrema(self):
        x = rng(10).normal(size=(1, 2, 8, 8)).astype(np.float32)
        out = maxpool2d(x, 3, stride=2, padding=1)
        assert out.max() <= x.max()
        assert out.min() >= x.min()

    def test_oversized_padding_rejected(self):
        x = np.zeros((1, 1, 4, 4), dtype=np.float32)
        with pytest.raises(GeometryError):
            maxpool2d(x, 2, stride=1, padding=2)


class TestUpsample:
    def test_single_value(self):
        x = np.array([[[[7.0]]]], dtype=np.float32)
        out = upsample_nearest2x(x)
        np.testing.assert_array_equal(out, np.full((1, 1, 2, 2), 7.0))

    def test_block_replication(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]], dtype=np.float32)
        out = upsample_nearest2x(x)
        expected = np.array(
            [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]], dtype=np.float32
        )
        np.testing.assert_array_equal(out[0, 0], expected)

    def test_round_trip_via_topleft_sampling(self):
        x = rng(11).normal(size=(1, 3, 5, 4)).astype(np.float32)
        up = upsample_nearest2x(x)
        np.testing.assert_array_equal(up[:, :, ::2, ::2], x)


class TestConcat:
    def test_single_part(self):
        x = rng(12).normal(size=(1, 2, 3, 3)).astype(np.float32)
        np.testing.assert_array_equal(concat_channels([x]), x)

    def test_parts_recoverable(self):
        a = rng(13).normal(size=(1, 2, 4, 4)).astype(np.float32)
        b = rng(14).normal(size=(1, 3, 4, 4)).astype(np.float32)
        out = concat_channels([a, b])
        assert out.shape[1] == 5
        np.testing.assert_array_equal(out[:, :2], a)
        np.testing.assert_array_equal(out[:, 2:], b)

    def test_channel_arithmetic_two_halves(self):
        # two intrinsic maps, each spawning one extra map -> four channels
        halves = [np.zeros((1, 2, 2, 2), dtype=np.float32)] * 2
        assert concat_channels(halves).shape[1] == 4

    def test_spatial_mismatch_rejected(self):
        a = np.zeros((1, 1, 4, 4), dtype=np.float32)
        b = np.zeros((1, 1, 5, 4), dtype=np.float32)
        with pytest.raises(ShapeError):
            concat_channels([a, b])


class TestLetterbox:
    def test_square_identity(self):
        x = rng(15).random((1, 3, 256, 256)).astype(np.float32)
        out, tr = letterbox(x, 256)
        np.testing.assert_array_equal(out, x)
        assert (tr.scale, tr.pad_x, tr.pad_y) == (1.0, 0, 0)

    def test_wide_image_pads_top_and_bottom(self):
        x = rng(16).random((1, 1, 128, 256)).astype(np.float32)
        out, tr = letterbox(x, 256)
        assert out.shape == (1, 1, 256, 256)
        assert (tr.pad_x, tr.pad_y) == (0, 64)
        np.testing.assert_array_equal(out[:, :, 64:192, :], x)
        assert np.allclose(out[:, :, :64, :], 114.0 / 255.0)

    def test_box_round_trip(self):
        x = rng(17).random((1, 3, 100, 240)).astype(np.float32)
        _, tr = letterbox(x, 256)
        boxes = np.array([[10.0, 20.0, 200.0, 90.0], [0.0, 0.0, 240.0, 100.0]])
        back = tr.boxes_to_image(tr.boxes_to_network(boxes))
        assert np.abs(back - boxes).max() < 0.5

    def test_zero_dim_rejected(self):
        with pytest.raises((GeometryError, ShapeError)):
            letterbox(np.zeros((1, 1, 0, 4), dtype=np.float32), 32)


class TestTensorValidation:
    def test_rank_checked(self):
        with pytest.raises(ShapeError):
            tensor(np.zeros((3, 3)))

    def test_outputs_finite_for_finite_inputs(self):
        r = rng(18)
        x = r.normal(size=(1, 4, 9, 9)).astype(np.float32) * 10
        w = r.normal(size=(4, 4, 3, 3)).astype(np.float32)
        paths = [
            conv2d(x, w, None, ConvParams(4, 4, 3, activation="silu")),
            maxpool2d(x, 5, 1, 2),
            upsample_nearest2x(x),
        ]
        for out in paths:
            assert np.isfinite(out).all()
