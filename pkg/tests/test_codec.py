"""Tests for the sparsity-bit codec."""

import numpy as np
import pytest

from sparse_diffusion.codec import (
    ScaleSpec,
    decode,
    encode,
    fit_scale,
    quantized_sparsity,
    sparsity_bits,
    sparsity_per_row,
    split_state,
)
from sparse_diffusion.errors import ArgumentError, RangeError, ShapeError


class TestScaleSpec:
    """Test suite for ScaleSpec."""

    def test_maps_range_onto_unit_interval(self):
        scale = ScaleSpec(0.0, 255.0)
        out = scale.forward(np.array([[0.0, 127.5, 255.0]]))
        assert np.allclose(out, [[-1.0, 0.0, 1.0]])

    def test_inverse_round_trip(self):
        scale = ScaleSpec(-2.0, 6.0)
        x = np.array([[-2.0, 0.0, 1.5, 6.0]])
        assert np.allclose(scale.inverse(scale.forward(x)), x, rtol=1e-12, atol=0.0)

    def test_rejects_inverted_bounds(self):
        with pytest.raises(ArgumentError):
            ScaleSpec(1.0, 1.0)

    def test_per_feature_width_checked(self):
        scale = ScaleSpec([0.0, 0.0], [1.0, 2.0], per_feature=True)
        with pytest.raises(ShapeError):
            scale.forward(np.zeros((1, 3)))

    def test_dict_round_trip(self):
        scale = ScaleSpec([0.0, -1.0], [1.0, 2.0], per_feature=True)
        restored = ScaleSpec.from_dict(scale.to_dict())
        assert np.array_equal(restored.data_max, scale.data_max)
        assert restored.per_feature

    def test_fit_scale_starts_at_zero(self):
        scale = fit_scale(np.array([[0.0, 2.0], [4.0, 0.0]]))
        assert float(scale.data_min) == 0.0
        assert float(scale.data_max) == 4.0

    def test_fit_scale_per_feature_handles_constant_columns(self):
        scale = fit_scale(np.array([[0.0, 3.0], [0.0, 1.0]]), per_feature=True)
        assert np.array_equal(scale.data_max, [1.0, 3.0])

    def test_fit_scale_records_smallest_nonzero(self):
        assert fit_scale(np.array([[0.0, 2.0], [-0.25, 4.0]])).min_nonzero == 0.25
        assert fit_scale(np.zeros((2, 3))).min_nonzero is None

    def test_min_nonzero_round_trip(self):
        scale = ScaleSpec(0.0, 255.0, min_nonzero=1.0)
        assert ScaleSpec.from_dict(scale.to_dict()).min_nonzero == 1.0
        assert ScaleSpec.from_dict({"data_min": 0.0, "data_max": 1.0}).min_nonzero is None

    @pytest.mark.parametrize("floor", [0.0, -1.0, float("inf")])
    def test_rejects_bad_min_nonzero(self, floor):
        with pytest.raises(ArgumentError):
            ScaleSpec(0.0, 1.0, min_nonzero=floor)


class TestEncodeDecode:
    """Test suite for encode/decode."""

    def test_sparsity_bits_mark_nonzeros(self):
        bits = sparsity_bits(np.array([[0.0, 0.3, -0.0, 2.0]]))
        assert np.array_equal(bits, [[-1.0, 1.0, -1.0, 1.0]])

    def test_encode_layout(self, unit_scale):
        state = encode(np.array([[0.0, 0.5]]), unit_scale)
        assert np.allclose(state, [[-1.0, 0.0, -1.0, 1.0]])

    def test_round_trip_is_exact_on_zeros(self, sparse_batch, unit_scale):
        decoded = decode(encode(sparse_batch, unit_scale), unit_scale)
        zeros = sparse_batch == 0.0
        assert np.all(decoded[zeros] == 0.0)
        assert np.allclose(decoded[~zeros], sparse_batch[~zeros], rtol=1e-12, atol=0.0)

    def test_decode_masks_non_positive_logits(self, unit_scale):
        state = np.array([[0.5, 0.5, 0.0, -0.3]])
        assert np.array_equal(decode(state, unit_scale), [[0.0, 0.0]])

    def test_decode_clamps_both_channels(self, unit_scale):
        state = np.array([[5.0, 0.0, 3.0, 2.0]])
        assert np.allclose(decode(state, unit_scale), [[1.0, 0.5]])

    def test_kept_entry_at_dense_minimum_stays_nonzero(self, unit_scale):
        decoded = decode(np.array([[-1.0, -1.0, 0.2, -4.0]]), unit_scale)
        assert decoded[0, 0] == np.finfo(np.float64).tiny
        assert decoded[0, 1] == 0.0

    def test_kept_entry_lifted_to_min_nonzero(self):
        scale = ScaleSpec(0.0, 255.0, min_nonzero=1.0)
        decoded = decode(np.array([[-1.0, -0.999, 0.5, 0.5, 0.5, 0.5]]), scale)
        assert np.array_equal(decoded[0, :2], [1.0, 1.0])
        assert decoded[0, 2] == pytest.approx(191.25)

    def test_lift_keeps_sign(self):
        scale = ScaleSpec(-4.0, 4.0, min_nonzero=0.5)
        decoded = decode(np.array([[-0.01, 0.01, 1.0, 1.0]]), scale)
        assert np.array_equal(decoded, [[-0.5, 0.5]])

    def test_zero_pattern_is_logit_sign(self, unit_scale):
        gen = np.random.default_rng(12)
        state = gen.standard_normal((200, 12)) * 2.0
        state[:, :6] = np.where(gen.uniform(size=(200, 6)) < 0.3, -1.0, state[:, :6])
        decoded = decode(state, unit_scale)
        assert np.array_equal(decoded == 0.0, state[:, 6:] <= 0.0)

    def test_encode_rejects_out_of_range(self, unit_scale):
        with pytest.raises(RangeError):
            encode(np.array([[1.5]]), unit_scale)

    def test_split_state_rejects_odd_width(self):
        with pytest.raises(ShapeError):
            split_state(np.zeros((2, 3)))

    def test_randomized_round_trips(self):
        gen = np.random.default_rng(0)
        scale = ScaleSpec(0.0, 10.0)
        for _ in range(50):
            values = gen.uniform(0.5, 10.0, size=(20, 7))
            values[gen.uniform(size=values.shape) < 0.6] = 0.0
            decoded = decode(encode(values, scale), scale)
            assert np.array_equal(decoded == 0.0, values == 0.0)
            nz = values != 0.0
            assert np.all(np.abs(decoded[nz] - values[nz]) <= 1e-12 * np.abs(values[nz]))


class TestSparsityMeasures:
    """Test suite for sparsity measures."""

    def test_sparsity_per_row(self):
        batch = np.array([[0.0, 1.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]])
        assert np.array_equal(sparsity_per_row(batch), [0.75, 0.0])

    def test_quantized_sparsity_counts_near_zero_pixels(self):
        scale = ScaleSpec(0.0, 255.0)
        batch = np.array([[0.0, 0.3, 1.0, 200.0]])
        # 0.3 rounds to code 0, 1.0 to code 1
        assert np.allclose(quantized_sparsity(batch, scale), [0.5])

    def test_quantized_sparsity_levels_checked(self, unit_scale):
        with pytest.raises(ArgumentError):
            quantized_sparsity(np.zeros((1, 2)), unit_scale, levels=1)
