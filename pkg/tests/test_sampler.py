"""Tests for the samplers, thresholded baselines and SDDMAT1 files."""

import itertools

import numpy as np
import pytest

from sparse_diffusion.codec import sparsity_per_row
from sparse_diffusion.denoiser import forward, x0_estimate
from sparse_diffusion.errors import ArgumentError, DegenerateStepError, DomainError, FormatError, ShapeError
from sparse_diffusion.numerics import Rng
from sparse_diffusion.sampler import (
    MATRIX_MAGIC,
    SampleConfig,
    ddim_step,
    ddpm_step,
    read_matrix,
    sample,
    sample_dense_baseline,
    sample_extended,
    sample_with_logits,
    threshold_to_sparsity,
    write_matrix,
)
from sparse_diffusion.schedule import forward_diffuse, posterior_coefficients


class TestSteps:
    """Test suite for single sampler steps."""

    def test_ddpm_without_noise_matches_ddim(self, cosine):
        grid = np.linspace(0.0, 1.0, 11)
        pairs = [(a, b) for a, b in itertools.product(grid, grid) if b < a][:100]
        rng = Rng(0)
        for t_now, t_next in pairs:
            x_t = rng.gaussian(3, 4)
            x0 = rng.gaussian(3, 4)
            a = ddpm_step(x_t, x0, t_now, t_next, cosine, rng, eta=0.0)
            b = ddim_step(x_t, x0, t_now, t_next, cosine)
            assert np.max(np.abs(a - b)) < 1e-8

    def test_ddpm_zero_noise_is_posterior_mean(self, cosine):
        x_t = Rng(1).gaussian(2, 4)
        x0 = Rng(2).gaussian(2, 4)
        c_x0, c_xt, _ = posterior_coefficients(cosine, 0.7, 0.3)
        out = ddpm_step(x_t, x0, 0.7, 0.3, cosine, Rng(3), noise=np.zeros((2, 4)))
        assert np.allclose(out, c_x0 * x0 + c_xt * x_t, atol=1e-12)

    def test_ddpm_injects_noise(self, cosine):
        x_t = np.zeros((2, 4))
        x0 = np.zeros((2, 4))
        assert np.any(ddpm_step(x_t, x0, 0.7, 0.3, cosine, Rng(3)) != 0.0)

    @pytest.mark.parametrize("t_now,t_next", [(0.8, 0.5), (0.5, 0.2), (0.3, 0.1)])
    def test_ddpm_preserves_forward_marginal(self, cosine, t_now, t_next):
        n = 100_000
        x0 = np.tile([[1.0, -1.0, 0.3]], (n, 1))
        x_t = forward_diffuse(x0, t_now, Rng(1).gaussian(n, 3), cosine)
        x_next = ddpm_step(x_t, x0, t_now, t_next, cosine, Rng(2))
        a_next = cosine.alpha(t_next)
        assert np.all(np.abs(x_next.mean(axis=0) - np.sqrt(a_next) * x0[0]) < 0.03)
        assert np.all(np.abs(x_next.var(axis=0) - (1.0 - a_next)) < 0.03)

    def test_final_step_returns_prediction(self, cosine):
        x_t = Rng(1).gaussian(2, 4)
        x0 = Rng(2).gaussian(2, 4)
        assert np.allclose(ddpm_step(x_t, x0, 0.1, 0.0, cosine, Rng(0)), x0)
        assert np.allclose(ddim_step(x_t, x0, 0.1, 0.0, cosine), x0)

    def test_degenerate_noise_level(self, cosine):
        x = np.ones((1, 2))
        with pytest.raises(DegenerateStepError) as info:
            ddim_step(x, x, 1e-12, 0.0, cosine)
        assert info.value.exit_code == 3

    def test_times_must_decrease(self, cosine):
        x = np.ones((1, 2))
        with pytest.raises(DomainError):
            ddim_step(x, x, 0.3, 0.5, cosine)

    def test_shape_mismatch(self, cosine):
        with pytest.raises(ShapeError):
            ddim_step(np.ones((1, 2)), np.ones((1, 3)), 0.5, 0.2, cosine)


class TestSample:
    """Test suite for full sampling chains."""

    def test_same_seed_same_samples(self, small_params, cosine, unit_scale):
        cfg = SampleConfig(steps=5, kind="ddim", seed=3, batch=4)
        a = sample(small_params, 3, cfg, cosine, unit_scale, n=6)
        b = sample(small_params, 3, cfg, cosine, unit_scale, n=6)
        assert np.array_equal(a, b)

    def test_ddpm_depends_on_seed(self, small_params, cosine, unit_scale):
        a = sample(small_params, 3, SampleConfig(steps=5, kind="ddpm", seed=1), cosine, unit_scale, n=4)
        b = sample(small_params, 3, SampleConfig(steps=5, kind="ddpm", seed=2), cosine, unit_scale, n=4)
        assert not np.array_equal(a, b)

    def test_single_step_chain(self, small_params, cosine, unit_scale):
        out = sample(small_params, 3, SampleConfig(steps=1), cosine, unit_scale, n=3)
        assert out.shape == (3, 3)
        assert np.all((out >= 0.0) & (out <= 1.0))

    def test_zeros_follow_logits(self, small_params, cosine, unit_scale):
        samples, logits = sample_with_logits(small_params, 3, SampleConfig(steps=4), cosine, unit_scale, n=200)
        assert np.all(np.abs(logits) <= 1.0)
        assert np.array_equal(samples == 0.0, logits <= 0.0)

    def test_chain_feeds_back_the_estimate(self, small_params, cosine):
        cfg = SampleConfig(steps=2, kind="ddim", seed=4, batch=3)
        x_t = Rng(4).spawn(0).gaussian(3, 6)
        first = forward(small_params, x_t, np.full(3, 1.0), np.zeros_like(x_t))
        estimate = x0_estimate(small_params, first)
        x_t = ddim_step(x_t, estimate, 1.0, 0.5, cosine)
        second = forward(small_params, x_t, np.full(3, 0.5), estimate)
        assert np.array_equal(sample_extended(small_params, 3, cfg, cosine), np.clip(second, -1.0, 1.0))

    def test_chunked_chains_cover_n(self, small_params, cosine):
        final = sample_extended(small_params, 5, SampleConfig(steps=3, batch=2), cosine)
        assert final.shape == (5, 6)
        assert np.all(np.abs(final) <= 1.0)

    def test_trajectory(self, small_params, cosine, unit_scale):
        out, trajectory = sample(small_params, 3, SampleConfig(steps=4), cosine, unit_scale, n=2,
                                 return_trajectory=True)
        assert len(trajectory) == 4
        assert all(step.shape == (2, 6) for step in trajectory)
        assert all(np.abs(step).max() <= 1.0 for step in trajectory)
        assert np.array_equal(sample(small_params, 3, SampleConfig(steps=4), cosine, unit_scale, n=2), out)

    def test_sparse_sampler_rejects_dense_model(self, dense_params, cosine, unit_scale):
        with pytest.raises(ShapeError):
            sample(dense_params, 3, SampleConfig(steps=2), cosine, unit_scale, n=2)

    def test_dense_baseline(self, dense_params, small_params, cosine, unit_scale):
        out = sample_dense_baseline(dense_params, 3, SampleConfig(steps=3), cosine, unit_scale, n=4)
        assert out.shape == (4, 3)
        with pytest.raises(ShapeError):
            sample_dense_baseline(small_params, 3, SampleConfig(steps=3), cosine, unit_scale, n=4)

    def test_invalid_config(self):
        with pytest.raises(ArgumentError):
            SampleConfig(steps=0)
        with pytest.raises(ValueError):
            SampleConfig(kind="euler")


class TestThreshold:
    """Test suite for threshold_to_sparsity."""

    def test_target_already_met(self):
        batch = np.arange(1.0, 101.0).reshape(10, 10)
        batch[:3] = 0.0
        out, result = threshold_to_sparsity(batch, 0.3)
        assert result.threshold == 0.0
        assert result.converged
        assert np.array_equal(out, batch)

    def test_halfway_threshold(self):
        batch = np.arange(1.0, 101.0).reshape(10, 10)
        out, result = threshold_to_sparsity(batch, 0.5)
        assert result.achieved_sparsity == 0.5
        assert 50.0 <= result.threshold < 51.0
        assert result.converged
        assert np.all(out[batch <= result.threshold] == 0.0)
        assert np.array_equal(out[batch > result.threshold], batch[batch > result.threshold])

    def test_uses_magnitudes(self):
        batch = np.array([[-1.0, 0.5, -0.2, 2.0]])
        out, result = threshold_to_sparsity(batch, 0.5)
        assert np.array_equal(out == 0.0, [[False, True, True, False]])

    def test_achieved_sparsity_matches_recount(self):
        batch = Rng(0).gaussian(50, 8)
        out, result = threshold_to_sparsity(batch, 0.62)
        assert result.achieved_sparsity == pytest.approx(float(sparsity_per_row(out).mean()))
        assert result.achieved_sparsity - 0.62 <= result.tolerance

    def test_tied_values_are_unconverged(self):
        out, result = threshold_to_sparsity(np.full((4, 4), 5.0), 0.5)
        assert not result.converged
        assert result.achieved_sparsity == 1.0

    def test_target_below_existing_sparsity(self):
        batch = np.array([[0.0, 0.0, 1.0, 2.0]])
        _, result = threshold_to_sparsity(batch, 0.2)
        assert result.threshold == 0.0
        assert not result.converged

    @pytest.mark.parametrize("target", [-0.1, 1.1])
    def test_invalid_target(self, target):
        with pytest.raises(ArgumentError):
            threshold_to_sparsity(np.ones((2, 2)), target)

    def test_empty_batch(self):
        with pytest.raises(ArgumentError):
            threshold_to_sparsity(np.zeros((0, 3)), 0.5)


class TestMatrixFile:
    """Test suite for SDDMAT1 files."""

    def test_round_trip(self, tmp_path):
        m = Rng(0).gaussian(3, 5)
        path = tmp_path / "m.sddmat"
        write_matrix(path, m)
        assert np.array_equal(read_matrix(path), m)
        assert path.read_bytes()[:8] == MATRIX_MAGIC

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.sddmat"
        path.write_bytes(b"XXXXXXXX" + b"\x00" * 8)
        with pytest.raises(FormatError) as info:
            read_matrix(path)
        assert info.value.offset == 0

    def test_truncated(self, tmp_path):
        path = tmp_path / "m.sddmat"
        write_matrix(path, np.ones((2, 2)))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError):
            read_matrix(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "m.sddmat"
        path.write_bytes(b"")
        with pytest.raises(FormatError):
            read_matrix(path)
