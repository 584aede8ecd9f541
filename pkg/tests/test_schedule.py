"""Tests for the noise schedule and forward diffusion."""

import math

import numpy as np
import pytest

from sparse_diffusion.errors import DomainError, ShapeError
from sparse_diffusion.numerics import Rng
from sparse_diffusion.schedule import (
    ALPHA_FLOOR,
    NoiseSchedule,
    alpha,
    forward_diffuse,
    posterior_coefficients,
    time_grid,
)


class TestNoiseSchedule:
    """Test suite for NoiseSchedule."""

    def test_cosine_endpoints(self, cosine):
        assert alpha(cosine, 0.0) == pytest.approx(1.0, abs=1e-15)
        assert alpha(cosine, 0.5) == pytest.approx(0.5, abs=1e-12)
        assert alpha(cosine, 1.0) == ALPHA_FLOOR

    def test_cosine_is_monotone(self, cosine):
        values = cosine.alpha(np.linspace(0.0, 1.0, 501))
        assert np.all(np.diff(values) <= 0.0)
        assert np.all((values >= ALPHA_FLOOR) & (values <= 1.0))

    def test_offset_keeps_alpha_zero_at_one(self):
        schedule = NoiseSchedule(offset=0.008)
        assert schedule.alpha(0.0) == pytest.approx(1.0)
        assert schedule.alpha(0.5) < 0.5

    def test_linear_kind(self):
        schedule = NoiseSchedule(kind="linear")
        assert schedule.alpha(0.25) == pytest.approx(0.75)

    @pytest.mark.parametrize("t", [-0.01, 1.01, float("nan")])
    def test_time_outside_domain(self, cosine, t):
        with pytest.raises(DomainError):
            cosine.alpha(t)

    def test_negative_offset_rejected(self):
        with pytest.raises(DomainError):
            NoiseSchedule(offset=-0.1)

    def test_dict_round_trip(self):
        schedule = NoiseSchedule(kind="linear", offset=0.01)
        assert NoiseSchedule.from_dict(schedule.to_dict()) == schedule


class TestForwardDiffuse:
    """Test suite for forward_diffuse."""

    def test_time_zero_returns_input(self, cosine):
        x0 = Rng(0).gaussian(3, 4)
        eps = Rng(1).gaussian(3, 4)
        out = forward_diffuse(x0, 0.0, eps, cosine)
        assert np.array_equal(out, x0)
        assert out is not x0

    def test_matches_closed_form(self, cosine):
        x0 = Rng(0).gaussian(2, 3)
        eps = Rng(1).gaussian(2, 3)
        out = forward_diffuse(x0, 0.5, eps, cosine)
        assert np.allclose(out, math.sqrt(0.5) * x0 + math.sqrt(0.5) * eps)

    def test_per_row_times(self, cosine):
        x0 = np.ones((2, 2))
        eps = np.zeros((2, 2))
        out = forward_diffuse(x0, np.array([0.0, 0.5]), eps, cosine)
        assert np.allclose(out[0], 1.0)
        assert np.allclose(out[1], math.sqrt(0.5))

    def test_shape_errors(self, cosine):
        with pytest.raises(ShapeError):
            forward_diffuse(np.zeros((2, 2)), 0.5, np.zeros((2, 3)), cosine)
        with pytest.raises(ShapeError):
            forward_diffuse(np.zeros((2, 2)), np.array([0.1, 0.2, 0.3]), np.zeros((2, 2)), cosine)

    def test_terminal_distribution_is_standard_normal(self, cosine):
        n = 100000
        x0 = np.tile([[0.9, -1.0, 1.0, -0.2]], (n, 1))
        out = forward_diffuse(x0, 1.0, Rng(3).gaussian(n, 4), cosine)
        assert np.all(np.abs(out.mean(axis=0)) < 0.02)
        assert np.all(np.abs(out.var(axis=0) - 1.0) < 0.03)

    @pytest.mark.parametrize("t", [0.25, 0.5, 0.9])
    def test_variance_preserved_for_symmetric_bits(self, cosine, t):
        n = 100000
        x0 = np.where(np.random.default_rng(0).uniform(size=(n, 3)) < 0.5, -1.0, 1.0)
        out = forward_diffuse(x0, t, Rng(4).gaussian(n, 3), cosine)
        assert np.all(np.abs(out.var(axis=0) - 1.0) < 0.03)

    def test_offset_alpha_at_midpoint(self):
        assert NoiseSchedule(offset=0.008).alpha(0.5) == pytest.approx(0.4939, abs=1e-3)
        assert NoiseSchedule().alpha(0.5) == pytest.approx(0.5, abs=1e-15)


class TestTimeGrid:
    """Test suite for time_grid and posterior_coefficients."""

    def test_grid_walks_one_to_zero(self):
        assert time_grid(4) == [(1.0, 0.75), (0.75, 0.5), (0.5, 0.25), (0.25, 0.0)]

    def test_single_step(self):
        assert time_grid(1) == [(1.0, 0.0)]

    def test_rejects_zero_steps(self):
        with pytest.raises(DomainError):
            time_grid(0)

    def test_final_step_is_deterministic(self, cosine):
        c_x0, c_xt, var = posterior_coefficients(cosine, 0.25, 0.0)
        assert c_x0 == pytest.approx(1.0)
        assert c_xt == pytest.approx(0.0, abs=1e-12)
        assert var == 0.0

    def test_posterior_mean_preserves_x0_fixed_point(self, cosine):
        # if x_t is exactly the noiseless diffusion of x0, the mean lands on the noiseless x_next
        a_now, a_next = cosine.alpha(0.6), cosine.alpha(0.4)
        c_x0, c_xt, _ = posterior_coefficients(cosine, 0.6, 0.4)
        assert c_x0 + c_xt * math.sqrt(a_now) == pytest.approx(math.sqrt(a_next))
