"""
Noise schedule and forward diffusion.

alpha(t) decreases from 1 at t=0 to (numerically) 0 at t=1. The forward
transition noises the full extended state jointly:

    x_t = sqrt(alpha(t)) * x_0 + sqrt(1 - alpha(t)) * eps
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import numpy.typing as npt

from .errors import DomainError, ShapeError
from .numerics import Matrix

ALPHA_FLOOR = 1e-9


class ScheduleKind(str, Enum):
    COSINE = "cosine"
    LINEAR = "linear"


def _check_times(t: npt.ArrayLike) -> npt.NDArray[np.float64]:
    t = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise DomainError(f"diffusion time must lie in [0, 1] (got {t.min() if t.size else t})")
    return t


@dataclass(frozen=True)
class NoiseSchedule:
    """
    alpha-bar schedule on the continuous horizon [0, 1].

    cosine: cos^2((t + s) / (1 + s) * pi/2), normalised by its value at t=0
    linear: 1 - t
    Both are clamped to [ALPHA_FLOOR, 1].

    The offset defaults to 0.0, so the cosine schedule passes exactly
    through alpha(0.5) = 0.5. The improved-DDPM value s = 0.008 is available
    through the `schedule.offset` config key; it shifts alpha(0.5) to about
    0.494 and makes 1 - alpha(t) grow linearly rather than quadratically
    near t = 0.
    """

    kind: ScheduleKind = ScheduleKind.COSINE
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if self.offset < 0.0:
            raise DomainError(f"cosine offset must be >= 0 (got {self.offset})")

    def alpha(self, t):
        """alpha(t) for a scalar or an array of times in [0, 1]."""
        times = _check_times(t)
        if self.kind is ScheduleKind.COSINE:
            s = self.offset
            f = np.cos((times + s) / (1.0 + s) * math.pi / 2.0) ** 2
            f0 = math.cos(s / (1.0 + s) * math.pi / 2.0) ** 2
            values = f / f0
        else:
            values = 1.0 - times
        values = np.clip(values, ALPHA_FLOOR, 1.0)
        if np.ndim(t) == 0:
            return float(values)
        return values

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "offset": self.offset}

    @classmethod
    def from_dict(cls, data: dict) -> NoiseSchedule:
        return cls(ScheduleKind(data.get("kind", "cosine")), float(data.get("offset", 0.0)))


def alpha(schedule: NoiseSchedule, t: float) -> float:
    return schedule.alpha(t)


def forward_diffuse(x0: Matrix, t, eps: Matrix, schedule: NoiseSchedule) -> Matrix:
    """
    Noise x0 to time t. `t` is a scalar or one time per row.

    Raises:
        ShapeError: if eps and x0 differ in shape or t has the wrong length
    """
    if x0.shape != eps.shape:
        raise ShapeError(f"forward_diffuse: x0 {x0.shape} vs eps {eps.shape}")
    a = schedule.alpha(t)
    if np.ndim(a) == 1:
        if a.shape[0] != x0.shape[0]:
            raise ShapeError(f"forward_diffuse: {a.shape[0]} times for {x0.shape[0]} rows")
        a = a[:, None]
    elif np.ndim(a) == 0 and a == 1.0:
        return x0.copy()
    return np.sqrt(a) * x0 + np.sqrt(1.0 - a) * eps


def time_grid(steps: int) -> list[tuple[float, float]]:
    """(t_now, t_next) pairs for a sampler with `steps` steps, from t=1 down to 0."""
    if steps < 1:
        raise DomainError(f"steps must be >= 1 (got {steps})")
    return [(1.0 - step / steps, max(1.0 - (step + 1) / steps, 0.0)) for step in range(steps)]


def posterior_coefficients(schedule: NoiseSchedule, t_now: float, t_next: float) -> tuple[float, float, float]:
    """
    Coefficients of q(x_next | x_now, x_0) = N(c_x0 * x_0 + c_xt * x_now, var).

    Returns:
        (c_x0, c_xt, var)
    """
    a_now = schedule.alpha(t_now)
    a_next = schedule.alpha(t_next)
    one_minus_now = 1.0 - a_now
    beta = 1.0 - a_now / a_next
    c_x0 = math.sqrt(a_next) * beta / one_minus_now
    c_xt = math.sqrt(a_now / a_next) * (1.0 - a_next) / one_minus_now
    var = max((1.0 - a_next) / one_minus_now * beta, 0.0)
    return c_x0, c_xt, var
