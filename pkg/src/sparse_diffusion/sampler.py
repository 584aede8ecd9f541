"""
Backward diffusion samplers, sparsification and thresholded baselines.

The chain starts from x_T ~ N(0, I) and walks t = 1 -> 0 in `steps` equal
steps. Each network output is turned into an x_0 estimate on the state's
scale (clamped dense values, tanh(z / 2) for sparsity-bit logits); the
estimate drives the step and is fed back as the next self-conditioning
input. The final prediction is returned clamped to [-1, 1]; for the sparse
model it is decoded with the sparsity-bit mask, so masked entries are
exactly 0 and kept entries never are.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .binio import BinaryReader
from .codec import ScaleSpec, decode, split_state
from .denoiser import DenoiserParams, forward, x0_estimate
from .errors import ArgumentError, DegenerateStepError, DomainError, FormatError, ShapeError
from .numerics import Matrix, Rng
from .schedule import NoiseSchedule, posterior_coefficients, time_grid

logger = logging.getLogger(__name__)

MATRIX_MAGIC = b"SDDMAT1\x00"


class SamplerKind(str, Enum):
    DDPM = "ddpm"
    DDIM = "ddim"


@dataclass
class SampleConfig:
    """
    Sampler settings. `batch` is the number of chains run together; the
    number of samples drawn is passed to `sample` separately.
    """

    steps: int = 1000
    kind: str = SamplerKind.DDIM.value
    seed: int = 0
    batch: int = 256
    use_ema: bool = True
    eta: float = 1.0

    def __post_init__(self):
        self.kind = SamplerKind(self.kind).value
        if self.steps < 1:
            raise ArgumentError(f"steps must be >= 1 (got {self.steps})")
        if self.batch < 1:
            raise ArgumentError(f"batch must be >= 1 (got {self.batch})")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ThresholdResult:
    threshold: float
    achieved_sparsity: float
    target_sparsity: float
    converged: bool
    tolerance: float
    grid_size: int

    def to_dict(self) -> dict:
        return asdict(self)


def _check_times(schedule: NoiseSchedule, t_now: float, t_next: float) -> tuple[float, float]:
    if not 0.0 <= t_next < t_now <= 1.0:
        raise DomainError(f"sampler step needs 0 <= t_next < t_now <= 1 (got {t_now}, {t_next})")
    a_now = schedule.alpha(t_now)
    if 1.0 - a_now <= 0.0:
        raise DegenerateStepError(f"alpha({t_now}) = 1 leaves no noise to remove")
    return a_now, schedule.alpha(t_next)


def ddim_step(x_t: Matrix, x0_pred: Matrix, t_now: float, t_next: float, schedule: NoiseSchedule) -> Matrix:
    """Deterministic update through the implied noise estimate."""
    if x_t.shape != x0_pred.shape:
        raise ShapeError(f"ddim_step: x_t {x_t.shape} vs x0_pred {x0_pred.shape}")
    a_now, a_next = _check_times(schedule, t_now, t_next)
    eps_hat = (x_t - math.sqrt(a_now) * x0_pred) / math.sqrt(1.0 - a_now)
    return math.sqrt(a_next) * x0_pred + math.sqrt(1.0 - a_next) * eps_hat


def ddpm_step(
    x_t: Matrix,
    x0_pred: Matrix,
    t_now: float,
    t_next: float,
    schedule: NoiseSchedule,
    rng: Rng,
    eta: float = 1.0,
    noise: Matrix | None = None,
) -> Matrix:
    """
    Ancestral step: a draw from q(x_next | x_t, x_0 = x0_pred).

    Written as x_next = sqrt(a_next) x0 + sqrt(1 - a_next - s^2) eps_hat + s z
    with s^2 = eta^2 * posterior variance. eta=1 gives the posterior, whose
    mean this expression equals exactly; eta=0 removes the injected noise
    and reduces to `ddim_step`. `noise` overrides the z draw.
    """
    if x_t.shape != x0_pred.shape:
        raise ShapeError(f"ddpm_step: x_t {x_t.shape} vs x0_pred {x0_pred.shape}")
    a_now, a_next = _check_times(schedule, t_now, t_next)
    _, _, var = posterior_coefficients(schedule, t_now, t_next)
    sigma2 = (eta**2) * var if t_next > 0.0 else 0.0
    eps_hat = (x_t - math.sqrt(a_now) * x0_pred) / math.sqrt(1.0 - a_now)
    direction = math.sqrt(max(1.0 - a_next - sigma2, 0.0))
    x_next = math.sqrt(a_next) * x0_pred + direction * eps_hat
    if sigma2 > 0.0:
        z = rng.gaussian(*x_t.shape) if noise is None else noise
        x_next = x_next + math.sqrt(sigma2) * z
    return x_next


def _run_chain(
    params: DenoiserParams,
    n: int,
    cfg: SampleConfig,
    schedule: NoiseSchedule,
    rng: Rng,
    trajectory: list[Matrix] | None = None,
) -> Matrix:
    width = params.channels
    x_t = rng.gaussian(n, width)
    x_pred = np.zeros_like(x_t)
    estimate = x_pred
    for t_now, t_next in time_grid(cfg.steps):
        x_pred = forward(params, x_t, np.full(n, t_now), estimate)
        estimate = x0_estimate(params, x_pred)
        if trajectory is not None:
            trajectory.append(estimate.copy())
        if cfg.kind == SamplerKind.DDIM.value:
            x_t = ddim_step(x_t, estimate, t_now, t_next, schedule)
        else:
            x_t = ddpm_step(x_t, estimate, t_now, t_next, schedule, rng, eta=cfg.eta)
    # raw final prediction, so the returned sparsity-bit channel holds clamped logits
    return np.clip(x_pred, -1.0, 1.0)


def _chunks(n: int, batch: int):
    done = 0
    while done < n:
        size = min(batch, n - done)
        yield size
        done += size


def sample_extended(
    params: DenoiserParams,
    n: int,
    cfg: SampleConfig,
    schedule: NoiseSchedule,
    return_trajectory: bool = False,
) -> Matrix | tuple[Matrix, list[Matrix]]:
    """Clamped final predictions (n x channels) before decoding."""
    if n < 1:
        raise ArgumentError(f"n must be >= 1 (got {n})")
    rng = Rng(cfg.seed)
    parts, trajectory = [], [] if return_trajectory else None
    for index, size in enumerate(_chunks(n, cfg.batch)):
        steps: list[Matrix] | None = [] if return_trajectory else None
        parts.append(_run_chain(params, size, cfg, schedule, rng.spawn(index), steps))
        if return_trajectory:
            trajectory.append(steps)
        logger.debug("sampled chunk %d (%d rows)", index, size)
    final = np.concatenate(parts, axis=0)
    if return_trajectory:
        merged = [np.concatenate([chunk[i] for chunk in trajectory], axis=0) for i in range(cfg.steps)]
        return final, merged
    return final


def sample(
    params: DenoiserParams,
    d: int,
    cfg: SampleConfig,
    schedule: NoiseSchedule,
    scale: ScaleSpec,
    n: int | None = None,
    return_trajectory: bool = False,
):
    """
    Draw `n` (default cfg.batch) sparse samples in original units.

    With `return_trajectory`, also returns the x_0 estimate of every step.
    """
    if not params.sparsity_bits or params.out_width != 2 * d:
        raise ShapeError(f"sample needs a sparsity-bit model with output width {2 * d}")
    result = sample_extended(params, n or cfg.batch, cfg, schedule, return_trajectory)
    if return_trajectory:
        final, trajectory = result
        return decode(final, scale), trajectory
    return decode(result, scale)


def sample_with_logits(
    params: DenoiserParams, d: int, cfg: SampleConfig, schedule: NoiseSchedule, scale: ScaleSpec, n: int | None = None
) -> tuple[Matrix, Matrix]:
    """Samples together with their clamped sparsity-bit logits."""
    if not params.sparsity_bits or params.out_width != 2 * d:
        raise ShapeError(f"sample needs a sparsity-bit model with output width {2 * d}")
    final = sample_extended(params, n or cfg.batch, cfg, schedule)
    _, logits = split_state(final)
    return decode(final, scale), logits


def sample_dense_baseline(
    params: DenoiserParams, d: int, cfg: SampleConfig, schedule: NoiseSchedule, scale: ScaleSpec, n: int | None = None
) -> Matrix:
    """Plain diffusion samples: clamp and inverse-scale, no sparsification."""
    if params.sparsity_bits or params.out_width != d:
        raise ShapeError(f"dense baseline needs a model without sparsity bits and output width {d}")
    final = sample_extended(params, n or cfg.batch, cfg, schedule)
    return scale.inverse(final)


def threshold_to_sparsity(
    batch: Matrix, target_sparsity: float, grid_size: int = 1000
) -> tuple[Matrix, ThresholdResult]:
    """
    Zero |value| <= tau for the smallest tau on linspace(0, max|batch|, grid_size)
    whose pooled sparsity reaches the target.

    One grid quantum is the sparsity gained by the selected grid step. The
    search is unconverged when the target cannot be approached: either the
    overshoot exceeds max(1 / grid_size, 1 / entries) and the selected step
    only zeroes tied magnitudes (no finer grid could split them), or the
    target lies below the sparsity already present at tau = 0.
    """
    if not 0.0 <= target_sparsity <= 1.0:
        raise ArgumentError(f"target sparsity must lie in [0, 1] (got {target_sparsity})")
    if grid_size < 2:
        raise ArgumentError(f"grid size must be >= 2 (got {grid_size})")
    batch = np.asarray(batch, dtype=np.float64)
    if batch.size == 0:
        raise ArgumentError("cannot threshold an empty batch")

    mags = np.abs(batch)
    ordered = np.sort(mags, axis=None)
    taus = np.linspace(0.0, float(ordered[-1]), grid_size)
    achieved = np.searchsorted(ordered, taus, side="right") / ordered.size
    reached = np.nonzero(achieved >= target_sparsity)[0]
    index = int(reached[0]) if reached.size else grid_size - 1
    tau = float(taus[index])

    base_tolerance = max(1.0 / grid_size, 1.0 / batch.size)
    thresholded = np.where(mags <= tau, 0.0, batch)
    sparsity = float(np.mean(thresholded == 0.0))
    overshoot = sparsity - target_sparsity

    tolerance = base_tolerance
    splittable = False
    if index > 0:
        prev_tau = float(taus[index - 1])
        tolerance = max(base_tolerance, float(achieved[index] - achieved[index - 1]))
        newly = ordered[(ordered > prev_tau) & (ordered <= tau)]
        splittable = newly.size > 0 and newly[0] != newly[-1]
    converged = overshoot >= 0.0 and (overshoot <= base_tolerance or (splittable and overshoot <= tolerance))
    if not converged:
        logger.warning(
            "threshold search unconverged: target %.4f, achieved %.4f at tau %.6g",
            target_sparsity, sparsity, tau,
        )
    return thresholded, ThresholdResult(tau, sparsity, float(target_sparsity), converged, tolerance, grid_size)


def write_matrix(path: str | Path, m: Matrix) -> None:
    """SDDMAT1: magic, u32 rows, u32 cols, f64 row-major values (little-endian)."""
    m = np.ascontiguousarray(m, dtype="<f8")
    if m.ndim != 2:
        raise ShapeError(f"only 2-D matrices can be written (got {m.ndim} dimensions)")
    Path(path).write_bytes(MATRIX_MAGIC + struct.pack("<II", *m.shape) + m.tobytes(order="C"))


def read_matrix(path: str | Path) -> Matrix:
    reader = BinaryReader(Path(path).read_bytes())
    magic = reader.read(len(MATRIX_MAGIC), "magic")
    if magic != MATRIX_MAGIC:
        raise FormatError(f"not an SDDMAT1 file (magic {magic!r})", offset=0)
    m = reader.read_matrix("matrix")
    if not reader.at_end():
        raise FormatError("trailing bytes after matrix", offset=reader.offset)
    return m
