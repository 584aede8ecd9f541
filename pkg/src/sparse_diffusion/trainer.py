"""
Training loop for sparse data diffusion.

One step: encode the batch, draw per-sample t and noise, diffuse the
extended state, optionally compute a detached self-conditioning estimate,
predict x_0, and minimise

    mean (dense_pred - dense_target)^2  +  mean log(1 + exp(-y * z))

where y in {-1, +1} are the target sparsity bits and z the predicted
logits. Parameters are updated with Adam; an EMA shadow copy follows them.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
from scipy.special import expit

from .codec import ScaleSpec, encode, split_state
from .denoiser import DenoiserParams, GradientSet, backward, forward, forward_with_cache, x0_estimate
from .errors import ArgumentError, DivergenceError, LabelError, ShapeError
from .numerics import Matrix, Rng, as_matrix
from .schedule import NoiseSchedule, ScheduleKind, forward_diffuse

logger = logging.getLogger(__name__)

StepHook = Callable[[int, Matrix], None]


@dataclass
class TrainConfig:
    """
    Optimisation settings.

    Full-scale runs use learning_rate 2e-4, batch_size 256, 300k steps and
    ema_decay 0.9999; the defaults here are sized for CPU runs.
    """

    learning_rate: float = 2e-4
    batch_size: int = 64
    total_steps: int = 10000
    ema_decay: float = 0.999
    self_cond_prob: float = 0.5
    seed: int = 0
    schedule_kind: str = ScheduleKind.COSINE.value
    log_every: int = 100

    def check(self) -> None:
        if not self.learning_rate > 0:
            raise ArgumentError(f"learning_rate must be > 0 (got {self.learning_rate})")
        if not 0.0 < self.ema_decay < 1.0:
            raise ArgumentError(f"ema_decay must lie in (0, 1) (got {self.ema_decay})")
        if not 0.0 <= self.self_cond_prob <= 1.0:
            raise ArgumentError(f"self_cond_prob must lie in [0, 1] (got {self.self_cond_prob})")
        if self.batch_size < 1 or self.total_steps < 0:
            raise ArgumentError("batch_size must be >= 1 and total_steps >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: list[Matrix]
    v: list[Matrix]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: DenoiserParams) -> AdamState:
        mats = params.matrices()
        return cls([np.zeros_like(p) for p in mats], [np.zeros_like(p) for p in mats])


@dataclass
class LossBreakdown:
    l2: float
    ce: float
    total: float

    def as_row(self, step: int) -> list:
        return [step, repr(self.l2), repr(self.ce), repr(self.total)]


def loss_and_grad(pred: Matrix, target: Matrix, sparsity_bits: bool = True) -> tuple[LossBreakdown, Matrix]:
    """
    Loss terms and dLoss/dPred.

    Raises:
        ShapeError: if shapes differ
        LabelError: if target sparsity bits are not exactly -1 or +1
    """
    if pred.shape != target.shape:
        raise ShapeError(f"loss: pred {pred.shape} vs target {target.shape}")
    grad = np.zeros_like(pred)
    if not sparsity_bits:
        diff = pred - target
        l2 = float(np.mean(diff**2))
        grad[...] = 2.0 * diff / diff.size
        return LossBreakdown(l2, 0.0, l2), grad

    pred_dense, logits = split_state(pred)
    target_dense, labels = split_state(target)
    if not np.all((labels == 1.0) | (labels == -1.0)):
        raise LabelError("sparsity-bit targets must be -1 or +1")
    d = pred_dense.shape[1]

    diff = pred_dense - target_dense
    l2 = float(np.mean(diff**2))
    margin = labels * logits
    ce = float(np.mean(np.logaddexp(0.0, -margin)))
    grad[:, :d] = 2.0 * diff / diff.size
    grad[:, d:] = -labels * expit(-margin) / logits.size
    return LossBreakdown(l2, ce, l2 + ce), grad


def loss(pred: Matrix, target: Matrix, sparsity_bits: bool = True) -> LossBreakdown:
    breakdown, _ = loss_and_grad(pred, target, sparsity_bits)
    return breakdown


def adam_update(params: DenoiserParams, grads: GradientSet, state: AdamState, lr: float) -> None:
    """Adam with bias correction; updates params in place."""
    mats = params.matrices()
    gmats = grads.matrices()
    if len(mats) != len(gmats) or any(p.shape != g.shape for p, g in zip(mats, gmats)):
        raise ShapeError("gradient layout does not match parameters")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(mats, gmats, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def ema_update(ema: DenoiserParams, params: DenoiserParams, decay: float) -> None:
    for e, p in zip(ema.matrices(), params.matrices()):
        e *= decay
        e += (1.0 - decay) * p


def compute_gradients(
    params: DenoiserParams, x_t: Matrix, t, x_sc: Matrix, target: Matrix
) -> tuple[LossBreakdown, GradientSet]:
    """Loss and parameter gradients for a fixed self-conditioning input."""
    pred, cache = forward_with_cache(params, x_t, t, x_sc)
    breakdown, grad_pred = loss_and_grad(pred, target, params.sparsity_bits)
    return breakdown, backward(params, cache, grad_pred)


def prepare_targets(batch: Matrix, scale: ScaleSpec, sparsity_bits: bool) -> Matrix:
    """Extended state for the sparse model, scaled values for the dense baseline."""
    if sparsity_bits:
        return encode(batch, scale)
    return scale.forward(as_matrix(batch, "batch"))


def train_step(
    params: DenoiserParams,
    adam: AdamState,
    ema: DenoiserParams,
    batch: Matrix,
    cfg: TrainConfig,
    rng: Rng,
    schedule: NoiseSchedule,
    scale: ScaleSpec,
    step: int = 0,
    hook: StepHook | None = None,
) -> LossBreakdown:
    """
    One optimisation step.

    Raises:
        DivergenceError: if the loss is not finite
    """
    batch = as_matrix(batch, "batch")
    if batch.shape[0] == 0:
        raise ArgumentError("train_step needs a non-empty batch")
    x0 = prepare_targets(batch, scale, params.sparsity_bits)
    n, width = x0.shape

    t = rng.uniform_array(n)
    eps = rng.gaussian(n, width)
    x_t = forward_diffuse(x0, t, eps, schedule)

    x_sc = np.zeros_like(x_t)
    if rng.uniform(0.0, 1.0) < cfg.self_cond_prob:
        # plain forward: no cache, so nothing flows back through this estimate
        x_sc = x0_estimate(params, forward(params, x_t, t, x_sc))
    if hook is not None:
        hook(step, x_sc)

    breakdown, grads = compute_gradients(params, x_t, t, x_sc, x0)
    if not math.isfinite(breakdown.total):
        raise DivergenceError(step)
    adam_update(params, grads, adam, cfg.learning_rate)
    ema_update(ema, params, cfg.ema_decay)
    return breakdown


@dataclass
class Trainer:
    """Owns parameters, optimiser state, EMA copy and the random stream of one run."""

    params: DenoiserParams
    cfg: TrainConfig
    schedule: NoiseSchedule
    scale: ScaleSpec
    ema: DenoiserParams | None = None
    adam: AdamState | None = None
    rng: Rng | None = None
    step: int = 0
    history: list[LossBreakdown] = field(default_factory=list)

    def __post_init__(self):
        self.cfg.check()
        if self.ema is None:
            self.ema = self.params.copy()
        if self.adam is None:
            self.adam = AdamState.zeros_like(self.params)
        if self.rng is None:
            self.rng = Rng(self.cfg.seed).spawn(0)

    def train_step(self, batch: Matrix, hook: StepHook | None = None) -> LossBreakdown:
        self.step += 1
        breakdown = train_step(
            self.params, self.adam, self.ema, batch, self.cfg, self.rng,
            self.schedule, self.scale, step=self.step, hook=hook,
        )
        self.history.append(breakdown)
        return breakdown

    def fit(
        self,
        batches: Iterator[Matrix],
        steps: int | None = None,
        log_path: str | Path | None = None,
        hook: StepHook | None = None,
    ) -> list[LossBreakdown]:
        """Run `steps` steps (default cfg.total_steps), writing step,l2,ce,total rows to `log_path`."""
        steps = self.cfg.total_steps if steps is None else steps
        window: deque[float] = deque(maxlen=max(self.cfg.log_every, 1))
        handle = open(log_path, "w", newline="") if log_path else None
        try:
            writer = csv.writer(handle) if handle else None
            if writer:
                writer.writerow(["step", "l2", "ce", "total"])
            for _ in range(steps):
                breakdown = self.train_step(next(batches), hook=hook)
                window.append(breakdown.total)
                if writer:
                    writer.writerow(breakdown.as_row(self.step))
                if self.cfg.log_every and self.step % self.cfg.log_every == 0:
                    logger.info(
                        "step %d  loss %.5f (l2 %.5f, ce %.5f)  avg %.5f",
                        self.step, breakdown.total, breakdown.l2, breakdown.ce, sum(window) / len(window),
                    )
        finally:
            if handle:
                handle.close()
        return self.history


def moving_average(values: list[float], window: int) -> np.ndarray:
    """Trailing moving average; empty when fewer than `window` values exist."""
    values = np.asarray(values, dtype=np.float64)
    if window < 1 or values.size < window:
        return np.zeros(0)
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")
