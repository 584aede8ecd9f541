"""
Skip-connected MLP denoiser f(x_t, t, x_sc) -> x_0 prediction.

Network input is u = [x_t | x_sc]. Every hidden block sees the previous
block's activations concatenated with u; the first block additionally
receives a projected sinusoidal embedding of t. Hidden activations are
SiLU, the output layer is linear: the first d outputs are dense
predictions, the last d are raw sparsity-bit logits.

A dense-only variant (sparsity_bits=False) predicts d values from a 2d-wide
input; it backs the plain diffusion baselines.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .binio import BinaryReader, pack_matrix, pack_u32
from .errors import ArgumentError, CheckpointVersionError, DomainError, FormatError, ShapeError, StateError
from .numerics import Matrix, Rng

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SDDCKPT1"


@dataclass(frozen=True)
class TimeEmbedding:
    """Sinusoidal embedding of t in [0, 1]; t is stretched by `time_scale` first."""

    dim: int = 64
    base: float = 10000.0
    time_scale: float = 1000.0

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2:
            raise ArgumentError(f"time embedding dimension must be even and >= 2 (got {self.dim})")

    def __call__(self, t: np.ndarray) -> Matrix:
        half = self.dim // 2
        freqs = np.exp(-math.log(self.base) * np.arange(half, dtype=np.float64) / half)
        angles = (np.asarray(t, dtype=np.float64) * self.time_scale)[:, None] * freqs[None, :]
        return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


@dataclass
class DenoiserParams:
    d: int
    hidden: tuple[int, ...]
    temb_dim: int
    sparsity_bits: bool
    time_weight: Matrix
    weights: list[Matrix]
    biases: list[Matrix]

    @property
    def channels(self) -> int:
        """Width of the diffused state: 2d with sparsity bits, d without."""
        return 2 * self.d if self.sparsity_bits else self.d

    @property
    def in_width(self) -> int:
        return 2 * self.channels

    @property
    def out_width(self) -> int:
        return self.channels

    @property
    def embedding(self) -> TimeEmbedding:
        return TimeEmbedding(self.temb_dim)

    def matrices(self) -> list[Matrix]:
        """All parameter matrices in checkpoint order: time projection, then (W, b) per layer."""
        out = [self.time_weight]
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def architecture(self) -> dict:
        return {
            "d": self.d,
            "hidden": list(self.hidden),
            "temb_dim": self.temb_dim,
            "sparsity_bits": self.sparsity_bits,
        }

    def copy(self) -> DenoiserParams:
        return DenoiserParams(
            self.d,
            self.hidden,
            self.temb_dim,
            self.sparsity_bits,
            self.time_weight.copy(),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    @classmethod
    def from_matrices(cls, architecture: dict, matrices: list[Matrix]) -> DenoiserParams:
        params = init(
            Rng(0),
            architecture["d"],
            architecture["hidden"],
            architecture["temb_dim"],
            architecture.get("sparsity_bits", True),
        )
        expected = params.matrices()
        if len(matrices) != len(expected):
            raise FormatError(f"expected {len(expected)} parameter matrices, found {len(matrices)}")
        for target, source in zip(expected, matrices):
            if target.shape != source.shape:
                raise FormatError(f"parameter shape {source.shape} does not match architecture {target.shape}")
            target[...] = source
        return params


@dataclass
class GradientSet:
    """Gradients with the same layout as DenoiserParams."""

    time_weight: Matrix
    weights: list[Matrix]
    biases: list[Matrix]

    def matrices(self) -> list[Matrix]:
        out = [self.time_weight]
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


@dataclass
class ForwardCache:
    """Activations kept by `forward_with_cache` for the backward pass."""

    u: Matrix
    temb: Matrix
    inputs: list[Matrix] = field(default_factory=list)
    pre: list[Matrix] = field(default_factory=list)
    acts: list[Matrix] = field(default_factory=list)


def _silu(x: Matrix) -> Matrix:
    return x * expit(x)


def _silu_grad(x: Matrix) -> Matrix:
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def init(
    rng: Rng,
    d: int,
    hidden: list[int] | tuple[int, ...],
    temb_dim: int = 64,
    sparsity_bits: bool = True,
) -> DenoiserParams:
    """Fan-in scaled Gaussian weights, zero biases."""
    if d < 1:
        raise ArgumentError(f"d must be >= 1 (got {d})")
    hidden = tuple(int(h) for h in hidden)
    if not hidden or any(h < 1 for h in hidden):
        raise ArgumentError(f"hidden must be a non-empty list of positive widths (got {hidden})")
    TimeEmbedding(temb_dim)

    channels = 2 * d if sparsity_bits else d
    in_width = 2 * channels
    time_weight = rng.gaussian(temb_dim, hidden[0]) / math.sqrt(temb_dim)
    weights, biases = [], []
    prev = 0
    for width in hidden:
        fan_in = prev + in_width
        weights.append(rng.gaussian(fan_in, width) / math.sqrt(fan_in))
        biases.append(np.zeros((1, width)))
        prev = width
    weights.append(rng.gaussian(prev, channels) / math.sqrt(prev))
    biases.append(np.zeros((1, channels)))
    return DenoiserParams(d, hidden, temb_dim, sparsity_bits, time_weight, weights, biases)


def _check_inputs(params: DenoiserParams, x_t: Matrix, t_batch, x_sc: Matrix) -> np.ndarray:
    width = params.channels
    if x_t.ndim != 2 or x_t.shape[1] != width:
        raise ShapeError(f"x_t must be n x {width} (got {x_t.shape})")
    if x_sc.shape != x_t.shape:
        raise ShapeError(f"x_sc {x_sc.shape} does not match x_t {x_t.shape}")
    t = np.broadcast_to(np.asarray(t_batch, dtype=np.float64), (x_t.shape[0],))
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise DomainError("t_batch entries must lie in [0, 1]")
    return t


def forward_with_cache(
    params: DenoiserParams, x_t: Matrix, t_batch, x_sc: Matrix
) -> tuple[Matrix, ForwardCache]:
    t = _check_inputs(params, x_t, t_batch, x_sc)
    u = np.concatenate([x_t, x_sc], axis=1)
    temb = params.embedding(t)
    cache = ForwardCache(u=u, temb=temb)

    h = None
    n_hidden = len(params.hidden)
    for layer in range(n_hidden):
        z = u if h is None else np.concatenate([h, u], axis=1)
        pre = z @ params.weights[layer] + params.biases[layer]
        if layer == 0:
            pre = pre + temb @ params.time_weight
        h = _silu(pre)
        cache.inputs.append(z)
        cache.pre.append(pre)
        cache.acts.append(h)
    out = h @ params.weights[-1] + params.biases[-1]
    return out, cache


def forward(params: DenoiserParams, x_t: Matrix, t_batch, x_sc: Matrix) -> Matrix:
    """Predict x_0 from (x_t, t, self-conditioning estimate)."""
    out, _ = forward_with_cache(params, x_t, t_batch, x_sc)
    return out


def x0_estimate(params: DenoiserParams, out: Matrix) -> Matrix:
    """
    Map raw network output onto the scale of the diffused state.

    Dense predictions are clamped to [-1, 1]. A sparsity-bit logit z becomes
    the conditional mean of its +-1 bit, 2 * sigmoid(z) - 1 = tanh(z / 2).
    Sampler steps and self-conditioning inputs both consume this estimate.
    """
    if out.ndim != 2 or out.shape[1] != params.out_width:
        raise ShapeError(f"network output must be n x {params.out_width} (got {out.shape})")
    estimate = np.clip(out, -1.0, 1.0)
    if params.sparsity_bits:
        estimate[:, params.d:] = np.tanh(0.5 * out[:, params.d:])
    return estimate


def _backprop(
    params: DenoiserParams, cache: ForwardCache | None, upstream: Matrix
) -> tuple[GradientSet, Matrix]:
    if cache is None or not cache.acts:
        raise StateError("backward needs the activation cache of a matching forward pass")
    if upstream.shape != (cache.u.shape[0], params.out_width):
        raise ShapeError(f"upstream gradient {upstream.shape} does not match output")

    n_hidden = len(params.hidden)
    grad_w = [np.zeros_like(w) for w in params.weights]
    grad_b = [np.zeros_like(b) for b in params.biases]
    grad_u = np.zeros_like(cache.u)

    grad_w[-1] = cache.acts[-1].T @ upstream
    grad_b[-1] = upstream.sum(axis=0, keepdims=True)
    grad_h = upstream @ params.weights[-1].T

    grad_time = None
    for layer in reversed(range(n_hidden)):
        grad_pre = grad_h * _silu_grad(cache.pre[layer])
        grad_w[layer] = cache.inputs[layer].T @ grad_pre
        grad_b[layer] = grad_pre.sum(axis=0, keepdims=True)
        grad_z = grad_pre @ params.weights[layer].T
        if layer == 0:
            grad_u += grad_z
            grad_time = cache.temb.T @ grad_pre
        else:
            width = params.hidden[layer - 1]
            grad_h = grad_z[:, :width]
            grad_u += grad_z[:, width:]
    return GradientSet(grad_time, grad_w, grad_b), grad_u


def backward(params: DenoiserParams, cache: ForwardCache | None, upstream: Matrix) -> GradientSet:
    """
    Gradients of a scalar loss w.r.t. every parameter, given dLoss/dOutput.

    Raises:
        StateError: if no forward cache is supplied
    """
    grads, _ = _backprop(params, cache, upstream)
    return grads


def input_gradient(params: DenoiserParams, cache: ForwardCache | None, upstream: Matrix) -> Matrix:
    """dLoss/du for the concatenated input u = [x_t | x_sc]."""
    _, grad_u = _backprop(params, cache, upstream)
    return grad_u


def parameter_count(params: DenoiserParams) -> int:
    return int(sum(m.size for m in params.matrices()))


def parameter_overhead(d: int, hidden, temb_dim: int = 64) -> dict:
    """Extra parameters the sparsity-bit channels cost over the dense model."""
    dense = parameter_count(init(Rng(0), d, hidden, temb_dim, sparsity_bits=False))
    sparse = parameter_count(init(Rng(0), d, hidden, temb_dim, sparsity_bits=True))
    return {
        "dense_parameters": dense,
        "sparse_parameters": sparse,
        "extra_parameters": sparse - dense,
        "relative_increase": (sparse - dense) / dense,
    }


def _pack_section(params: DenoiserParams) -> bytes:
    matrices = params.matrices()
    return pack_u32(len(matrices)) + b"".join(pack_matrix(m) for m in matrices)


def save_checkpoint(path: str | Path, params: DenoiserParams, ema: DenoiserParams, metadata: dict | None = None) -> None:
    """
    Write an SDDCKPT1 file: magic, parameter section, EMA section, JSON trailer.

    Each section is a u32 matrix count followed by (u32 rows, u32 cols,
    f64 values) blocks. The trailer is a u32 byte length plus UTF-8 JSON
    holding the architecture and any caller metadata.
    """
    meta = dict(metadata or {})
    meta["architecture"] = params.architecture()
    trailer = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = CHECKPOINT_MAGIC + _pack_section(params) + _pack_section(ema) + pack_u32(len(trailer)) + trailer
    Path(path).write_bytes(blob)
    logger.debug("Wrote checkpoint %s (%d bytes)", path, len(blob))


def load_checkpoint(path: str | Path) -> tuple[DenoiserParams, DenoiserParams, dict]:
    """
    Read an SDDCKPT1 file.

    Returns:
        (params, ema, metadata)

    Raises:
        CheckpointVersionError: if the magic names another format version
        FormatError: on any other layout problem
    """
    data = Path(path).read_bytes()
    reader = BinaryReader(data)
    magic = reader.read(len(CHECKPOINT_MAGIC), "magic")
    if magic != CHECKPOINT_MAGIC:
        if magic[:7] == CHECKPOINT_MAGIC[:7]:
            raise CheckpointVersionError(f"unsupported checkpoint version {magic!r}", offset=0)
        raise FormatError(f"not a checkpoint file (magic {magic!r})", offset=0)

    sections = []
    for name in ("parameter", "ema"):
        count = reader.read_u32(f"{name} count")
        sections.append([reader.read_matrix(f"{name} matrix {i}") for i in range(count)])
    length = reader.read_u32("metadata length")
    start = reader.offset
    try:
        metadata = json.loads(reader.read(length, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"invalid checkpoint metadata: {exc}", offset=start) from exc
    if not reader.at_end():
        raise FormatError("trailing bytes after checkpoint metadata", offset=reader.offset)
    if "architecture" not in metadata:
        raise FormatError("checkpoint metadata has no architecture", offset=start)

    params = DenoiserParams.from_matrices(metadata["architecture"], sections[0])
    ema = DenoiserParams.from_matrices(metadata["architecture"], sections[1])
    return params, ema, metadata
