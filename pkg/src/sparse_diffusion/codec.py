"""
Sparsity codec.

Encodes data into the extended state [scaled dense values | sparsity bits]
and decodes sampled states back into sparse data. Sparsity bits are +1 where
the original value is nonzero and -1 where it is exactly zero; they are
computed on the unscaled values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

from .errors import ArgumentError, RangeError, ShapeError
from .numerics import Matrix, as_matrix


@dataclass(frozen=True)
class ScaleSpec:
    """
    Affine map from original units [data_min, data_max] onto [-1, 1].

    `data_min`/`data_max` are scalars in global mode and length-d vectors in
    per-feature mode. `min_nonzero` is the smallest nonzero magnitude of the
    fitted data; kept entries never decode below it.
    """

    data_min: Any = 0.0
    data_max: Any = 1.0
    per_feature: bool = False
    min_nonzero: float | None = None

    def __post_init__(self):
        lo = np.asarray(self.data_min, dtype=np.float64)
        hi = np.asarray(self.data_max, dtype=np.float64)
        if self.per_feature:
            if lo.ndim != 1 or hi.shape != lo.shape:
                raise ArgumentError("per-feature scale needs equal-length min/max vectors")
        elif lo.ndim != 0 or hi.ndim != 0:
            raise ArgumentError("global scale needs scalar min/max")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ArgumentError("scale bounds must be finite")
        if np.any(lo >= hi):
            raise ArgumentError("scale needs data_min < data_max")
        if self.min_nonzero is not None:
            floor = float(self.min_nonzero)
            if not math.isfinite(floor) or floor <= 0.0:
                raise ArgumentError(f"min_nonzero must be finite and > 0 (got {self.min_nonzero})")
            object.__setattr__(self, "min_nonzero", floor)
        object.__setattr__(self, "data_min", lo)
        object.__setattr__(self, "data_max", hi)

    def _check_width(self, d: int) -> None:
        if self.per_feature and self.data_min.shape[0] != d:
            raise ShapeError(f"scale has {self.data_min.shape[0]} features, data has {d}")

    def forward(self, values: Matrix) -> Matrix:
        """Original units -> [-1, 1]."""
        self._check_width(values.shape[1])
        return 2.0 * (values - self.data_min) / (self.data_max - self.data_min) - 1.0

    def inverse(self, scaled: Matrix) -> Matrix:
        """[-1, 1] -> original units."""
        self._check_width(scaled.shape[1])
        return (scaled + 1.0) / 2.0 * (self.data_max - self.data_min) + self.data_min

    def contains(self, values: Matrix) -> bool:
        self._check_width(values.shape[1])
        return bool(np.all(values >= self.data_min) and np.all(values <= self.data_max))

    def to_dict(self) -> dict:
        return {
            "data_min": self.data_min.tolist(),
            "data_max": self.data_max.tolist(),
            "per_feature": self.per_feature,
            "min_nonzero": self.min_nonzero,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ScaleSpec:
        return cls(data["data_min"], data["data_max"], bool(data.get("per_feature", False)), data.get("min_nonzero"))


def _min_nonzero(batch: Matrix) -> float | None:
    mags = np.abs(batch[batch != 0.0])
    return float(mags.min()) if mags.size else None


def fit_scale(batch: Matrix, per_feature: bool = False) -> ScaleSpec:
    """
    Build a ScaleSpec mapping [0, max] onto [-1, 1].

    The lower bound is 0 unless the data has negative entries. Constant
    columns get a unit-width range so the map stays strictly monotone.
    """
    batch = as_matrix(batch, "batch")
    floor = _min_nonzero(batch)
    if per_feature:
        lo = np.minimum(batch.min(axis=0), 0.0)
        hi = batch.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        return ScaleSpec(lo, hi, per_feature=True, min_nonzero=floor)
    lo = min(float(batch.min()), 0.0)
    hi = float(batch.max())
    if hi <= lo:
        hi = lo + 1.0
    return ScaleSpec(lo, hi, min_nonzero=floor)


def sparsity_bits(batch: Matrix) -> Matrix:
    """2 * 1[x != 0] - 1, element-wise."""
    return np.where(batch != 0.0, 1.0, -1.0)


def encode(batch: Matrix, scale: ScaleSpec) -> Matrix:
    """
    DataBatch (n x d) -> ExtendedState (n x 2d).

    Raises:
        RangeError: if any entry lies outside the scale's source range
    """
    batch = as_matrix(batch, "batch")
    if not scale.contains(batch):
        raise RangeError(
            f"batch values [{batch.min()}, {batch.max()}] exceed scale range "
            f"[{np.min(scale.data_min)}, {np.max(scale.data_max)}]"
        )
    bits = sparsity_bits(batch)
    dense = scale.forward(batch)
    return np.concatenate([dense, bits], axis=1)


def split_state(state: Matrix) -> tuple[Matrix, Matrix]:
    """Return (dense channel, sparsity-bit channel)."""
    if state.ndim != 2 or state.shape[1] % 2 != 0:
        raise ShapeError(f"extended state needs an even number of columns (got shape {state.shape})")
    d = state.shape[1] // 2
    return state[:, :d], state[:, d:]


def decode(state: Matrix, scale: ScaleSpec) -> Matrix:
    """
    ExtendedState (n x 2d) -> sparse DataBatch (n x d).

    Both channels are clamped to [-1, 1]; an entry is kept iff its
    sparsity-bit logit is strictly positive, otherwise it is exactly 0.
    A kept entry whose magnitude falls below the scale's `min_nonzero`
    (the smallest normal float when unset) is lifted to it, keeping its sign,
    so the zero pattern of the output is exactly the logit sign pattern.
    """
    state = np.asarray(state, dtype=np.float64)
    dense, logits = split_state(np.clip(state, -1.0, 1.0))
    values = scale.inverse(dense)
    floor = scale.min_nonzero if scale.min_nonzero is not None else np.finfo(np.float64).tiny
    lifted = np.where(values < 0.0, -floor, floor)
    values = np.where(np.abs(values) < floor, lifted, values)
    return np.where(logits > 0.0, values, 0.0)


def sparsity_per_row(batch: Matrix) -> npt.NDArray[np.float64]:
    """Fraction of exact zeros in each row."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch.reshape(1, -1)
    if batch.shape[1] == 0:
        return np.zeros(batch.shape[0])
    return np.mean(batch == 0.0, axis=1)


def quantized_sparsity(batch: Matrix, scale: ScaleSpec, levels: int = 256) -> npt.NDArray[np.float64]:
    """
    Per-row sparsity after discretising values onto a `levels`-step grid.

    Values are mapped to [0, 1] through the scale, rounded to the nearest of
    `levels` grid points, and counted as zero when they land on the grid
    point of original 0. This is how 8-bit images are measured.
    """
    if levels < 2:
        raise ArgumentError(f"levels must be >= 2 (got {levels})")
    batch = as_matrix(batch, "batch")
    unit = (np.clip(scale.forward(batch), -1.0, 1.0) + 1.0) / 2.0
    codes = np.rint(unit * (levels - 1))
    zero_unit = (scale.forward(np.zeros((1, batch.shape[1]))) + 1.0) / 2.0
    zero_codes = np.rint(np.clip(zero_unit, 0.0, 1.0) * (levels - 1))
    return np.mean(codes == zero_codes, axis=1)
