"""
Seeded random number generation and dense matrix kernels.

The generator is numpy's counter-based Philox bit generator. Gaussian draws
use numpy's ziggurat `standard_normal`, uniform draws `random`. Both are
fixed for a pinned numpy major version, so a seed fully determines every
experiment in this package.
"""

from __future__ import annotations

from typing import Any

import numpy as np
import numpy.typing as npt

from .errors import ArgumentError, RangeError, ShapeError

Matrix = npt.NDArray[np.float64]

MAX_SEED = 2**64 - 1


class Rng:
    """
    Single-owner deterministic random stream.

    Independent streams for concurrent work come from `spawn`, which derives
    a child seed sequence from (seed, stream index).
    """

    def __init__(self, seed: int, stream: tuple[int, ...] = ()):
        if not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) <= MAX_SEED:
            raise ArgumentError(f"seed must be an unsigned 64-bit integer (got {seed!r})")
        self.seed = int(seed)
        self.stream = tuple(stream)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        self._gen = np.random.Generator(np.random.Philox(sequence))

    def spawn(self, index: int) -> Rng:
        """Return an independent stream keyed by `index`."""
        return Rng(self.seed, self.stream + (int(index),))

    def gaussian(self, rows: int, cols: int) -> Matrix:
        if rows < 1 or cols < 1:
            raise ArgumentError(f"gaussian needs rows, cols >= 1 (got {rows}x{cols})")
        return self._gen.standard_normal((rows, cols), dtype=np.float64)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        if not lo < hi:
            raise RangeError(f"uniform needs lo < hi (got lo={lo}, hi={hi})")
        return float(lo + (hi - lo) * self._gen.random())

    def uniform_array(self, shape: int | tuple[int, ...], lo: float = 0.0, hi: float = 1.0) -> npt.NDArray[np.float64]:
        if not lo < hi:
            raise RangeError(f"uniform needs lo < hi (got lo={lo}, hi={hi})")
        return lo + (hi - lo) * self._gen.random(shape)

    def binomial(self, n: int, p: float, size: int | None = None) -> Any:
        return self._gen.binomial(n, p, size=size)

    def permutation(self, n: int) -> npt.NDArray[np.int64]:
        return self._gen.permutation(n)


def gaussian(rng: Rng, rows: int, cols: int) -> Matrix:
    """Matrix of i.i.d. standard normal draws."""
    return rng.gaussian(rows, cols)


def uniform(rng: Rng, lo: float, hi: float) -> float:
    """Single draw from [lo, hi)."""
    return rng.uniform(lo, hi)


def as_matrix(values: Any, name: str = "matrix") -> Matrix:
    """Coerce to a finite 2-D float64 array."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D (got {m.ndim} dimensions)")
    if not np.all(np.isfinite(m)):
        raise ArgumentError(f"{name} contains non-finite entries")
    return m


def _check_same_shape(a: Matrix, b: Matrix, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return np.matmul(a, b, dtype=np.float64)


def add(a: Matrix, b: Matrix) -> Matrix:
    _check_same_shape(a, b, "add")
    return a + b


def sub(a: Matrix, b: Matrix) -> Matrix:
    _check_same_shape(a, b, "sub")
    return a - b


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    _check_same_shape(a, b, "hadamard")
    return a * b


def scale(a: Matrix, factor: float) -> Matrix:
    return a * float(factor)
