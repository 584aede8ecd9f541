"""
Datasets: synthetic sparse generators and file ingestion.

Two surrogates stand in for the sparse scientific data the method targets:
clustered deposits on a square grid (calorimeter-like images) and a sparse
mixture with per-dimension activity rates (expression-matrix-like tables).
Real data is read from IDX image files (MNIST layout) or numeric CSV.
"""

from __future__ import annotations

import csv
import gzip
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .codec import ScaleSpec, fit_scale, sparsity_per_row
from .errors import FormatError, SpecError
from .manifest import matrix_fingerprint
from .numerics import Matrix, Rng, as_matrix
from .sampler import read_matrix, write_matrix

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803


class SyntheticKind(str, Enum):
    CLUSTERED = "clustered-deposits"
    MIXTURE = "sparse-mixture"


@dataclass
class SyntheticSpec:
    """
    Parameters of a synthetic sparse dataset.

    clustered-deposits: `cluster_count` Gaussian-profile clusters per image
    on a sqrt(d) x sqrt(d) grid; each image activates Binomial(d, 1 - s)
    cells nearest to its cluster centres, so the mean sparsity is s.
    sparse-mixture: dimension j is active with probability 1 - s_j and
    carries log-normal magnitudes around a per-dimension level.
    """

    kind: str = SyntheticKind.CLUSTERED.value
    d: int = 256
    target_sparsity: float = 0.9
    cluster_count: int = 3
    intensity_mean: float = 0.0
    intensity_sigma: float = 0.5
    dim_sparsity: list[float] | None = None
    seed: int = 0

    def __post_init__(self):
        self.kind = SyntheticKind(self.kind).value
        if self.d < 1:
            raise SpecError(f"d must be >= 1 (got {self.d})")
        if not 0.0 < self.target_sparsity < 1.0 and self.dim_sparsity is None:
            raise SpecError(f"target sparsity must lie in (0, 1) (got {self.target_sparsity})")
        if self.cluster_count < 0:
            raise SpecError(f"cluster count must be >= 0 (got {self.cluster_count})")
        if self.dim_sparsity is not None:
            s = np.asarray(self.dim_sparsity, dtype=np.float64)
            if s.shape != (self.d,) or np.any(s < 0.0) or np.any(s > 1.0):
                raise SpecError("dim_sparsity must hold d values in [0, 1]")

    @property
    def side(self) -> int:
        side = math.isqrt(self.d)
        if side * side != self.d:
            raise SpecError(f"clustered data needs a perfect-square d (got {self.d})")
        return side

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "muon-like": {"kind": SyntheticKind.CLUSTERED.value, "d": 1024, "target_sparsity": 0.95, "cluster_count": 3},
    "scrna-like": {"kind": SyntheticKind.MIXTURE.value, "d": 1000, "target_sparsity": 0.90},
    "toy-clustered": {"kind": SyntheticKind.CLUSTERED.value, "d": 256, "target_sparsity": 0.90, "cluster_count": 3},
}


def preset_spec(name: str, seed: int = 0, **overrides) -> SyntheticSpec:
    if name not in PRESETS:
        raise SpecError(f"unknown preset {name!r} (expected one of {sorted(PRESETS)})")
    values = {**PRESETS[name], **overrides, "seed": seed}
    return SyntheticSpec(**values)


def gen_clustered(spec: SyntheticSpec, n: int, rng: Rng) -> Matrix:
    """
    Sparse clustered images, flattened row-major.

    Raises:
        SpecError: if d is not a perfect square
    """
    side = spec.side
    out = np.zeros((n, spec.d))
    if spec.cluster_count == 0 or n == 0:
        return out
    rows, cols = np.divmod(np.arange(spec.d), side)
    cells = np.stack([rows, cols], axis=1).astype(np.float64)
    active = rng.binomial(spec.d, 1.0 - spec.target_sparsity, size=n)
    for i in range(n):
        m = int(active[i])
        centres = rng.uniform_array((spec.cluster_count, 2), 0.0, float(side))
        amplitudes = np.exp(spec.intensity_mean + spec.intensity_sigma * rng.gaussian(1, spec.cluster_count)[0])
        if m == 0:
            continue
        dist2 = ((cells[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argmin(dist2, axis=1)
        nearest_d2 = dist2[np.arange(spec.d), nearest]
        chosen = np.argsort(nearest_d2, kind="stable")[:m]
        width2 = max(1.0, m / (math.pi * spec.cluster_count))
        exponent = np.maximum(-0.5 * nearest_d2[chosen] / width2, -50.0)
        out[i, chosen] = amplitudes[nearest[chosen]] * np.exp(exponent)
    return out


def gen_sparse_mixture(spec: SyntheticSpec, n: int, rng: Rng) -> Matrix:
    """Per-dimension Bernoulli activity times log-normal positive magnitudes."""
    s = np.full(spec.d, spec.target_sparsity) if spec.dim_sparsity is None else np.asarray(spec.dim_sparsity, dtype=np.float64)
    levels = spec.intensity_mean + rng.gaussian(1, spec.d)[0]
    mask = rng.uniform_array((n, spec.d)) >= s[None, :]
    magnitudes = np.exp(levels[None, :] + spec.intensity_sigma * rng.gaussian(max(n, 1), spec.d)[:n])
    return np.where(mask, magnitudes, 0.0)


def generate(spec: SyntheticSpec, n: int, rng: Rng | None = None) -> Matrix:
    rng = rng or Rng(spec.seed)
    if spec.kind == SyntheticKind.CLUSTERED.value:
        return gen_clustered(spec, n, rng)
    return gen_sparse_mixture(spec, n, rng)


@dataclass
class DatasetHandle:
    """Read-only n x d data with its scale; zeros are exact."""

    name: str
    values: Matrix
    scale: ScaleSpec
    source: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = as_matrix(self.values, self.name).copy()
        self.values.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def sparsity(self) -> float:
        return float(sparsity_per_row(self.values).mean())

    def fingerprint(self) -> str:
        return matrix_fingerprint(self.values)

    def batches(self, batch_size: int, rng: Rng) -> Iterator[Matrix]:
        """Endless minibatches; order is reshuffled every epoch from `rng`."""
        while True:
            order = rng.permutation(self.n)
            if self.n <= batch_size:
                yield self.values[order]
                continue
            for start in range(0, self.n - batch_size + 1, batch_size):
                yield self.values[order[start:start + batch_size]]


def from_synthetic(spec: SyntheticSpec, n: int, per_feature: bool = False) -> DatasetHandle:
    values = generate(spec, n)
    return DatasetHandle(f"synthetic-{spec.kind}", values, fit_scale(values, per_feature), "synthetic", spec.to_dict())


def _read_bytes(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def load_idx_images(path: str | Path) -> DatasetHandle:
    """
    IDX image file (big-endian header, u8 pixels), optionally gzip-compressed.

    Pixels stay in [0, 255]; the scale maps [0, 255] onto [-1, 1] and keeps
    decoded nonzero pixels at >= 1.

    Raises:
        FormatError: on bad magic or truncation, with the byte offset
    """
    path = Path(path)
    data = _read_bytes(path)
    if len(data) < 16:
        raise FormatError("truncated IDX header", offset=len(data))
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"bad IDX image magic 0x{magic:08x}", offset=0)
    expected = 16 + count * rows * cols
    if len(data) < expected:
        raise FormatError(f"truncated IDX pixel data ({count} images of {rows}x{cols} declared)", offset=len(data))
    if len(data) > expected:
        raise FormatError("trailing bytes after IDX pixel data", offset=expected)
    pixels = np.frombuffer(data, dtype=np.uint8, count=count * rows * cols, offset=16)
    values = pixels.reshape(count, rows * cols).astype(np.float64)
    logger.info("Loaded %d images of %dx%d from %s", count, rows, cols, path)
    scale = ScaleSpec(0.0, 255.0, min_nonzero=1.0)
    return DatasetHandle(path.name, values, scale, str(path), {"rows": rows, "cols": cols})


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv_matrix(path: str | Path, per_feature: bool = False) -> DatasetHandle:
    """
    Rectangular numeric CSV with an optional header row.

    Raises:
        FormatError: on ragged rows, non-numeric or non-finite cells, with the
            line number
    """
    path = Path(path)
    rows: list[list[float]] = []
    header: list[str] | None = None
    width = None
    with open(path, newline="") as f:
        for line_no, record in enumerate(csv.reader(f), start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if line_no == 1 and not all(_is_number(cell) for cell in record):
                header = [cell.strip() for cell in record]
                width = len(header)
                continue
            if width is None:
                width = len(record)
            if len(record) != width:
                raise FormatError(f"expected {width} columns, found {len(record)}", line=line_no)
            try:
                row = [float(cell) for cell in record]
            except ValueError as exc:
                raise FormatError(f"non-numeric cell: {exc}", line=line_no) from exc
            bad = [cell.strip() for cell, value in zip(record, row) if not math.isfinite(value)]
            if bad:
                raise FormatError(f"non-finite cell {bad[0]!r}", line=line_no)
            rows.append(row)
    if not rows:
        raise FormatError("CSV contains no data rows", line=1)
    values = np.array(rows, dtype=np.float64)
    return DatasetHandle(path.name, values, fit_scale(values, per_feature), str(path), {"header": header})


def write_csv_matrix(path: str | Path, m: Matrix, header: Sequence[str] | None = None) -> None:
    """Write with repr() floats so a read returns bit-identical values."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        if header:
            writer.writerow(header)
        for row in np.asarray(m, dtype=np.float64):
            writer.writerow([repr(float(v)) for v in row])


def load_matrix(path: str | Path) -> Matrix:
    """Dispatch on suffix: .csv, IDX (.idx/-ubyte, optionally .gz), otherwise SDDMAT1."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"file not found: {path}")
    name = path.name.removesuffix(".gz")
    if name.endswith(".csv"):
        return np.array(load_csv_matrix(path).values)
    if name.endswith((".idx", "-ubyte", ".idx3-ubyte")):
        return np.array(load_idx_images(path).values)
    return read_matrix(path)


def load_dataset(path: str | Path, per_feature: bool = False) -> DatasetHandle:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"dataset not found: {path}")
    name = path.name.removesuffix(".gz")
    if name.endswith(".csv"):
        return load_csv_matrix(path, per_feature)
    if name.endswith((".idx", "-ubyte", ".idx3-ubyte")):
        return load_idx_images(path)
    values = read_matrix(path)
    return DatasetHandle(path.name, values, fit_scale(values, per_feature), str(path))


def save_matrix(path: str | Path, m: Matrix) -> None:
    if Path(path).suffix == ".csv":
        write_csv_matrix(path, m)
    else:
        write_matrix(path, m)
