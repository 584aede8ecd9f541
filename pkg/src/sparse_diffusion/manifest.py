"""
Run manifests and content fingerprints.

Every CLI command that writes artifacts appends one manifest to
`manifests.jsonl` next to its outputs. Manifests hold the argv and the
resolved configuration, so `sdd replay` can regenerate the artifacts.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

from . import __version__
from .errors import ConfigError, FormatError
from .numerics import Matrix
from .validators.manifest import ManifestValidator

MANIFEST_FILE = "manifests.jsonl"

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK_64 = 0xFFFFFFFFFFFFFFFF


def _fnv1a_python(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK_64
    return h


if njit is not None:

    @njit(nogil=True)
    def _fnv1a_kernel(data, offset, prime):
        h = offset
        for i in range(data.size):
            h ^= np.uint64(data[i])
            h *= prime
        return h


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a; compiled with numba when it is importable."""
    if njit is None or len(data) < 4096:
        return _fnv1a_python(data)
    buf = np.frombuffer(data, dtype=np.uint8)
    return int(_fnv1a_kernel(buf, np.uint64(FNV_OFFSET), np.uint64(FNV_PRIME)))


def matrix_fingerprint(m: Matrix) -> str:
    """FNV-1a 64 of u32 rows, u32 cols and the little-endian f64 values."""
    m = np.ascontiguousarray(m, dtype="<f8")
    canonical = struct.pack("<II", *m.shape) + m.tobytes(order="C")
    return f"{fnv1a_64(canonical):016x}"


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict
    seed: int
    dataset_fingerprint: str | None = None
    artifacts: dict[str, str] = field(default_factory=dict)
    build: str = f"sparse-data-diffusion {__version__}"

    def to_dict(self) -> dict:
        return asdict(self)


def append_manifest(directory: str | Path, manifest: RunManifest) -> Path:
    """
    Validate and append a manifest; existing entries are never rewritten.

    Raises:
        ConfigError: if the manifest fails schema validation
    """
    result = ManifestValidator().validate(manifest.to_dict())
    if not result.passed:
        raise ConfigError("invalid run manifest: " + "; ".join(result.errors))
    path = Path(directory) / MANIFEST_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as f:
        f.write(json.dumps(manifest.to_dict(), sort_keys=True) + "\n")
    return path


def read_manifests(path: str | Path) -> list[dict]:
    entries = []
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid manifest entry: {exc.msg}", line=line_no) from exc
    return entries
