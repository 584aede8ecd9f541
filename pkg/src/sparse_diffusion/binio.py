"""
Little-endian binary helpers shared by the checkpoint and matrix formats.

Matrix blocks are laid out as u32 rows, u32 cols, then rows*cols f64
values in row-major order.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError
from .numerics import Matrix


def pack_u32(value: int) -> bytes:
    return struct.pack("<I", value)


def pack_matrix(m: Matrix) -> bytes:
    m = np.ascontiguousarray(m, dtype="<f8")
    rows, cols = m.shape
    return struct.pack("<II", rows, cols) + m.tobytes(order="C")


class BinaryReader:
    """Sequential reader that reports the byte offset of any format error."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def read(self, n: int, what: str = "data") -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(f"truncated file while reading {what}", offset=self.offset)
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def read_u32(self, what: str = "u32") -> int:
        return struct.unpack("<I", self.read(4, what))[0]

    def read_matrix(self, what: str = "matrix") -> Matrix:
        rows = self.read_u32(f"{what} rows")
        cols = self.read_u32(f"{what} cols")
        raw = self.read(8 * rows * cols, f"{what} values")
        return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(rows, cols)

    def at_end(self) -> bool:
        return self.offset == len(self.data)
