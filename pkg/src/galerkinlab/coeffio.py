"""Binary coefficient files.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic  b"GLABSPEC"
    8       4     uint32 format version (1)
    12      4     uint32 endianness tag 0x01020304, written little-endian
    16      4     uint32 resolution n
    20      4     uint32 truncation shape (0 = square, 1 = ball)
    24      8     float64 ball eigenvalue bound (0 for square)
    32      4     uint32 half-width h
    36      4     uint32 number of stacked fields m (1 for a single field)
    40      ...   m * (2h+1) * (h+1) pairs of float64 (re, im)

Pairs are in half-plane row-major order: k1 runs over -h..h (outer), k2 over
0..h (inner), fields outermost.  Masked-out entries are stored as zeros.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .spectral import BALL, SQUARE, SpectralField, WaveGrid

MAGIC = b"GLABSPEC"
VERSION = 1
ENDIAN_TAG = 0x01020304
_HEADER = struct.Struct("<8sIIIIdII")
_SHAPES = {SQUARE: 0, BALL: 1}


class CoefficientFileError(ValueError):
    pass


def encode(grid: WaveGrid, coefs: np.ndarray) -> bytes:
    coefs = np.asarray(coefs, dtype=complex)
    if coefs.ndim == 2:
        coefs = coefs[None]
    if coefs.shape[1:] != grid.storage_shape:
        raise ValueError("coefficient block does not match grid")
    header = _HEADER.pack(MAGIC, VERSION, ENDIAN_TAG, grid.n, _SHAPES[grid.shape], grid.bound,
                          grid.h, coefs.shape[0])
    body = np.empty(coefs.shape + (2,), dtype="<f8")
    body[..., 0] = coefs.real
    body[..., 1] = coefs.imag
    return header + body.tobytes(order="C")


def decode(data: bytes) -> tuple[WaveGrid, np.ndarray]:
    if len(data) < _HEADER.size:
        raise CoefficientFileError("truncated header")
    magic, version, tag, n, shape, bound, h, m = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CoefficientFileError("bad magic")
    if tag != ENDIAN_TAG:
        raise CoefficientFileError("endianness tag mismatch")
    if version != VERSION:
        raise CoefficientFileError(f"unsupported version {version}")
    grid = WaveGrid(n, SQUARE if shape == 0 else BALL, bound)
    if grid.h != h:
        raise CoefficientFileError("half-width inconsistent with grid")
    count = m * (2 * h + 1) * (h + 1) * 2
    if _HEADER.size + 8 * count != len(data):
        raise CoefficientFileError("payload length mismatch")
    body = np.frombuffer(data, dtype="<f8", count=count, offset=_HEADER.size)
    body = body.reshape((m, 2 * h + 1, h + 1, 2))
    return grid, body[..., 0] + 1j * body[..., 1]


def write_field(path: str | Path, f: SpectralField) -> None:
    Path(path).write_bytes(encode(f.grid, f.coef))


def read_field(path: str | Path) -> SpectralField:
    grid, coefs = decode(Path(path).read_bytes())
    if coefs.shape[0] != 1:
        raise CoefficientFileError("file holds a stack, not a single field")
    return SpectralField(grid, coefs[0])


def write_stack(path: str | Path, grid: WaveGrid, coefs: np.ndarray) -> None:
    Path(path).write_bytes(encode(grid, coefs))


def read_stack(path: str | Path) -> tuple[WaveGrid, np.ndarray]:
    return decode(Path(path).read_bytes())
