import struct

import numpy as np
import pytest

from galerkinlab.coeffio import (
    CoefficientFileError,
    decode,
    encode,
    read_field,
    read_stack,
    write_field,
    write_stack,
)
from galerkinlab.spectral import SpectralField, WaveGrid, random_field


@pytest.mark.parametrize("grid", [WaveGrid.square(12), WaveGrid.ball(30.0)])
def test_roundtrip_bitwise(tmp_path, rng, grid):
    f = random_field(grid, rng)
    write_field(tmp_path / "f.bin", f)
    g = read_field(tmp_path / "f.bin")
    assert g.grid == grid
    assert np.array_equal(g.coef, f.coef)


def test_stack_roundtrip(tmp_path, rng):
    grid = WaveGrid.square(8)
    stack = np.stack([random_field(grid, rng).coef for _ in range(3)])
    write_stack(tmp_path / "s.bin", grid, stack)
    g2, back = read_stack(tmp_path / "s.bin")
    assert g2 == grid and np.array_equal(back, stack)


def test_header_layout():
    grid = WaveGrid.square(4)
    f = SpectralField.from_modes(grid, {(1, 2): 1 + 2j})
    data = encode(grid, f.coef)
    magic, version, tag, n, shape, bound, h, m = struct.unpack_from("<8sIIIIdII", data)
    assert (magic, version, tag, n, shape, bound, h, m) == (b"GLABSPEC", 1, 0x01020304, 4, 0, 0.0, 2, 1)
    assert len(data) == 40 + 16 * 5 * 3
    # k1 = 1, k2 = 2 sits at row h + 1, column 2
    off = 40 + 16 * ((1 + 2) * 3 + 2)
    assert struct.unpack_from("<dd", data, off) == (1.0, 2.0)


def test_corrupt_files_rejected():
    grid = WaveGrid.square(4)
    data = encode(grid, np.zeros(grid.storage_shape, complex))
    with pytest.raises(CoefficientFileError):
        decode(b"NOTMAGIC" + data[8:])
    with pytest.raises(CoefficientFileError):
        decode(data[:-8])
