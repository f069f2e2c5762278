"""Uniformly sampled trajectories of spectral fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import SpectralField, WaveGrid, resample


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples ``f(t_j)`` at ``t_j = j * sample_dt`` for ``j = 0..M``."""

    grid: WaveGrid
    sample_dt: float
    coefs: np.ndarray
    blown_up: bool = False
    note: str = ""

    def __post_init__(self):
        if self.sample_dt <= 0:
            raise ValueError("sample spacing must be positive")
        c = np.asarray(self.coefs, dtype=complex)
        if c.ndim != 3 or c.shape[1:] != self.grid.storage_shape:
            raise ValueError("trajectory samples must be stacked coefficient arrays on the grid")
        c = c * self.grid.mask
        c.setflags(write=False)
        object.__setattr__(self, "coefs", c)

    @classmethod
    def from_fields(cls, fields: list[SpectralField], sample_dt: float, **kw) -> "Trajectory":
        grid = fields[0].grid
        return cls(grid, sample_dt, np.stack([f.coef for f in fields]), **kw)

    @property
    def n_samples(self) -> int:
        return self.coefs.shape[0]

    @property
    def T(self) -> float:
        return self.sample_dt * (self.n_samples - 1)

    @property
    def times(self) -> np.ndarray:
        return self.sample_dt * np.arange(self.n_samples)

    def field(self, j: int) -> SpectralField:
        return SpectralField(self.grid, self.coefs[j])

    def resampled(self, grid: WaveGrid) -> "Trajectory":
        if grid == self.grid:
            return self
        out = np.stack([resample(self.field(j), grid).coef for j in range(self.n_samples)])
        return Trajectory(grid, self.sample_dt, out, self.blown_up, self.note)

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        check_aligned(self, other)
        return Trajectory(self.grid, self.sample_dt, self.coefs - other.coefs)


def check_aligned(a: Trajectory, b: Trajectory) -> None:
    if a.grid != b.grid:
        raise ValueError("trajectories live on different grids; resample first")
    if a.n_samples != b.n_samples or not np.isclose(a.sample_dt, b.sample_dt, rtol=1e-12, atol=0):
        raise ValueError("trajectories are not time-aligned")
