"""Fourier-side representation of zero-mean real fields on the torus [0, 2π]².

A field is stored as complex coefficients ``c_k`` of the expansion

    f(x, y) = Σ_k c_k exp(i (k1 x + k2 y)),    k = (k1, k2) ∈ ℤ² \\ {0},

on the Hermitian half-plane ``k2 >= 0``.  The array layout is
``coef[k1 + h, k2]`` with shape ``(2h + 1, h + 1)``; the ``k2 = 0`` row keeps
both signs of ``k1`` and must satisfy ``c_{-k} = conj(c_k)``.

The Stokes operator acts on vorticity as multiplication by ``|k|²`` so
``λ₁ = 1`` and fractional norms are

    |A^α f| = 2π (Σ_full |k|^{4α} |c_k|²)^{1/2},

which at ``α = 0`` is the L²([0, 2π]²) norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
from scipy import fft as sfft

TWO_PI = 2.0 * np.pi

SQUARE = "square"
BALL = "ball"


@dataclass(frozen=True)
class WaveGrid:
    """Set of retained wavevectors.

    ``square`` keeps ``|k1|, |k2| <= n/2``; ``ball`` keeps ``|k|² <= bound``.
    """

    n: int
    shape: str = SQUARE
    bound: float = 0.0

    def __post_init__(self):
        if self.shape not in (SQUARE, BALL):
            raise ValueError(f"unknown truncation shape {self.shape!r}")
        if not isinstance(self.n, (int, np.integer)) or self.n <= 0 or self.n % 2:
            raise ValueError(f"resolution must be an even positive integer, got {self.n!r}")
        if self.shape == BALL and self.bound < 1:
            raise ValueError("ball truncation needs an eigenvalue bound >= 1")

    @classmethod
    def square(cls, n: int) -> "WaveGrid":
        return cls(int(n), SQUARE, 0.0)

    @classmethod
    def ball(cls, bound: float) -> "WaveGrid":
        h = int(np.floor(np.sqrt(bound)))
        return cls(2 * max(h, 1), BALL, float(bound))

    @property
    def h(self) -> int:
        """Largest retained |k1| (half-width of the storage rectangle)."""
        if self.shape == SQUARE:
            return self.n // 2
        return int(np.floor(np.sqrt(self.bound)))

    @property
    def storage_shape(self) -> tuple[int, int]:
        return (2 * self.h + 1, self.h + 1)

    @cached_property
    def k1(self) -> np.ndarray:
        return np.arange(-self.h, self.h + 1, dtype=float)[:, None]

    @cached_property
    def k2(self) -> np.ndarray:
        return np.arange(0, self.h + 1, dtype=float)[None, :]

    @cached_property
    def ksq(self) -> np.ndarray:
        return self.k1**2 + self.k2**2

    @cached_property
    def ksq_safe(self) -> np.ndarray:
        """``|k|²`` with the zero mode replaced by 1 (for negative powers)."""
        out = self.ksq.copy()
        out[self.h, 0] = 1.0
        return out

    @cached_property
    def mask(self) -> np.ndarray:
        if self.shape == SQUARE:
            m = np.ones(self.storage_shape, dtype=bool)
        else:
            m = self.ksq <= self.bound
        m = m.copy()
        m[self.h, 0] = False
        return m

    @cached_property
    def weight(self) -> np.ndarray:
        """Multiplicity of each stored mode in full-plane sums."""
        w = np.where(self.k2 > 0, 2.0, 1.0) * np.ones(self.storage_shape)
        return w * self.mask

    @property
    def dim(self) -> int:
        """Number of retained full-plane wavevectors, i.e. dim P_n over ℂ."""
        return int(self.weight.sum())

    def contains(self, other: "WaveGrid") -> bool:
        """True when every mode retained by ``other`` is retained here."""
        if other.h > self.h:
            return False
        return bool(np.all(self.mask[_embed_slices(other.h, self.h)][other.mask]))

    def label(self) -> str:
        if self.shape == SQUARE:
            return f"square{self.n}"
        return f"ball{self.bound:g}"


def _embed_slices(h_small: int, h_big: int):
    off = h_big - h_small
    return (slice(off, off + 2 * h_small + 1), slice(0, h_small + 1))


def lambda_cut(cutoff: WaveGrid) -> float:
    """Smallest ``|k|²`` over lattice points excluded by ``cutoff``."""
    if cutoff.shape == SQUARE:
        return float((cutoff.h + 1) ** 2)
    m = int(np.floor(cutoff.bound)) + 1
    while not _is_sum_of_two_squares(m):
        m += 1
    return float(m)


def _is_sum_of_two_squares(m: int) -> bool:
    a = 0
    while a * a <= m:
        b = int(round(np.sqrt(m - a * a)))
        if b * b == m - a * a:
            return True
        a += 1
    return False


def _hermitian_row(coef: np.ndarray, h: int) -> np.ndarray:
    row = coef[:, 0]
    coef[:, 0] = 0.5 * (row + np.conj(row[::-1]))
    return coef


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable complex coefficients of a real zero-mean scalar field."""

    grid: WaveGrid
    coef: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coef, dtype=complex)
        if c.shape != self.grid.storage_shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid {self.grid.storage_shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficients")
        c = np.where(self.grid.mask, c, 0.0)
        c.setflags(write=False)
        object.__setattr__(self, "coef", c)

    @classmethod
    def zeros(cls, grid: WaveGrid) -> "SpectralField":
        return cls(grid, np.zeros(grid.storage_shape, dtype=complex))

    @classmethod
    def from_modes(cls, grid: WaveGrid, modes: dict) -> "SpectralField":
        """Build from ``{(k1, k2): c}``; the conjugate partner is filled in."""
        c = np.zeros(grid.storage_shape, dtype=complex)
        h = grid.h
        for (a, b), val in modes.items():
            if (a, b) == (0, 0):
                raise ValueError("zero mode is not representable")
            if b < 0 or (b == 0 and a < 0):
                a, b, val = -a, -b, np.conj(val)
            if abs(a) > h or b > h:
                continue
            c[a + h, b] += val
            if b == 0:
                c[-a + h, 0] += np.conj(val)
        return cls(grid, c)

    @classmethod
    def from_physical(cls, grid: WaveGrid, values: np.ndarray) -> "SpectralField":
        """Transform samples on a uniform ``N x N`` grid; drops the mean."""
        values = np.asarray(values, dtype=float)
        N = values.shape[0]
        if values.shape != (N, N):
            raise ValueError("physical samples must be on a square grid")
        if N < 2 * grid.h + 1:
            raise ValueError(f"{N} samples per axis cannot resolve half-width {grid.h}")
        F = sfft.rfft2(values) / (N * N)
        return cls(grid, _hermitian_row(_extract(F, grid.h, N), grid.h))

    def to_physical(self, N: int | None = None) -> np.ndarray:
        """Evaluate on the uniform grid ``x_j = 2πj/N`` (axis 0 = x, axis 1 = y)."""
        if N is None:
            N = default_physical_size(self.grid)
        if N < 2 * self.grid.h + 1:
            raise ValueError(f"{N} points per axis cannot represent half-width {self.grid.h}")
        return sfft.irfft2(_scatter(self.coef, self.grid.h, N) * (N * N), s=(N, N))

    def with_coef(self, coef: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, coef)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _same_grid(self, other)
        return self.with_coef(self.coef + other.coef)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _same_grid(self, other)
        return self.with_coef(self.coef - other.coef)

    def __mul__(self, s: float) -> "SpectralField":
        return self.with_coef(self.coef * s)

    __rmul__ = __mul__

    def __truediv__(self, s: float) -> "SpectralField":
        return self.with_coef(self.coef / s)

    def __neg__(self) -> "SpectralField":
        return self.with_coef(-self.coef)

    def inner(self, other: "SpectralField") -> float:
        """L² inner product over [0, 2π]²."""
        _same_grid(self, other)
        return float(4 * np.pi**2 * np.sum(self.grid.weight * (self.coef * np.conj(other.coef)).real))

    def is_hermitian(self, rtol: float = 1e-13) -> bool:
        row = self.coef[:, 0]
        scale = max(np.max(np.abs(self.coef)), 1e-300)
        return bool(np.max(np.abs(row - np.conj(row[::-1]))) <= rtol * scale)


def _same_grid(a: SpectralField, b: SpectralField):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid.label()} vs {b.grid.label()}")


def _extract(F: np.ndarray, h: int, N: int) -> np.ndarray:
    rows = np.arange(-h, h + 1) % N
    return F[rows, : h + 1].copy()


def _scatter(coef: np.ndarray, h: int, N: int) -> np.ndarray:
    F = np.zeros((N, N // 2 + 1), dtype=complex)
    rows = np.arange(-h, h + 1) % N
    F[rows, : h + 1] = coef
    return F


def default_physical_size(grid: WaveGrid) -> int:
    return sfft.next_fast_len(2 * grid.h + 2)


def dealiased_size(h: int) -> int:
    """Smallest fast FFT length that multiplies two half-width-h fields without aliasing."""
    return sfft.next_fast_len(3 * h + 1)


# ---------------------------------------------------------------- norms


def frac_norm(f: SpectralField, alpha: float) -> float:
    """``|A^α f|``, the fractional Sobolev norm on D(A^α)."""
    if alpha < 0:
        raise ValueError("frac_norm needs alpha >= 0")
    return _weighted_norm(f.coef, f.grid, alpha)


def _weighted_norm(coef: np.ndarray, grid: WaveGrid, alpha: float) -> float:
    w = grid.weight if alpha == 0 else grid.weight * grid.ksq_safe ** (2 * alpha)
    return float(TWO_PI * np.sqrt(np.sum(w * (coef.real**2 + coef.imag**2))))


def frac_norm_velocity(u: tuple[SpectralField, SpectralField], alpha: float) -> float:
    return float(np.hypot(frac_norm(u[0], alpha), frac_norm(u[1], alpha)))


def apply_A_power(f: SpectralField, alpha: float) -> SpectralField:
    if alpha == 0:
        return f
    return f.with_coef(f.coef * f.grid.ksq_safe**alpha)


def velocity_from_vorticity(w: SpectralField) -> tuple[SpectralField, SpectralField]:
    """``u = ∇⊥ψ = (∂_y ψ, -∂_x ψ)`` with ``-Δψ = ω``."""
    g = w.grid
    psi = w.coef / g.ksq_safe
    return w.with_coef(1j * g.k2 * psi), w.with_coef(-1j * g.k1 * psi)


def curl(u: tuple[SpectralField, SpectralField]) -> SpectralField:
    """``∂_x u₂ - ∂_y u₁``."""
    g = u[0].grid
    return u[0].with_coef(1j * g.k1 * u[1].coef - 1j * g.k2 * u[0].coef)


def divergence(u: tuple[SpectralField, SpectralField]) -> SpectralField:
    g = u[0].grid
    return u[0].with_coef(1j * g.k1 * u[0].coef + 1j * g.k2 * u[1].coef)


def streamfunction(w: SpectralField) -> SpectralField:
    return apply_A_power(w, -1.0)


# ------------------------------------------------------ projections


def project(f: SpectralField, cutoff: WaveGrid) -> SpectralField:
    """P_n: zero every mode of ``f`` outside ``cutoff`` (result stays on f's grid)."""
    if not f.grid.contains(cutoff):
        raise ValueError(
            f"cutoff {cutoff.label()} is not contained in field grid {f.grid.label()}; resample first"
        )
    keep = np.zeros(f.grid.storage_shape, dtype=bool)
    keep[_embed_slices(cutoff.h, f.grid.h)] = cutoff.mask
    return f.with_coef(np.where(keep, f.coef, 0.0))


def complement(f: SpectralField, cutoff: WaveGrid) -> SpectralField:
    """Q_n = I - P_n."""
    return f - project(f, cutoff)


def resample(f: SpectralField, new_grid: WaveGrid) -> SpectralField:
    """Zero-pad or truncate onto ``new_grid``."""
    if new_grid == f.grid:
        return f
    out = np.zeros(new_grid.storage_shape, dtype=complex)
    h = min(f.grid.h, new_grid.h)
    out[_embed_slices(h, new_grid.h)] = f.coef[_embed_slices(h, f.grid.h)]
    return SpectralField(new_grid, out)


def random_field(grid: WaveGrid, rng: np.random.Generator, decay: float = 1.0) -> SpectralField:
    """Random real field with coefficients ~ |k|^{-decay}."""
    shape = grid.storage_shape
    c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * grid.ksq_safe ** (-decay / 2)
    return SpectralField(grid, _hermitian_row(np.where(grid.mask, c, 0.0), grid.h))


# ----------------------------------------------------- Sobolev scale


@dataclass(frozen=True)
class SobolevScale:
    """Strictly decreasing exponents s₀ > s₁ > … defining Z_k = D(A^{s_k}).

    Exponents must lie in ``[lower, upper]``; ``lower`` may be negative for
    dual-type norms (the zero mode is excluded, so these are well defined).
    """

    exponents: tuple[float, ...]
    upper: float = 4.0
    lower: float = 0.0

    def __post_init__(self):
        e = tuple(float(x) for x in self.exponents)
        if len(e) < 1:
            raise ValueError("scale needs at least one exponent")
        if any(b >= a for a, b in zip(e, e[1:])):
            raise ValueError(f"exponents must be strictly decreasing: {e}")
        if e[-1] < self.lower or e[0] > self.upper:
            raise ValueError(f"exponents must lie in [{self.lower}, {self.upper}]")
        object.__setattr__(self, "exponents", e)

    @classmethod
    def stepped(cls, top: float = 1.0, step: float = 0.25, count: int = 4) -> "SobolevScale":
        return cls(tuple(top - i * step for i in range(count)))

    def __len__(self):
        return len(self.exponents)

    def __getitem__(self, k):
        return self.exponents[k]
