"""Independent reference values shared by several test modules."""

import math

import numpy as np
from scipy.integrate import quad

from galerkinlab.expansion import NormFamily
from galerkinlab.spectral import SpectralField, WaveGrid, frac_norm, random_field
from galerkinlab.trajectory import Trajectory


def random_trajectory(rng, grid=WaveGrid.square(8), m=None, dt=None):
    m = m or int(rng.integers(8, 40))
    dt = dt or float(rng.uniform(0.01, 0.2))
    t = dt * np.arange(m + 1)
    a, b = random_field(grid, rng).coef, random_field(grid, rng).coef
    w = rng.uniform(0, 20)
    coefs = a[None] * np.cos(w * t)[:, None, None] + b[None] * np.exp(-t)[:, None, None]
    return Trajectory(grid, dt, coefs)


def sinc_weight_integral(g):
    """∫_R |τ|^{2g} sin²(πτ)/(πτ)² dτ by adaptive quadrature plus an oscillatory tail."""
    f = lambda t: t ** (2 * g) * (np.sin(np.pi * t) / (np.pi * t)) ** 2
    L = 200.0
    head = quad(f, 0, L, limit=4000)[0]
    # sin² = (1 - cos 2πτ)/2 on the tail
    tail = quad(lambda t: t ** (2 * g - 2) / (2 * np.pi**2), L, np.inf)[0]
    tail -= quad(lambda t: t ** (2 * g - 2) / (2 * np.pi**2), L, np.inf, weight="cos", wvar=2 * np.pi)[0]
    return 2 * (head + tail)


def boxcar_oracle(g, alpha_x):
    cosx = SpectralField.from_modes(WaveGrid.square(8), {(1, 0): 0.5})
    return math.sqrt(frac_norm(cosx, alpha_x) ** 2 + frac_norm(cosx, 0) ** 2 * sinc_weight_integral(g))


def boxcar(m):
    cosx = SpectralField.from_modes(WaveGrid.square(8), {(1, 0): 0.5})
    return Trajectory(cosx.grid, 1.0 / m, np.repeat(cosx.coef[None], m + 1, axis=0))


def inner(fam, x, y, s):
    return float(np.sum(fam.weights(s) * (x * y.conj()).real))


def planted(rng, terms=2, grid=WaveGrid.square(64)):
    """v, w1, w2 with w_k unit in Z_{k-1} and w2 orthogonal to w1 in Z_0."""
    fam = NormFamily.spatial(grid)
    v = random_field(grid, rng, 3).coef
    w1 = random_field(grid, rng, 3).coef
    w1 = w1 / fam.norm(w1, 1.0)
    ws = [w1]
    if terms > 1:
        w2 = random_field(grid, rng, 3).coef
        w2 = w2 - w1 * inner(fam, w2, w1, 1.0) / inner(fam, w1, w1, 1.0)
        ws.append(w2 / fam.norm(w2, 0.75))
    return grid, fam, v, ws


def physical_l2(f: SpectralField, N=None) -> float:
    """L2 norm by direct summation on the physical grid."""
    x = f.to_physical(N)
    return math.sqrt(np.mean(x**2)) * 2 * np.pi
