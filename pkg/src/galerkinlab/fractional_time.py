"""Fractional space-time norms of sampled trajectories.

For ``f: [0, T] → X`` extended by zero outside ``[0, T]``::

    ‖f‖²_{𝓗^γ} = ‖f‖²_{L²(0,T;X)} + ∫ |τ|^{2γ} ‖f̂(τ)‖²_Y dτ,
    f̂(τ) = ∫ f(t) e^{-2πiτt} dt      (τ in cycles per unit time)

with ``X = D(A^{α_X})`` and ``Y = H``.  Time integrals use the trapezoid rule.

Two evaluations of the frequency integral are provided:

``exact``
    The samples define a piecewise-constant function on trapezoid cells
    (half cells at both ends, zero outside).  Its weighted frequency
    integral equals a constant times the Gagliardo double integral
    ``∫∫ |f(t)-f(s)|² |t-s|^{-1-2γ}``, which is summed in closed form cell by
    cell.  Valid for ``0 <= γ < 1/2``; at ``γ = 0`` it is the trapezoid L² norm.
``dft``
    Zero-pad to ``pad·T``, transform with the FFT and take a Riemann sum in
    τ with ``Δτ = 1/(pad·T)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from .expansion import ExpansionOptions, ExpansionReport, NormFamily, extract_arrays
from .spectral import TWO_PI, SobolevScale, SpectralField, WaveGrid, lambda_cut
from .trajectory import Trajectory, check_aligned

METHODS = ("exact", "dft")


@dataclass(frozen=True)
class HGammaParams:
    """``γ`` in [0, 1]; ``X = D(A^{alpha_x + offset})``, ``Y = D(A^{offset})``.

    ``offset = -1/2`` turns stored vorticity into velocity norms.
    """

    gamma: float
    alpha_x: float = 0.0
    pad: int = 4
    method: str = "exact"
    offset: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.alpha_x < 0:
            raise ValueError("alpha_x must be >= 0")
        if self.pad < 2:
            raise ValueError("pad factor must be >= 2")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.method == "exact" and self.gamma >= 0.5:
            raise ValueError("the exact method needs gamma < 1/2; use method='dft'")


def _check(traj: Trajectory):
    if traj.n_samples < 4:
        raise ValueError("need at least 4 samples")


def trapezoid_weights(n_samples: int, dt: float) -> np.ndarray:
    w = np.full(n_samples, dt)
    w[[0, -1]] *= 0.5
    return w


def _space_weights(grid: WaveGrid, alpha: float) -> np.ndarray:
    w = TWO_PI**2 * grid.weight
    return w if alpha == 0 else w * grid.ksq_safe ** (2 * alpha)


def sample_norms(traj: Trajectory, alpha: float) -> np.ndarray:
    """``‖f(t_j)‖_{D(A^α)}`` for every sample."""
    w = _space_weights(traj.grid, alpha)
    c = traj.coefs
    return np.sqrt(np.sum(w * (c.real**2 + c.imag**2), axis=(1, 2)))


def l2_time_norm(traj: Trajectory, alpha: float = 0.0) -> float:
    """``‖f‖_{L²(0,T;D(A^α))}`` by the trapezoid rule."""
    n2 = sample_norms(traj, alpha) ** 2
    return float(math.sqrt(np.sum(trapezoid_weights(traj.n_samples, traj.sample_dt) * n2)))


def gagliardo_constant(gamma: float) -> float:
    """``c`` with ``∫|τ|^{2γ}|ĥ(τ)|²dτ = E(h)/c`` for the Gagliardo energy E."""
    J = -gamma_fn(-2 * gamma) * math.cos(math.pi * gamma) * 2.0 ** (2 * gamma - 1)
    return 8.0 * math.pi ** (2 * gamma) * J


def _cell_edges(n_samples: int, dt: float) -> np.ndarray:
    T = dt * (n_samples - 1)
    edges = (np.arange(n_samples + 1) - 0.5) * dt
    edges[0], edges[-1] = 0.0, T
    return edges


def _pair_kernel(edges: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Interaction integrals ``∫_{I_p}∫_{I_q} |t-s|^{-1-2γ}`` between cells and with the exterior."""
    p = 1.0 - 2.0 * gamma
    a, b = edges[:-1], edges[1:]
    c = 2.0 * gamma * p
    A, B = a[:, None], b[:, None]
    C, D = a[None, :], b[None, :]
    # for p < q (cell p to the left): ((c-a)^p - (c-b)^p - (d-a)^p + (d-b)^p) / (2γp)
    with np.errstate(invalid="ignore"):
        upper = (np.abs(C - A) ** p - np.abs(C - B) ** p - np.abs(D - A) ** p + np.abs(D - B) ** p) / c
    M = np.triu(upper, 1)
    M = M + M.T
    T = edges[-1]
    ext = (b**p - a**p + (T - a) ** p - (T - b) ** p) / c
    return M, ext


def fractional_seminorm_sq(traj: Trajectory, gamma: float, alpha: float = 0.0, method: str = "exact",
                           pad: int = 4) -> float:
    """``∫ |τ|^{2γ} ‖f̂(τ)‖²_{D(A^α)} dτ`` of the zero-extended trajectory."""
    _check(traj)
    if method == "dft":
        tau, F = time_transform(traj, pad)
        w = _space_weights(traj.grid, alpha)
        e = np.sum(w * (F.real**2 + F.imag**2), axis=(1, 2))
        return float(np.sum(np.abs(tau) ** (2 * gamma) * e) / (pad * traj.T))
    if gamma == 0:
        return l2_time_norm(traj, alpha) ** 2
    if not 0 < gamma < 0.5:
        raise ValueError("exact method needs 0 <= gamma < 1/2")
    edges = _cell_edges(traj.n_samples, traj.sample_dt)
    M, ext = _pair_kernel(edges, gamma)
    w = np.sqrt(_space_weights(traj.grid, alpha))
    X = (traj.coefs * w).reshape(traj.n_samples, -1)
    G = (X @ X.conj().T).real
    d = np.diag(G)
    E = 2.0 * (np.sum(d * (M.sum(axis=1) + ext)) - np.sum(G * M))
    return float(max(E, 0.0) / gagliardo_constant(gamma))


def hgamma_norm(traj: Trajectory, params: HGammaParams) -> float:
    _check(traj)
    lx = l2_time_norm(traj, params.alpha_x + params.offset)
    semi = fractional_seminorm_sq(traj, params.gamma, params.offset, params.method, params.pad)
    return float(math.sqrt(lx**2 + semi))


def time_transform(traj: Trajectory, pad: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid-rule transform ``f̂(τ_k)`` of the zero-extended samples.

    Frequencies are in cycles per unit time (kernel ``e^{-2πiτt}``), spaced
    ``1/(pad·T)``.  numpy's FFT uses the same sign and unit convention, so no
    angular conversion is needed.
    """
    _check(traj)
    M = traj.n_samples - 1
    L = pad * M
    w = trapezoid_weights(traj.n_samples, traj.sample_dt)
    buf = np.zeros((L,) + traj.grid.storage_shape, dtype=complex)
    buf[: traj.n_samples] = traj.coefs * w[:, None, None]
    F = np.fft.fft(buf, axis=0)
    tau = np.fft.fftfreq(L, d=traj.sample_dt)
    return tau, F


def inverse_time_transform(traj: Trajectory, tau: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Undo :func:`time_transform` (returns the unweighted samples)."""
    buf = np.fft.ifft(F, axis=0)[: traj.n_samples]
    w = trapezoid_weights(traj.n_samples, traj.sample_dt)
    return buf / w[:, None, None]


def conjugate_symmetry_defect(traj: Trajectory, pad: int = 4) -> float:
    """Relative size of the imaginary part of the reconstructed physical samples."""
    tau, F = time_transform(traj, pad)
    back = inverse_time_transform(traj, tau, F)
    N = 2 * traj.grid.h + 2
    worst, scale = 0.0, 0.0
    for j in range(traj.n_samples):
        h = traj.grid.h
        full = np.zeros((N, N), dtype=complex)
        c = back[j]
        for k1 in range(-h, h + 1):
            full[k1 % N, : h + 1] = c[k1 + h]
        for k1 in range(-h, h + 1):
            for k2 in range(1, h + 1):
                full[(-k1) % N, (-k2) % N] = np.conj(c[k1 + h, k2])
        phys = np.fft.ifft2(full) * N * N
        worst = max(worst, float(np.max(np.abs(phys.imag))))
        scale = max(scale, float(np.max(np.abs(phys.real))))
    return worst / scale if scale > 0 else 0.0


# ------------------------------------------------------------- families


class HGammaFamily:
    """Norm family ``s ↦ 𝓗^γ(0,T; D(A^{s+offset}), D(A^{offset}))`` for the expansion engine."""

    def __init__(self, grid: WaveGrid, n_samples: int, sample_dt: float, gamma: float,
                 offset: float = 0.0, method: str = "exact", pad: int = 4):
        self.grid, self.n_samples, self.sample_dt = grid, n_samples, sample_dt
        self.gamma, self.offset, self.method, self.pad = gamma, offset, method, pad
        self._l2 = NormFamily.space_time(grid, n_samples, sample_dt, offset)

    def weights(self, s: float) -> np.ndarray:
        return self._l2.weights(s)

    def norm(self, x: np.ndarray, s: float) -> float:
        tr = Trajectory(self.grid, self.sample_dt, x)
        return hgamma_norm(tr, HGammaParams(self.gamma, s, self.pad, self.method, self.offset))

    def norms(self, xs: np.ndarray, s: float) -> np.ndarray:
        return np.array([self.norm(x, s) for x in xs])


def transient_expansion(trajectories: list[Trajectory], reference: Trajectory | None,
                        options: ExpansionOptions | None = None, norm: str = "l2",
                        gamma: float = 0.2, velocity: bool = True, labels=None) -> ExpansionReport:
    """Expansion of a ladder of trajectories in time-integrated norms.

    Each trajectory is one vector.  With ``velocity`` the stored vorticity is
    measured as velocity (exponents shifted by -1/2), so exponent 0 of the
    scale is ``L²(0,T;H)``.  ``labels`` default to each trajectory's lambda_cut.
    """
    if not trajectories:
        raise ValueError("no trajectories")
    options = options or ExpansionOptions(scale=SobolevScale((0.4, 0.3, 0.2, 0.1)))
    grid = reference.grid if reference is not None else max((t.grid for t in trajectories), key=lambda g: g.h)
    tr = [t.resampled(grid) for t in trajectories]
    for t in tr[1:]:
        check_aligned(tr[0], t)
    if reference is not None:
        check_aligned(tr[0], reference)
    offset = options.norm_offset - (0.5 if velocity else 0.0)
    n, dt = tr[0].n_samples, tr[0].sample_dt
    if norm == "l2":
        family = NormFamily.space_time(grid, n, dt, offset)
    elif norm == "hgamma":
        family = HGammaFamily(grid, n, dt, gamma, offset)
    else:
        raise ValueError("norm must be 'l2' or 'hgamma'")
    if labels is None:
        labels = [lambda_cut(t.grid) for t in trajectories]
    arrays = np.stack([t.coefs for t in tr])
    limit = None if reference is None else reference.coefs
    return extract_arrays(arrays, family, options, limit=limit, labels=labels, grid=grid)


# -------------------------------------------------------- heat decay oracle


def heat_decay_trajectory(u0: SpectralField, nu: float, T: float, sample_dt: float,
                          grid: WaveGrid | None = None) -> Trajectory:
    """Closed-form samples of ``ω_t = νΔω`` from ``u0`` projected onto ``grid``."""
    grid = grid or u0.grid
    from .spectral import resample

    c0 = resample(u0, grid).coef
    m = int(round(T / sample_dt))
    t = sample_dt * np.arange(m + 1)
    coefs = c0[None] * np.exp(-nu * grid.ksq[None] * t[:, None, None])
    return Trajectory(grid, sample_dt, coefs)


def heat_decay_tail_l2(u0: SpectralField, cutoff: WaveGrid, nu: float, T: float, alpha: float = -0.5) -> float:
    """Exact ``‖Q_n ω‖_{L²(0,T;D(A^α))}`` for heat decay (time integral in closed form)."""
    g = u0.grid
    keep = np.zeros(g.storage_shape, dtype=bool)
    h = cutoff.h
    keep[g.h - h: g.h + h + 1, : h + 1] = cutoff.mask
    tail = g.mask & ~keep
    ks = g.ksq[tail]
    amp = TWO_PI**2 * g.weight[tail] * ks ** (2 * alpha) * np.abs(u0.coef[tail]) ** 2
    integ = -np.expm1(-2 * nu * ks * T) / (2 * nu * ks)
    return float(math.sqrt(np.sum(amp * integ)))
