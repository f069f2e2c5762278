"""Pseudo-spectral Galerkin solver for the 2D vorticity equation

    ∂ω/∂t + ν A ω + P_n(u·∇ω) = P_n g,    u = ∇⊥ψ,  Aψ = ω,

on a square (or ball) truncation, with third-order Adams–Bashforth stepping.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .spectral import (
    SpectralField,
    WaveGrid,
    _extract,
    _hermitian_row,
    _scatter,
    dealiased_size,
    default_physical_size,
    frac_norm_velocity,
    resample,
    velocity_from_vorticity,
)
from .trajectory import Trajectory

log = logging.getLogger(__name__)

AB3_WEIGHTS = (23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0)


BLOWUP_PREFIX = "non-finite vorticity"


class BlowUpError(FloatingPointError):
    """Raised when the state stops being finite."""

    def __init__(self, step: int, t: float, last_norm: float):
        super().__init__(f"{BLOWUP_PREFIX} at step {step} (t={t:g}); last finite L2 norm {last_norm:.3e}")
        self.step = step
        self.t = t


@dataclass(frozen=True)
class SolverConfig:
    nu: float = 0.01
    dt: float = 1e-3
    dealias: str = "two-thirds"  # two-thirds | none
    viscous: str = "integrating-factor"  # integrating-factor | explicit
    steady_tol: float = 1e-11
    max_steps: int = 200_000
    nonlinear_mode: str = "projected"  # projected | raw | none (Stokes flow)
    steady_method: str = "ab3+newton"  # ab3 | ab3+newton
    warmup_steps: int = 2_000
    newton_switch: float = 1e-3
    newton_maxiter: int = 200
    gmres_restart: int = 60
    log_every: int = 100

    def __post_init__(self):
        if not self.nu > 0 or not self.dt > 0 or not self.steady_tol > 0:
            raise ValueError("nu, dt and steady_tol must be positive")
        if self.dealias not in ("two-thirds", "none"):
            raise ValueError(f"unknown dealias rule {self.dealias!r}")
        if self.viscous not in ("integrating-factor", "explicit"):
            raise ValueError(f"unknown viscous treatment {self.viscous!r}")
        if self.nonlinear_mode not in ("projected", "raw", "none"):
            raise ValueError(f"unknown nonlinear mode {self.nonlinear_mode!r}")
        if self.steady_method not in ("ab3", "ab3+newton"):
            raise ValueError(f"unknown steady method {self.steady_method!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def replace(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


# ------------------------------------------------------- manufactured data


def sigma(s):
    """Cubic spline 1 - 3s² + 2s³ on [0, 1]."""
    s = np.asarray(s, dtype=float)
    return 1.0 - 3.0 * s**2 + 2.0 * s**3


def reflect(z):
    """Even reflection map [0, 2π] -> [0, 1] (periodic extension outside)."""
    z = np.mod(np.asarray(z, dtype=float), 2 * np.pi)
    return np.where(z <= np.pi, z / np.pi, (2 * np.pi - z) / np.pi)


def manufactured_physical(x, y):
    return sigma(reflect(x)) * sigma(reflect(y)) * (1.0 + 0.25 * np.cos(8 * x) * np.cos(6 * y))


def manufactured_vorticity(grid: WaveGrid, samples: int | None = None) -> SpectralField:
    """Transform of the manufactured field sampled on a ``samples``² collocation grid.

    The default oversamples by 4 per axis so aliasing of the |k|^-4 tail is
    far below the truncation error of the grid itself.
    """
    N = samples or sfft.next_fast_len(8 * grid.h)
    x = 2 * np.pi * np.arange(N) / N
    vals = manufactured_physical(x[:, None], x[None, :])
    return SpectralField.from_physical(grid, vals)


# ----------------------------------------------------------- nonlinearity


class Advection:
    """Pseudo-spectral evaluation of ``b(a, c) = u(a)·∇c`` projected onto a grid."""

    def __init__(self, grid: WaveGrid, dealias: str = "two-thirds", out_grid: WaveGrid | None = None):
        self.grid = grid
        self.out_grid = out_grid or grid
        h_out = self.out_grid.h
        if out_grid is not None and h_out >= 2 * grid.h:
            # exact product wanted: resolve half-width 2h without aliasing
            self.N = sfft.next_fast_len(max(4 * grid.h + 1, 2 * h_out + 1))
        elif dealias == "two-thirds":
            self.N = max(dealiased_size(grid.h), sfft.next_fast_len(2 * h_out + 1))
        else:
            self.N = max(default_physical_size(grid), sfft.next_fast_len(2 * h_out + 1))
        g = grid
        self._k1 = 1j * g.k1
        self._k2 = 1j * g.k2
        self._inv = 1.0 / g.ksq_safe
        self._scale = self.N * self.N

    def _phys(self, coef):
        return sfft.irfft2(_scatter(coef, self.grid.h, self.N) * self._scale, s=(self.N, self.N))

    def fields(self, coef: np.ndarray):
        """Physical u₁, u₂, ∂ₓω, ∂ᵧω for the vorticity coefficients ``coef``."""
        psi = coef * self._inv
        return (self._phys(self._k2 * psi), self._phys(-self._k1 * psi),
                self._phys(self._k1 * coef), self._phys(self._k2 * coef))

    def to_coef(self, prod: np.ndarray) -> np.ndarray:
        F = sfft.rfft2(prod) / self._scale
        c = _hermitian_row(_extract(F, self.out_grid.h, self.N), self.out_grid.h)
        return c * self.out_grid.mask

    def __call__(self, coef: np.ndarray) -> np.ndarray:
        u1, u2, wx, wy = self.fields(coef)
        return self.to_coef(u1 * wx + u2 * wy)

    def bilinear(self, a, c) -> np.ndarray:
        """u(a)·∇c, where each argument is a coefficient array or precomputed ``fields`` tuple."""
        fa = a if isinstance(a, tuple) else self.fields(a)
        fc = c if isinstance(c, tuple) else self.fields(c)
        return self.to_coef(fa[0] * fc[2] + fa[1] * fc[3])


def nonlinear_term(omega: SpectralField, mode: str = "projected", dealias: str = "two-thirds") -> SpectralField:
    """``u·∇ω``; ``projected`` returns P_n of it on ω's grid, ``raw`` the full product."""
    if mode == "projected":
        adv = Advection(omega.grid, dealias)
    elif mode == "raw":
        adv = Advection(omega.grid, dealias, out_grid=WaveGrid.square(4 * omega.grid.h))
    else:
        raise ValueError(f"unknown nonlinear mode {mode!r}")
    return SpectralField(adv.out_grid, adv(omega.coef))


def bilinear_term(a: SpectralField, c: SpectralField, dealias: str = "two-thirds") -> SpectralField:
    """Projected ``u(a)·∇c`` (vorticity form of B(a, c))."""
    if a.grid != c.grid:
        raise ValueError("bilinear_term needs fields on one grid")
    adv = Advection(a.grid, dealias)
    return SpectralField(a.grid, adv.bilinear(a.coef, c.coef))


def compute_forcing(omega: SpectralField, nu: float, dealias: str = "two-thirds") -> SpectralField:
    """Force that makes ``omega`` a steady state: ν A ω + u·∇ω."""
    return omega.with_coef(nu * omega.grid.ksq * omega.coef) + nonlinear_term(omega, "projected", dealias)


# ------------------------------------------------------------ time stepping


def ab3_step(history, omega: SpectralField, config: SolverConfig) -> SpectralField:
    """One AB3 step from tendencies ``history = (T^m, T^{m-1}, T^{m-2})`` (newest first).

    ``T`` is everything except the viscous term under the integrating factor,
    and the full right-hand side in explicit mode.
    """
    lin = _linear_rate(omega.grid, config)
    E = np.exp(lin * config.dt)
    coefs = [h.coef if isinstance(h, SpectralField) else np.asarray(h) for h in history]
    return omega.with_coef(_ab3_kernel(omega.coef, coefs, E, config.dt))


def _ab3_kernel(c, T, E, dt):
    b0, b1, b2 = AB3_WEIGHTS
    return E * (c + dt * (b0 * T[0] + E * (b1 * T[1] + E * (b2 * T[2]))))


def _linear_rate(grid: WaveGrid, config: SolverConfig) -> np.ndarray:
    if config.viscous == "integrating-factor":
        return -config.nu * grid.ksq
    return np.zeros(grid.storage_shape)


class Integrator:
    """AB3 integrator with an SSP-RK3 start-up, both in integrating-factor form."""

    def __init__(self, grid: WaveGrid, config: SolverConfig,
                 forcing: SpectralField | Callable[[float], SpectralField] | None = None):
        self.grid = grid
        self.config = config
        self.adv = Advection(grid, config.dealias)
        lin = _linear_rate(grid, config)
        self.E = np.exp(lin * config.dt)
        self.Eh = np.exp(lin * config.dt / 2)
        self.Ehi = np.exp(-lin * config.dt / 2)
        self.visc = config.nu * grid.ksq
        self.explicit = config.viscous == "explicit"
        self.linear_only = config.nonlinear_mode == "none"
        self._forcing = forcing
        self._gconst = None
        if forcing is None:
            self._gconst = np.zeros(grid.storage_shape, dtype=complex)
        elif isinstance(forcing, SpectralField):
            self._gconst = resample(forcing, grid).coef
        self.history: deque = deque(maxlen=2)
        self.t = 0.0
        self.steps = 0

    def forcing_at(self, t: float) -> np.ndarray:
        if self._gconst is not None:
            return self._gconst
        return resample(self._forcing(t), self.grid).coef

    def tendency(self, c: np.ndarray, t: float) -> np.ndarray:
        T = self.forcing_at(t)
        if self.linear_only:
            T = T.copy()
        else:
            T = T - self.adv(c)
        if self.explicit:
            T = T - self.visc * c
        return T

    def reset(self, t: float = 0.0):
        self.history.clear()
        self.t = t
        self.steps = 0

    def step(self, c: np.ndarray) -> np.ndarray:
        dt = self.config.dt
        T0 = self.tendency(c, self.t)
        if len(self.history) < 2:
            out = self._rk3(c, T0)
        else:
            out = _ab3_kernel(c, (T0, self.history[-1], self.history[-2]), self.E, dt)
        self.history.append(T0)
        self.t += dt
        self.steps += 1
        if not np.isfinite(out).all():
            raise BlowUpError(self.steps, self.t, _l2(self.grid, c))
        return out

    def _rk3(self, c, T0):
        dt, t = self.config.dt, self.t
        E, Eh, Ehi = self.E, self.Eh, self.Ehi
        c1 = E * (c + dt * T0)
        c2 = 0.75 * Eh * c + 0.25 * Ehi * (c1 + dt * self.tendency(c1, t + dt))
        return (1.0 / 3.0) * E * c + (2.0 / 3.0) * Eh * (c2 + dt * self.tendency(c2, t + dt / 2))


def _l2(grid: WaveGrid, c: np.ndarray) -> float:
    return float(2 * np.pi * np.sqrt(np.sum(grid.weight * np.abs(c) ** 2)))


# ----------------------------------------------------------- steady states


@dataclass(eq=False)
class SteadyStateRecord:
    grid: WaveGrid
    omega: SpectralField
    residual: float
    equation_residual: float
    steps: int
    wall_time: float
    converged: bool
    method: str
    newton_iterations: int = 0
    energy_bound_ok: bool = True
    residual_log: list = field(default_factory=list)
    note: str = ""

    @property
    def blown_up(self) -> bool:
        return self.note.startswith(BLOWUP_PREFIX)


class SteadyProblem:
    """Residual F(ω) = ν A ω + P_n(u·∇ω) - P_n g of the Galerkin steady equation."""

    def __init__(self, grid: WaveGrid, g: SpectralField, config: SolverConfig):
        self.grid = grid
        self.config = config
        self.adv = Advection(grid, config.dealias)
        self.g = resample(g, grid).coef
        self.visc = config.nu * grid.ksq
        m = grid.mask
        self.idx = np.nonzero(m & ((grid.k2 > 0) | ((grid.k2 == 0) & (grid.k1 > 0))))
        self.neg_rows = None

    def residual(self, c: np.ndarray) -> np.ndarray:
        if self.config.nonlinear_mode == "none":
            return self.visc * c - self.g
        return self.visc * c + self.adv(c) - self.g

    def pack(self, c: np.ndarray) -> np.ndarray:
        v = c[self.idx]
        return np.concatenate([v.real, v.imag])

    def unpack(self, x: np.ndarray) -> np.ndarray:
        m = len(x) // 2
        c = np.zeros(self.grid.storage_shape, dtype=complex)
        c[self.idx] = x[:m] + 1j * x[m:]
        h = self.grid.h
        c[:h, 0] = np.conj(c[h + 1:, 0][::-1])
        return c

    def norm(self, c: np.ndarray) -> float:
        return _l2(self.grid, c)

    def newton(self, c: np.ndarray, tol: float, maxiter: int, restart: int = 60, tau0: float = 1.0):
        """Pseudo-transient Newton–GMRES.

        Each iteration solves ``(I/τ + J) δ = -F`` with GMRES, right-preconditioned
        by ``(I/τ + νA)^{-1}``; τ grows as the residual falls (switched evolution
        relaxation) so the iteration turns into plain Newton near the solution.
        Returns ``(c, residual_norm, iterations, converged)``.
        """
        F = self.residual(c)
        r = self.norm(F)
        tau = tau0
        visc = self.visc[self.idx]
        n = 2 * len(self.idx[0])
        it = 0
        while r > tol and it < maxiter:
            base = self.adv.fields(c)
            pc = 1.0 / (1.0 / tau + visc)
            pc = np.concatenate([pc, pc])

            def jv(y, base=base, pc=pc, tau=tau):
                d = self.unpack(pc * y)
                out = d / tau + self.visc * d + self.adv.bilinear(d, base) + self.adv.bilinear(base, d)
                return self.pack(out)

            op = LinearOperator((n, n), matvec=jv, dtype=float)
            eta = 1e-3 if tau < 1e6 else 1e-6
            y, info = gmres(op, -self.pack(F), rtol=eta, atol=0.0, restart=restart, maxiter=10)
            c_new = c + self.unpack(pc * y)
            F_new = self.residual(c_new)
            r_new = self.norm(F_new)
            it += 1
            if not np.isfinite(r_new):
                return c, r, it, False
            if r_new < r:
                tau = min(tau * min(10.0, r / r_new), 1e12)
                c, F, r = c_new, F_new, r_new
            else:
                tau *= 0.5
                if tau < 1e-6:
                    return c, r, it, False
            log.debug("ptc it=%d residual=%.3e tau=%.2e gmres_info=%d", it, r, tau, info)
        return c, r, it, r <= tol


def steady_residual(omega: SpectralField, g: SpectralField, config: SolverConfig) -> SpectralField:
    """ν A ω + P_n(u·∇ω) − P_n g on ω's grid."""
    prob = SteadyProblem(omega.grid, g, config)
    return SpectralField(omega.grid, prob.residual(omega.coef))


def energy_bound_holds(omega: SpectralField, g: SpectralField, nu: float, slack: float = 1e-12) -> bool:
    """ν‖u_n‖_V ≤ |P_n f|_H, with curl f = g (velocity form of the a priori bound)."""
    gn = resample(g, omega.grid)
    lhs = nu * frac_norm_velocity(velocity_from_vorticity(omega), 0.5)
    rhs = frac_norm_velocity(velocity_from_vorticity(gn), 0.0)
    return lhs <= rhs * (1 + slack) + slack


def run_to_steady(grid: WaveGrid, g: SpectralField, config: SolverConfig,
                  omega0: SpectralField | None = None) -> SteadyStateRecord:
    """March AB3 to a steady state of the Galerkin system on ``grid``.

    With ``steady_method='ab3'`` the stopping rule is ‖ω^{m+1} − ω^m‖/Δt ≤ tol.
    With ``'ab3+newton'`` AB3 runs until that quantity drops below
    ``newton_switch`` (or ``warmup_steps`` elapse) and the state is then polished
    by Newton–GMRES on the steady equation to ``steady_tol``; if Newton stalls
    the march resumes.  Non-convergence returns an unconverged record.

    The fixed point of integrating-factor AB3 solves the steady equation only
    up to O(ν|k|²Δt), visible in ``equation_residual``; the Newton polish
    removes that bias.
    """
    t0 = time.perf_counter()
    omega0 = SpectralField.zeros(grid) if omega0 is None else resample(omega0, grid)
    integ = Integrator(grid, config, g)
    prob = SteadyProblem(grid, g, config)
    c = omega0.coef.copy()
    dt = config.dt
    rlog: list = []
    res = np.inf
    newton_its = 0
    converged = False
    use_newton = config.steady_method == "ab3+newton"
    next_newton = config.warmup_steps
    note = ""
    try:
        while integ.steps < config.max_steps:
            c_new = integ.step(c)
            res = _l2(grid, c_new - c) / dt
            c = c_new
            if integ.steps % config.log_every == 0:
                rlog.append((integ.steps, res))
            if not use_newton and res <= config.steady_tol:
                converged = True
                break
            if use_newton and (res <= config.newton_switch or integ.steps >= next_newton):
                c_try, r, its, ok = prob.newton(c, 0.5 * config.steady_tol, config.newton_maxiter,
                                                config.gmres_restart)
                newton_its += its
                rlog.append((integ.steps, r))
                if ok:
                    c, res, converged = c_try, r, True
                    break
                next_newton = integ.steps + config.warmup_steps
                integ.reset(integ.t)
    except BlowUpError as exc:
        note = str(exc)
        log.warning("steady solve at %s blew up: %s", grid.label(), exc)
        c = np.nan_to_num(c)
    omega = SpectralField(grid, c)
    eq_res = prob.norm(prob.residual(c))
    if use_newton and converged:
        res = eq_res
    rec = SteadyStateRecord(
        grid=grid, omega=omega, residual=float(res), equation_residual=float(eq_res),
        steps=integ.steps, wall_time=time.perf_counter() - t0, converged=converged,
        method=config.steady_method, newton_iterations=newton_its, residual_log=rlog, note=note,
    )
    rec.energy_bound_ok = energy_bound_holds(omega, g, config.nu)
    if converged and not rec.energy_bound_ok:
        log.warning("energy bound violated at %s", grid.label())
    return rec


# ----------------------------------------------------------------- transients


def run_transient(grid: WaveGrid, u0: SpectralField, g, T: float, config: SolverConfig,
                  stride: int = 1) -> Trajectory:
    """Fixed-step run on [0, T] from ``P_n u0``; samples every ``stride`` steps.

    ``g`` may be None, a SpectralField or a callable ``t -> SpectralField``.
    Blow-up returns the partial trajectory with ``blown_up`` set.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    nsteps = int(round(T / config.dt))
    if not np.isclose(nsteps * config.dt, T, rtol=1e-12, atol=1e-14):
        raise ValueError("T must be an integer multiple of dt")
    if nsteps % stride:
        raise ValueError("number of steps must be a multiple of the sample stride")
    integ = Integrator(grid, config, g)
    c = resample(u0, grid).coef.copy()
    samples = [c.copy()]
    blown, note = False, ""
    try:
        for m in range(1, nsteps + 1):
            c = integ.step(c)
            if m % stride == 0:
                samples.append(c.copy())
    except BlowUpError as exc:
        blown, note = True, str(exc)
    return Trajectory(grid, config.dt * stride, np.stack(samples), blown_up=blown, note=note)
