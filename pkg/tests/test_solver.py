import numpy as np
import pytest
from scipy.optimize import newton_krylov

from galerkinlab.ladder import manufactured_problem
from galerkinlab.solver import (
    BlowUpError,
    Integrator,
    SolverConfig,
    compute_forcing,
    energy_bound_holds,
    manufactured_vorticity,
    nonlinear_term,
    run_to_steady,
    run_transient,
    steady_residual,
)
from galerkinlab.spectral import SpectralField, WaveGrid, frac_norm, random_field, resample


class FullGridResidual:
    """Independent steady residual on a full (2h+1)² physical grid, padded product."""

    def __init__(self, h, nu, g_phys):
        self.h, self.nu = h, nu
        self.N = 2 * h + 1
        self.M = 3 * h + 2
        k = np.fft.fftfreq(self.N, 1.0 / self.N)
        self.k1, self.k2 = np.meshgrid(k, k, indexing="ij")
        self.ksq = self.k1**2 + self.k2**2
        self.inv = np.where(self.ksq > 0, 1.0 / np.where(self.ksq > 0, self.ksq, 1), 0.0)
        self.ghat = np.fft.fft2(g_phys) / self.N**2
        self.ghat[0, 0] = 0

    def pad(self, c):
        out = np.zeros((self.M, self.M), complex)
        h = self.h
        idx = np.r_[0:h + 1, -h:0]
        out[np.ix_(idx, idx)] = c
        return np.fft.ifft2(out).real * self.M**2

    def trunc(self, p):
        c = np.fft.fft2(p) / self.M**2
        h = self.h
        idx = np.r_[0:h + 1, -h:0]
        return c[np.ix_(idx, idx)]

    def __call__(self, w_phys):
        c = np.fft.fft2(w_phys) / self.N**2
        c[0, 0] = 0
        psi = c * self.inv
        u1, u2 = self.pad(1j * self.k2 * psi), self.pad(-1j * self.k1 * psi)
        wx, wy = self.pad(1j * self.k1 * c), self.pad(1j * self.k2 * c)
        b = self.trunc(u1 * wx + u2 * wy)
        r = self.nu * self.ksq * c + b - self.ghat
        r[0, 0] = np.mean(w_phys)  # pins the mean
        return np.fft.ifft2(r).real * self.N**2


def test_steady_state_matches_newton_krylov_oracle():
    n, nu = 32, 0.01
    prob = manufactured_problem(64, nu)
    grid = WaveGrid.square(n)
    h = grid.h
    F = FullGridResidual(h, nu, resample(prob.g, grid).to_physical(2 * h + 1))
    x0 = resample(prob.omega, grid).to_physical(2 * h + 1)
    sol = newton_krylov(F, x0, f_tol=1e-12, method="lgmres")
    oracle = SpectralField.from_physical(grid, sol)
    rec = run_to_steady(grid, prob.g, SolverConfig(nu=nu))
    assert rec.converged and rec.method == "ab3+newton"
    assert frac_norm(rec.omega - oracle, 0) <= 1e-8 * frac_norm(oracle, 0)


def test_time_marching_fixed_point_bias_removed_by_newton():
    # IF-AB3 stationary points carry an O(ν|k|²Δt) bias; Newton removes it
    grid = WaveGrid.square(16)
    prob = manufactured_problem(32, nu=0.1)
    a = run_to_steady(grid, prob.g, SolverConfig(nu=0.1, dt=1e-2, steady_method="ab3", steady_tol=1e-9))
    b = run_to_steady(grid, prob.g, SolverConfig(nu=0.1))
    assert a.converged and b.converged
    assert b.equation_residual <= 1e-11 < a.equation_residual
    rel = frac_norm(a.omega - b.omega, 0) / frac_norm(b.omega, 0)
    assert 1e-7 < rel < 1e-3
    c = run_to_steady(grid, prob.g, SolverConfig(nu=0.1, dt=2.5e-3, steady_method="ab3", steady_tol=1e-9), a.omega)
    # bias shrinks with the step
    assert frac_norm(c.omega - b.omega, 0) < 0.5 * frac_norm(a.omega - b.omega, 0)


def test_single_mode_steady_state_exact():
    grid = WaveGrid.square(32)
    cosx = SpectralField.from_modes(grid, {(1, 0): 0.5})
    rec = run_to_steady(grid, cosx * 0.01, SolverConfig())
    assert rec.converged
    assert frac_norm(rec.omega - cosx, 0) <= 1e-9


def test_manufactured_forcing_balances_exact_state():
    prob = manufactured_problem(64)
    r = steady_residual(prob.omega, prob.g, SolverConfig(nu=prob.nu))
    assert frac_norm(r, 0) <= 1e-12 * frac_norm(prob.g, 0)
    g2 = compute_forcing(prob.omega, prob.nu)
    assert frac_norm(g2 - prob.g, 0) <= 1e-13 * frac_norm(prob.g, 0)


def test_manufactured_state_has_algebraic_spectrum():
    w = manufactured_vorticity(WaveGrid.square(128))
    k = np.sqrt(w.grid.ksq)
    c = np.abs(w.coef)
    bands = [c[(k >= lo) & (k < 2 * lo) & w.grid.mask].max() for lo in (8, 16, 32)]
    # the cubic-spline kinks leave a power-law tail, not spectral decay
    assert bands[0] > bands[1] > bands[2] > 1e-9


def test_energy_bound_on_converged_levels(small_ladder):
    for rec in small_ladder.records:
        assert rec.converged and rec.energy_bound_ok
        assert energy_bound_holds(rec.omega, small_ladder.problem.g, small_ladder.problem.nu)


def test_steady_solve_is_deterministic():
    grid = WaveGrid.square(16)
    prob = manufactured_problem(32)
    a = run_to_steady(grid, prob.g, SolverConfig())
    b = run_to_steady(grid, prob.g, SolverConfig())
    assert np.array_equal(a.omega.coef, b.omega.coef)


def test_ab3_temporal_order(rng):
    grid = WaveGrid.square(16)
    u0 = random_field(grid, rng, decay=3.0) * 3.0
    g = random_field(grid, rng, decay=3.0)
    ref = run_transient(grid, u0, g, 0.5, SolverConfig(dt=1e-4))
    errs = []
    for dt in (0.005, 0.0025, 0.00125):
        tr = run_transient(grid, u0, g, 0.5, SolverConfig(dt=dt))
        errs.append(frac_norm(tr.field(-1) - ref.field(-1), 0))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 2.85), orders


def test_explicit_and_integrating_factor_agree(rng):
    grid = WaveGrid.square(12)
    u0 = random_field(grid, rng, decay=2.0)
    a = run_transient(grid, u0, None, 0.2, SolverConfig(dt=1e-3))
    b = run_transient(grid, u0, None, 0.2, SolverConfig(dt=1e-3, viscous="explicit"))
    assert frac_norm(a.field(-1) - b.field(-1), 0) <= 1e-6 * frac_norm(a.field(-1), 0)


def test_stokes_mode_is_heat_decay(rng):
    grid = WaveGrid.square(16)
    u0 = random_field(grid, rng)
    tr = run_transient(grid, u0, None, 0.1, SolverConfig(dt=1e-3, nonlinear_mode="none"), stride=10)
    exact = u0.coef * np.exp(-0.01 * grid.ksq * 0.1)
    assert np.max(np.abs(tr.coefs[-1] - exact)) <= 1e-14 * np.max(np.abs(exact))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_is_reported():
    grid = WaveGrid.square(32)
    u0 = SpectralField.from_modes(grid, {(16, 0): 0.5, (1, 1): 0.5})
    cfg = SolverConfig(nu=1.0, dt=0.5, viscous="explicit")
    tr = run_transient(grid, u0, None, 200.0, cfg)
    assert tr.blown_up and "non-finite" in tr.note
    integ = Integrator(grid, cfg)
    c = u0.coef.copy()
    with pytest.raises(BlowUpError):
        for _ in range(1000):
            c = integ.step(c)


def test_raw_nonlinear_term_contains_projected(rng):
    w = random_field(WaveGrid.square(16), rng)
    raw = nonlinear_term(w, "raw")
    proj = nonlinear_term(w, "projected")
    assert raw.grid.h == 2 * w.grid.h
    assert frac_norm(resample(raw, w.grid) - proj, 0) <= 1e-13 * frac_norm(proj, 0)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(nu=0)
    with pytest.raises(ValueError):
        SolverConfig(dealias="half")
    with pytest.raises(ValueError):
        run_transient(WaveGrid.square(8), SpectralField.zeros(WaveGrid.square(8)), None, 0.0105, SolverConfig())
