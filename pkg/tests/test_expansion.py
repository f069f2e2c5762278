import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from galerkinlab.expansion import (
    BUILTIN_FORCINGS,
    ExpansionOptions,
    all_passed,
    builtin_forcing,
    default_example3_resolutions,
    example3_compare,
    example3_oracle,
    extract,
    extract_arrays,
    fit_power_model,
    verify_report,
    write_report,
)
from galerkinlab.spectral import SobolevScale, SpectralField, WaveGrid, lambda_cut, project, random_field

from oracles import planted

LADDER10 = [32, 36, 48, 54, 64, 72, 96, 108, 128, 144]
LAM10 = np.array([lambda_cut(WaveGrid.square(n)) for n in LADDER10])

# full-lattice tail sums of |k|^-3 coefficients on |k1|,|k2| <= 256, summed directly with math.fsum
ALGEBRAIC_TAIL_ORACLE = {
    32: (26.086979147092922, 3.557940338409497, 0.6089807144350768),
    64: (22.636880259514882, 2.449523116318876, 0.3074375696051453),
}


def test_one_term_recovery(rng):
    grid, fam, v, (w1,) = planted(rng, 1)
    a = LAM10**-0.5
    rep = extract_arrays(np.stack([v + ai * w1 for ai in a]), fam, ExpansionOptions(), limit=v, labels=LAM10,
                         grid=grid)
    assert rep.classification == "finite" and rep.K == 1
    np.testing.assert_allclose(rep.terms[0].gamma, a, rtol=1e-12)
    assert fam.norm(rep.terms[0].limit - w1, 0.75) <= 1e-12
    assert all_passed(verify_report(rep))


def test_two_term_recovery(rng):
    grid, fam, v, (w1, w2) = planted(rng, 2)
    a = LAM10**-0.5
    seq = np.stack([v + ai * w1 + ai**2 * w2 for ai in a])
    rep = extract_arrays(seq, fam, ExpansionOptions(), limit=v, labels=LAM10, grid=grid)
    assert rep.K >= 2
    assert fam.norm(rep.terms[0].limit - w1, 0.75) <= 1e-6
    assert fam.norm(rep.terms[1].limit - w2, 0.5) <= 1e-6
    conds = verify_report(rep)
    assert all_passed(conds), [(c.name, c.detail) for c in conds if not c.passed]


def test_window_estimator_is_first_order_accurate(rng):
    grid, fam, v, (w1, w2) = planted(rng, 2)
    a = LAM10**-0.5
    seq = np.stack([v + ai * w1 + ai**2 * w2 for ai in a])
    rep = extract_arrays(seq, fam, ExpansionOptions(estimator="window"), limit=v, labels=LAM10, grid=grid)
    err = fam.norm(rep.terms[0].limit - w1, 0.75)
    # bias of a trailing-window average is of the size of the next term
    assert 1e-4 < err < 0.1
    assert rep.terms[0].estimator == "window"


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.floats(1e-3, 1e3))
def test_scale_equivariance(seed, c):
    grid, fam, v, (w1, w2) = planted(np.random.default_rng(seed), 2, WaveGrid.square(24))
    a = LAM10[:8] ** -0.5
    d = np.stack([ai * w1 + ai**2 * w2 for ai in a])
    r1 = extract_arrays(v + d, fam, ExpansionOptions(), limit=v, labels=LAM10[:8], grid=grid)
    r2 = extract_arrays(v + c * d, fam, ExpansionOptions(), limit=v, labels=LAM10[:8], grid=grid)
    np.testing.assert_allclose(r2.terms[0].gamma, c * r1.terms[0].gamma, rtol=1e-10)
    assert fam.norm(r2.terms[0].limit - r1.terms[0].limit, 0.75) <= 1e-8


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_reconstruction_and_unit_remainders(seed):
    grid, fam, v, (w1, w2) = planted(np.random.default_rng(seed), 2, WaveGrid.square(24))
    a = LAM10[:8] ** -0.7
    seq = np.stack([v + ai * w1 + ai**1.6 * w2 for ai in a])
    rep = extract_arrays(seq, fam, ExpansionOptions(), limit=v, labels=LAM10[:8], grid=grid)
    conds = {c.name: c for c in verify_report(rep)}
    assert conds["reconstruction"].passed and conds["unit_remainders"].passed


def test_trivial_and_nonconvergent_sequences(rng):
    grid = WaveGrid.square(16)
    v = random_field(grid, rng)
    lab = np.arange(1.0, 6.0)
    rep = extract([v] * 5, limit=v, labels=lab)
    assert rep.classification == "trivial" and rep.K == 0
    w = random_field(grid, rng)
    grow = [v + w * (1.0 + i) for i in range(5)]
    rep = extract(grow, limit=v, labels=lab)
    assert rep.classification == "nonconvergent" and rep.K == 1


def test_projection_sequence_is_degenerate():
    g = builtin_forcing("algebraic-tail", 256)
    res = [32, 36, 48, 54, 64, 72, 96]
    seq = [project(g, WaveGrid.square(n)) for n in res]
    rep = extract(seq, limit=g, labels=[lambda_cut(WaveGrid.square(n)) for n in res])
    assert rep.terms and all(t.degenerate for t in rep.terms)


def test_example3_oracle_frozen_values():
    g = builtin_forcing("algebraic-tail", 512)
    tab = example3_oracle(g, (1.0, 0.75, 0.5), [32, 64])
    for j, n in enumerate((32, 64)):
        np.testing.assert_allclose(tab.gamma[:, j], ALGEBRAIC_TAIL_ORACLE[n], rtol=1e-12)
    assert tab.bound_ok


@pytest.mark.parametrize("name", ["algebraic-tail", "manufactured-forcing"])
def test_example3_engine_matches_oracle(name):
    g = builtin_forcing(name, 512)
    tab, rep, diff = example3_compare(g, (1.0, 0.75, 0.5), default_example3_resolutions(name))
    assert np.nanmax(diff) <= 1e-12
    assert tab.bound_ok
    assert all(t.degenerate for t in rep.terms)


def test_example3_single_mode_closed_form():
    g = builtin_forcing("single-mode", 512)
    res = default_example3_resolutions("single-mode")
    tab = example3_oracle(g, (1.0, 0.75, 0.5), res)
    base = np.sqrt(2) * np.pi
    for j, n in enumerate(res):
        expect = [base * 400.0**a if n // 2 < 20 else 0.0 for a in (1.0, 0.75, 0.5)]
        np.testing.assert_allclose(tab.gamma[:, j], expect, rtol=1e-14)
        if n // 2 < 20:
            # ratio is the bound evaluated at |k|² = 400 >= lambda_cut
            np.testing.assert_allclose(tab.ratios[:, j], 400.0**-0.25, rtol=1e-14)
    assert tab.hypothesis_ok.all() and tab.bound_ok
    # P_n g = 0 on every level, so the error never decreases
    _, rep, diff = example3_compare(g, (1.0, 0.75, 0.5), res)
    assert rep.classification == "nonconvergent" and np.nanmax(diff[0]) <= 1e-12
    past = example3_oracle(g, (1.0, 0.75, 0.5), [36, 48])
    assert list(past.hypothesis_ok) == [True, False]


def test_builtin_forcings_listed():
    assert set(BUILTIN_FORCINGS) == {"single-mode", "algebraic-tail", "manufactured-forcing"}
    with pytest.raises(ValueError):
        builtin_forcing("nope")


def test_fit_power_model_recovers_exponents(rng):
    lab = LAM10
    U = rng.standard_normal((3, 5))
    R = (lab[:, None] / lab[0]) ** -0.5 * U[0] + (lab[:, None] / lab[0]) ** -1.5 * U[1]
    m = fit_power_model(R, lab, max_terms=3)
    assert sorted(m.exponents)[:2] == pytest.approx([0.5, 1.5], abs=1e-6)


def test_report_files(tmp_path, rng):
    grid, fam, v, (w1,) = planted(rng, 1, WaveGrid.square(16))
    a = LAM10[:6] ** -0.5
    rep = extract_arrays(np.stack([v + ai * w1 for ai in a]), fam, ExpansionOptions(), limit=v,
                         labels=LAM10[:6], grid=grid)
    rep.conditions = verify_report(rep)
    write_report(rep, tmp_path, "r")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["classification"] == "finite" and data["terms"][0]["limit_vector"] == "w1.bin"
    head = (tmp_path / "r_gamma.csv").read_text().splitlines()[0]
    assert head == "index,lambda_cut,Gamma1"
    assert (tmp_path / "r_w1.bin").exists()


def test_options_validation():
    with pytest.raises(ValueError):
        ExpansionOptions(estimator="magic")
    with pytest.raises(ValueError):
        ExpansionOptions(theta_deg=1.5)
    assert ExpansionOptions(scale=SobolevScale((2.0, 1.0))).scale[1] == 1.0


def test_sequence_fields_must_share_grid(rng):
    a = random_field(WaveGrid.square(8), rng)
    b = random_field(WaveGrid.square(12), rng)
    rep = extract([a, b, b * 0.5], limit=SpectralField.zeros(WaveGrid.square(16)), labels=[1.0, 2.0, 3.0])
    assert rep.grid == WaveGrid.square(16)
