import json

import numpy as np
import pytest

from galerkinlab.ladder import (
    ArchiveError,
    DESK_LADDER,
    check_resolutions,
    is_2p3q,
    load_archive,
    manufactured_problem,
    run_ladder,
    save_archive,
    single_mode_problem,
    synthetic_archive,
)
from galerkinlab.solver import SolverConfig
from galerkinlab.spectral import WaveGrid, frac_norm, resample


def test_desk_ladder_is_valid():
    assert check_resolutions(DESK_LADDER) == list(DESK_LADDER)
    assert all(is_2p3q(n) for n in DESK_LADDER)


@pytest.mark.parametrize("bad", [[33], [10], [32, 32], [64, 32], []])
def test_bad_resolutions_rejected(bad):
    with pytest.raises(ValueError):
        check_resolutions(bad)


def test_eval_grid_must_be_twice_finest():
    with pytest.raises(ValueError, match="twice"):
        run_ladder([16, 32], SolverConfig(), manufactured_problem(48))


def test_viscosity_mismatch_rejected():
    with pytest.raises(ValueError, match="viscosities"):
        run_ladder([8], SolverConfig(nu=0.02), manufactured_problem(32, nu=0.01))


def test_single_mode_ladder_is_exact():
    arch = run_ladder([8, 12], SolverConfig(), single_mode_problem(32))
    for rec in arch.records:
        assert rec.converged
        assert frac_norm(rec.omega - resample(arch.problem.omega, rec.grid), 0) <= 1e-9


def test_archive_roundtrip_and_resume(tmp_path):
    cfg = SolverConfig()
    prob = manufactured_problem(48)
    arch = run_ladder([12, 16, 18], cfg, prob, tmp_path / "a")
    loaded = load_archive(tmp_path / "a")
    assert loaded.resolutions == [12, 16, 18] and loaded.complete
    for a, b in zip(arch.records, loaded.records):
        assert np.array_equal(a.omega.coef, b.omega.coef)
        assert a.residual_log == b.residual_log
    assert np.array_equal(loaded.problem.omega.coef, prob.omega.coef)
    manifest = (tmp_path / "a" / "manifest.json").read_bytes()
    again = run_ladder([12, 16, 18], cfg, prob, tmp_path / "a", resume=True)
    assert all(r.wall_time == loaded.record(r.grid.n).wall_time for r in again.records)
    assert (tmp_path / "a" / "manifest.json").read_bytes() == manifest


def test_resume_extends_partial_archive(tmp_path):
    cfg = SolverConfig()
    prob = manufactured_problem(48)
    run_ladder([12, 16], cfg, prob, tmp_path / "a")
    arch = run_ladder([12, 16, 18], cfg, prob, tmp_path / "a", resume=True)
    assert [r.grid.n for r in arch.records] == [12, 16, 18]


def test_resume_refuses_other_config(tmp_path):
    prob = manufactured_problem(48)
    run_ladder([12], SolverConfig(), prob, tmp_path / "a")
    with pytest.raises(ArchiveError):
        run_ladder([12], SolverConfig(dt=2e-3), prob, tmp_path / "a", resume=True)


def test_partial_archive_flagged(tmp_path):
    prob = manufactured_problem(48)
    arch = run_ladder([12, 16], SolverConfig(), prob)
    arch.complete = False
    arch.resolutions = [12, 16, 18]
    save_archive(arch, tmp_path / "p")
    m = json.loads((tmp_path / "p" / "manifest.json").read_text())
    assert m["complete"] is False
    assert not load_archive(tmp_path / "p").complete


def test_missing_level_file(tmp_path):
    prob = manufactured_problem(48)
    run_ladder([12, 16], SolverConfig(), prob, tmp_path / "a")
    (tmp_path / "a" / "levels" / "n0016.bin").unlink()
    with pytest.raises(ArchiveError, match="n0016"):
        load_archive(tmp_path / "a")


def test_manifest_is_deterministic(tmp_path):
    prob = manufactured_problem(48)
    run_ladder([12, 16], SolverConfig(), prob, tmp_path / "a")
    run_ladder([12, 16], SolverConfig(), prob, tmp_path / "b")
    for rel in ("manifest.json", "levels/n0012.bin", "levels/n0016.bin", "reference/g.bin"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_synthetic_archive_projects_levels():
    prob = manufactured_problem(64)
    arch = synthetic_archive([8, 16], prob, [prob.omega, prob.omega])
    assert arch.records[0].grid == WaveGrid.square(8)
    assert arch.records[1].omega.grid.h == 8
