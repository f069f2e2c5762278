"""Resolution ladders of steady Galerkin states and their on-disk archives.

Archive directory layout::

    manifest.json              configuration, config hash, per-level metadata
    timings.json               wall-clock times (kept out of the manifest)
    levels/n0032.bin           converged vorticity, coefficient-file format
    levels/n0032_residuals.csv step,residual trace of the steady solve
    reference/omega.bin        limit field on the evaluation grid (if known)
    reference/g.bin            forcing on the evaluation grid
    reference/btilde.bin       u·∇ω of the limit on the evaluation grid
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coeffio import read_field, write_field
from .solver import (
    SolverConfig,
    SteadyStateRecord,
    compute_forcing,
    manufactured_vorticity,
    nonlinear_term,
    run_to_steady,
)
from .spectral import SpectralField, WaveGrid, resample

log = logging.getLogger(__name__)

DESK_LADDER = (32, 36, 48, 54, 64, 72, 96, 108, 128, 144, 192, 216, 256)
MANIFEST = "manifest.json"


class ArchiveError(RuntimeError):
    """Archive missing, stale or incomplete."""


def is_2p3q(n: int) -> bool:
    if n < 1:
        return False
    for p in (2, 3):
        while n % p == 0:
            n //= p
    return n == 1


def check_resolutions(resolutions) -> list[int]:
    res = [int(r) for r in resolutions]
    if not res:
        raise ValueError("empty resolution ladder")
    for r in res:
        if r % 2 or not is_2p3q(r):
            raise ValueError(f"resolution {r} is not an even number of the form 2^p 3^q")
    if any(b <= a for a, b in zip(res, res[1:])):
        raise ValueError(f"resolutions must be strictly increasing: {res}")
    return res


@dataclass(eq=False)
class Problem:
    """Forcing (and, when known, the limit state) on a fine evaluation grid."""

    name: str
    nu: float
    g: SpectralField
    omega: SpectralField | None = None
    btilde: SpectralField | None = None
    params: dict = field(default_factory=dict)

    @property
    def eval_grid(self) -> WaveGrid:
        return self.g.grid


def manufactured_problem(eval_n: int, nu: float = 0.01, dealias: str = "two-thirds") -> Problem:
    grid = WaveGrid.square(eval_n)
    omega = manufactured_vorticity(grid)
    bt = nonlinear_term(omega, "projected", dealias)
    g = omega.with_coef(nu * grid.ksq * omega.coef) + bt
    return Problem("manufactured", nu, g, omega, bt, {"eval_n": eval_n, "dealias": dealias})


def single_mode_problem(eval_n: int, nu: float = 0.01) -> Problem:
    grid = WaveGrid.square(eval_n)
    omega = SpectralField.from_modes(grid, {(1, 0): 0.5})
    return Problem("single-mode", nu, omega * nu, omega, SpectralField.zeros(grid), {"eval_n": eval_n})


def problem_from_vorticity(name: str, omega: SpectralField, nu: float, dealias: str = "two-thirds") -> Problem:
    bt = nonlinear_term(omega, "projected", dealias)
    return Problem(name, nu, compute_forcing(omega, nu, dealias), omega, bt, {"eval_n": omega.grid.n})


PROBLEMS = {"manufactured": manufactured_problem, "single-mode": single_mode_problem}


def make_problem(name: str, eval_n: int, nu: float, dealias: str = "two-thirds") -> Problem:
    if name == "manufactured":
        return manufactured_problem(eval_n, nu, dealias)
    if name == "single-mode":
        return single_mode_problem(eval_n, nu)
    raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")


@dataclass(eq=False)
class LadderArchive:
    resolutions: list[int]
    records: list[SteadyStateRecord]
    problem: Problem
    config: SolverConfig
    path: Path | None = None
    complete: bool = True

    @property
    def grids(self) -> list[WaveGrid]:
        return [r.grid for r in self.records]

    def omegas(self) -> list[SpectralField]:
        return [r.omega for r in self.records]

    def record(self, n: int) -> SteadyStateRecord:
        for r in self.records:
            if r.grid.n == n:
                return r
        raise KeyError(n)

    def sorted(self) -> "LadderArchive":
        order = np.argsort([r.grid.n for r in self.records], kind="stable")
        recs = [self.records[i] for i in order]
        return LadderArchive([r.grid.n for r in recs], recs, self.problem, self.config, self.path, self.complete)


def config_hash(config: SolverConfig, problem: Problem, resolutions) -> str:
    payload = {"config": asdict(config), "problem": problem.name, "params": problem.params,
               "nu": problem.nu, "resolutions": list(resolutions)}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def run_ladder(resolutions, config: SolverConfig, problem: Problem,
               archive_dir: str | Path | None = None, resume: bool = False) -> LadderArchive:
    """Solve each level to steady state, warm-starting from the previous level.

    The first level starts from zero.  With ``archive_dir`` the archive is
    written after every level, so an interrupted run leaves a valid partial
    archive; ``resume`` reuses converged levels of a matching archive.
    """
    res = check_resolutions(resolutions)
    eval_grid = problem.eval_grid
    if eval_grid.h < 2 * WaveGrid.square(res[-1]).h:
        raise ValueError(f"evaluation grid {eval_grid.n} must be at least twice the finest level {res[-1]}")
    if abs(problem.nu - config.nu) > 1e-15 * config.nu:
        raise ValueError("problem and solver viscosities differ")
    previous: dict[int, SteadyStateRecord] = {}
    path = Path(archive_dir) if archive_dir is not None else None
    if path is not None and resume and (path / MANIFEST).exists():
        old = load_archive(path)
        if config_hash(old.config, old.problem, old.resolutions) != config_hash(config, problem, old.resolutions) \
                or old.resolutions != res[: len(old.resolutions)]:
            raise ArchiveError("existing archive was produced by a different configuration")
        previous = {r.grid.n: r for r in old.records if r.converged}
    records: list[SteadyStateRecord] = []
    start = None
    for n in res:
        grid = WaveGrid.square(n)
        if n in previous:
            rec = previous[n]
            log.info("level n=%d reused from archive", n)
        else:
            rec = run_to_steady(grid, problem.g, config, start)
            log.info("level n=%d converged=%s residual=%.2e steps=%d newton=%d (%.1fs)", n, rec.converged,
                     rec.residual, rec.steps, rec.newton_iterations, rec.wall_time)
        records.append(rec)
        start = rec.omega
        if path is not None:
            save_archive(LadderArchive(res, records, problem, config, path, complete=len(records) == len(res)), path)
    return LadderArchive(res, records, problem, config, path, complete=True)


# ------------------------------------------------------------ persistence


def _level_name(n: int) -> str:
    return f"n{n:04d}"


def save_archive(archive: LadderArchive, path: str | Path) -> None:
    path = Path(path)
    try:
        (path / "levels").mkdir(parents=True, exist_ok=True)
        (path / "reference").mkdir(exist_ok=True)
    except OSError as exc:
        raise ArchiveError(f"cannot create archive directory {path}: {exc}") from exc
    prob = archive.problem
    ref = {}
    for key in ("omega", "g", "btilde"):
        f = getattr(prob, key)
        if f is not None:
            write_field(path / "reference" / f"{key}.bin", f)
            ref[key] = f"reference/{key}.bin"
        else:
            ref[key] = None
    levels = []
    timings = {}
    for rec in archive.records:
        name = _level_name(rec.grid.n)
        write_field(path / "levels" / f"{name}.bin", rec.omega)
        with open(path / "levels" / f"{name}_residuals.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "residual"])
            for step, r in rec.residual_log:
                w.writerow([step, repr(float(r))])
        levels.append({
            "n": rec.grid.n, "file": f"levels/{name}.bin", "residual_log": f"levels/{name}_residuals.csv",
            "converged": rec.converged, "residual": rec.residual, "equation_residual": rec.equation_residual,
            "steps": rec.steps, "newton_iterations": rec.newton_iterations, "method": rec.method,
            "energy_bound_ok": rec.energy_bound_ok, "note": rec.note,
        })
        timings[str(rec.grid.n)] = rec.wall_time
    manifest = {
        "format": "galerkinlab-ladder",
        "version": 1,
        "code_version": __version__,
        "config": asdict(archive.config),
        "config_hash": config_hash(archive.config, prob, archive.resolutions),
        "problem": {"name": prob.name, "nu": prob.nu, "params": prob.params, "eval_n": prob.eval_grid.n},
        "resolutions": archive.resolutions,
        "complete": archive.complete and len(archive.records) == len(archive.resolutions),
        "reference": ref,
        "levels": levels,
    }
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (path / "timings.json").write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")


def load_archive(path: str | Path) -> LadderArchive:
    path = Path(path)
    mf = path / MANIFEST
    if not mf.exists():
        raise ArchiveError(f"no manifest at {mf}")
    manifest = json.loads(mf.read_text())
    if manifest.get("format") != "galerkinlab-ladder":
        raise ArchiveError(f"{mf} is not a ladder manifest")
    config = SolverConfig(**manifest["config"])
    ref = manifest["reference"]

    def _ref(key):
        rel = ref.get(key)
        if rel is None:
            return None
        p = path / rel
        if not p.exists():
            raise ArchiveError(f"missing reference artifact {rel}")
        return read_field(p)

    g = _ref("g")
    if g is None:
        raise ArchiveError("archive has no reference forcing g")
    pm = manifest["problem"]
    problem = Problem(pm["name"], pm["nu"], g, _ref("omega"), _ref("btilde"), pm.get("params", {}))
    timings = {}
    if (path / "timings.json").exists():
        timings = json.loads((path / "timings.json").read_text())
    records = []
    for lv in manifest["levels"]:
        p = path / lv["file"]
        if not p.exists():
            raise ArchiveError(f"missing level file {lv['file']}")
        omega = read_field(p)
        rlog = []
        lp = path / lv["residual_log"]
        if lp.exists():
            with open(lp) as fh:
                rows = list(csv.reader(fh))[1:]
                rlog = [(int(a), float(b)) for a, b in rows]
        records.append(SteadyStateRecord(
            grid=omega.grid, omega=omega, residual=lv["residual"], equation_residual=lv["equation_residual"],
            steps=lv["steps"], wall_time=timings.get(str(lv["n"]), 0.0), converged=lv["converged"],
            method=lv["method"], newton_iterations=lv["newton_iterations"],
            energy_bound_ok=lv["energy_bound_ok"], residual_log=rlog, note=lv.get("note", ""),
        ))
    return LadderArchive(manifest["resolutions"], records, problem, config, path, bool(manifest["complete"]))


def synthetic_archive(resolutions, problem: Problem, omegas, config: SolverConfig | None = None) -> LadderArchive:
    """Archive built from given level fields (no solve); used for calibration ladders."""
    config = config or SolverConfig(nu=problem.nu)
    recs = []
    for n, w in zip(resolutions, omegas):
        grid = WaveGrid.square(n) if w.grid.shape == "square" and w.grid.n != n else w.grid
        recs.append(SteadyStateRecord(grid=grid, omega=resample(w, grid), residual=0.0, equation_residual=0.0,
                                      steps=0, wall_time=0.0, converged=True, method="synthetic"))
    return LadderArchive(list(resolutions), recs, problem, config)
