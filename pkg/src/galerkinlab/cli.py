"""Command-line entry point: ``galerkinlab <mode> [--config FILE] [--out DIR] [--resume]``.

Numeric settings live in the config file (see :mod:`galerkinlab.config`);
flags only name paths, the mode and resumption.  ``GALERKINLAB_OUTPUT_ROOT``
prefixes relative output directories.

Exit codes: 0 success, 3 configuration error, 4 numerical blow-up,
5 missing or incomplete artifact, 6 output not writable.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coeffio import write_stack
from .config import ConfigError, ExperimentConfig, MODES, load_config
from .diagnostics import (
    bundle,
    comparability_for,
    compute_table,
    relation_residual_first_method,
    relation_residual_second_method,
    theorem_case_dispatch,
)
from .expansion import (
    all_passed,
    builtin_forcing,
    default_example3_resolutions,
    example3_compare,
    extract,
    verify_report,
    write_report,
)
from .fractional_time import (
    HGammaParams,
    heat_decay_tail_l2,
    heat_decay_trajectory,
    hgamma_norm,
    l2_time_norm,
    transient_expansion,
)
from .ladder import ArchiveError, LadderArchive, load_archive, make_problem, run_ladder
from .solver import manufactured_vorticity, run_transient
from .spectral import SpectralField, WaveGrid, lambda_cut

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_MISSING, EXIT_IO = 0, 3, 4, 5, 6
OUTPUT_ROOT_ENV = "GALERKINLAB_OUTPUT_ROOT"

log = logging.getLogger("galerkinlab")


class BlowUp(RuntimeError):
    pass


def resolve_out(out: str | Path) -> Path:
    p = Path(out)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return Path(root) / p if root and not p.is_absolute() else p


def _prepare_out(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise PermissionError(f"output directory {path} is not writable: {exc}") from exc
    return path


def _write(path: Path, text: str) -> None:
    path.write_text(text if text.endswith("\n") else text + "\n")


def _load_levels(path: str | Path, minimum: int = 3) -> LadderArchive:
    arch = load_archive(path).sorted()
    if len(arch.records) < minimum:
        raise ArchiveError(f"archive {path} has {len(arch.records)} level(s); need at least {minimum}")
    return arch


# ------------------------------------------------------------------ modes


def cmd_ladder(cfg: ExperimentConfig, out: Path, resume: bool = False) -> LadderArchive:
    problem = make_problem(cfg.problem, cfg.eval_n, cfg.solver.nu, cfg.solver.dealias)
    _prepare_out(out)
    arch = run_ladder(cfg.resolutions, cfg.solver, problem, out, resume=resume)
    bad = [r.grid.n for r in arch.records if r.blown_up]
    if bad:
        raise BlowUp(f"steady solve blew up at n={bad}; partial archive kept in {out}")
    return arch


def cmd_diagnose(cfg: ExperimentConfig, archive: str | Path, out: Path) -> dict:
    arch = _load_levels(archive)
    d = cfg.diagnostics
    table = compute_table(arch, d.alphas, d.b_mode)
    comp = comparability_for(table, cfg.thresholds)
    first = relation_residual_first_method(arch, table)
    dispatch = theorem_case_dispatch(table, comp, first, cfg.thresholds.min_confidence)
    report = extract([r.omega for r in arch.records], cfg.expansion_options(cfg.scales[0]),
                     limit=arch.problem.omega, labels=table.lambda_cut)
    second = relation_residual_second_method(arch, report, d.beta)
    _prepare_out(out)
    _write(out / "conv.csv", table.conv_csv())
    _write(out / "alphastar.csv", table.alphastar_csv())
    if comp is not None:
        _write(out / "comparability.csv", comp.to_csv())
    data = json.loads(bundle(arch, table, comp, first, dispatch))
    data["second_method"] = second.to_dict()
    _write(out / "diagnostics.json", json.dumps(data, indent=2, sort_keys=True, default=float))
    return data


def cmd_expand(cfg: ExperimentConfig, archive: str | Path, out: Path) -> list:
    arch = _load_levels(archive)
    labels = [lambda_cut(g) for g in arch.grids]
    _prepare_out(out)
    results = []
    for i, exps in enumerate(cfg.scales):
        opts = cfg.expansion_options(exps)
        limit = arch.problem.omega if opts.limit_mode == "reference" else None
        report = extract([r.omega for r in arch.records], opts, limit=limit, labels=labels)
        report.conditions = verify_report(report)
        write_report(report, out, f"expansion_s{i}")
        results.append(report)
        log.info("scale %s: %s, %d term(s), conditions %s", exps, report.classification, len(report.terms),
                 "pass" if all_passed(report.conditions) else "FAIL")
    return results


def _initial(name: str, grid: WaveGrid) -> SpectralField:
    if name == "manufactured":
        return manufactured_vorticity(grid)
    if name == "single-mode":
        return SpectralField.from_modes(grid, {(1, 0): 0.5})
    return SpectralField.zeros(grid)


def cmd_timedep(cfg: ExperimentConfig, out: Path) -> dict:
    td, sc = cfg.timedep, cfg.solver
    stride = round(td.sample_dt / sc.dt)
    if stride < 1 or not math.isclose(stride * sc.dt, td.sample_dt, rel_tol=1e-12):
        raise ConfigError("timedep.sample_dt must be a positive multiple of solver.dt")
    E = WaveGrid.square(cfg.eval_n)
    u0 = _initial(td.initial, E)
    g = None
    if td.forcing == "reference":
        g = make_problem(cfg.problem, cfg.eval_n, sc.nu, sc.dealias).g
    heat = g is None and sc.nonlinear_mode == "none"
    _prepare_out(out)
    (out / "trajectories").mkdir(exist_ok=True)
    trajs = []
    for n in cfg.resolutions:
        tr = run_transient(WaveGrid.square(n), u0, g, td.T, sc, stride)
        write_stack(out / "trajectories" / f"n{n:04d}.bin", tr.grid, tr.coefs)
        if tr.blown_up:
            raise BlowUp(f"transient run at n={n} blew up: {tr.note}")
        trajs.append(tr)
    if heat:
        ref = heat_decay_trajectory(u0, sc.nu, td.T, td.sample_dt, E)
        ref_kind = "closed-form heat decay"
    else:
        ref = run_transient(E, u0, g, td.T, sc, stride)
        if ref.blown_up:
            raise BlowUp(f"reference run blew up: {ref.note}")
        ref_kind = f"solver run at n={cfg.eval_n}"
    write_stack(out / "trajectories" / "reference.bin", ref.grid, ref.coefs)
    params = HGammaParams(td.gamma, td.alpha_x, td.pad, "exact" if td.gamma < 0.5 else "dft", offset=-0.5)
    rows = []
    for tr in trajs:
        diff = tr.resampled(E) - ref
        row = {"n": tr.grid.n, "lambda_cut": lambda_cut(tr.grid),
               "Gamma1_L2H": l2_time_norm(diff, -0.5), "Gamma1_Hgamma": hgamma_norm(diff, params)}
        if heat:
            closed = heat_decay_trajectory(u0, sc.nu, td.T, td.sample_dt, tr.grid)
            row["solver_vs_closed_form"] = l2_time_norm(tr - closed, -0.5) / max(l2_time_norm(closed, -0.5), 1e-300)
            row["Gamma1_L2H_analytic"] = heat_decay_tail_l2(u0, tr.grid, sc.nu, td.T)
        rows.append(row)
    head = list(rows[0])
    lines = [",".join(head)] + [",".join(repr(float(r[k])) if k != "n" else str(r[k]) for k in head) for r in rows]
    _write(out / "timedep.csv", "\n".join(lines))
    summary = {"reference": ref_kind, "gamma": td.gamma, "method": params.method, "rows": rows}
    if any(r["Gamma1_L2H"] > 0 for r in rows) and len(trajs) >= 3:
        opts = cfg.expansion_options(cfg.scales[0])
        report = transient_expansion(trajs, ref, opts, norm=td.norm, gamma=td.gamma)
        report.conditions = verify_report(report)
        write_report(report, out, "transient_expansion")
        summary["classification"] = report.classification
    else:
        summary["classification"] = "trivial"
    _write(out / "timedep.json", json.dumps(summary, indent=2, sort_keys=True))
    return summary


def cmd_example3(cfg: ExperimentConfig, out: Path) -> dict:
    ex = cfg.example3
    g = builtin_forcing(ex.forcing, cfg.eval_n, cfg.solver.nu)
    res = list(ex.resolutions) if ex.resolutions else default_example3_resolutions(ex.forcing)
    table, report, diff = example3_compare(g, ex.exponents, res)
    _prepare_out(out)
    _write(out / "example3.csv", table.to_csv(diff))
    write_report(report, out, "example3_expansion")
    notes = []
    if not table.hypothesis_ok.all():
        bad = [n for n, ok in zip(table.resolutions, table.hypothesis_ok) if not ok]
        notes.append(f"hypothesis violated: Q_n g = 0 at n={bad}")
    with np.errstate(invalid="ignore"):
        worst = float(np.nanmax(diff)) if np.isfinite(diff).any() else 0.0
    summary = {"forcing": ex.forcing, "exponents": list(table.exponents), "resolutions": table.resolutions,
               "bound_ok": table.bound_ok, "max_engine_reldiff": worst,
               "classification": report.classification, "notes": notes + report.notes}
    _write(out / "example3.json", json.dumps(summary, indent=2, sort_keys=True))
    return summary


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="galerkinlab", description="Galerkin convergence experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        s = sub.add_parser(mode)
        s.add_argument("--config", help="experiment config file")
        s.add_argument("--out", help="output directory (overrides experiment.out)")
        s.add_argument("-v", "--verbose", action="store_true")
        if mode == "ladder":
            s.add_argument("--resume", action="store_true", help="reuse converged levels of an existing archive")
        if mode in ("diagnose", "expand"):
            s.add_argument("--archive", help="ladder archive directory (overrides experiment.archive)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    if args.out:
        overrides["out"] = args.out
    if getattr(args, "archive", None):
        overrides["archive"] = args.archive
    try:
        if args.config:
            cfg = load_config(args.config, overrides, defaults={"mode": args.mode})
        else:
            cfg = ExperimentConfig(mode=args.mode, **overrides)
        if cfg.mode != args.mode:
            raise ConfigError(f"config mode {cfg.mode!r} does not match subcommand {args.mode!r}")
        out = resolve_out(cfg.out)
        if args.mode == "ladder":
            arch = cmd_ladder(cfg, out, args.resume)
            print(f"ladder archive with {len(arch.records)} level(s) written to {out}")
        elif args.mode == "diagnose":
            data = cmd_diagnose(cfg, cfg.archive, out)
            print(f"dispatch: {data['dispatch']['case']}; outputs in {out}")
        elif args.mode == "expand":
            reports = cmd_expand(cfg, cfg.archive, out)
            print("; ".join(f"scale {i}: {r.classification}" for i, r in enumerate(reports)) + f"; outputs in {out}")
        elif args.mode == "timedep":
            s = cmd_timedep(cfg, out)
            print(f"timedep: {s['classification']}; outputs in {out}")
        else:
            s = cmd_example3(cfg, out)
            print(f"example3 {s['forcing']}: bound_ok={s['bound_ok']}; outputs in {out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUp as exc:
        print(f"numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except ArchiveError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except PermissionError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
