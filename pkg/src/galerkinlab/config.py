"""Experiment configuration files.

INI layout read with :mod:`configparser`; every value is JSON (bare words
are taken as strings), ``#`` starts a comment::

    [experiment]
    mode = ladder              # ladder | diagnose | expand | timedep | example3
    problem = manufactured     # manufactured | single-mode
    eval_n = 512
    resolutions = [32, 36, 48, 54, 64, 72, 96]
    out = runs/manufactured
    archive = runs/manufactured  # input archive for diagnose / expand

    [solver]                   # any SolverConfig field
    nu = 0.01
    dt = 1e-3

    [expansion]                # scale plus any ExpansionOptions field
    scales = [[1.0, 0.75, 0.5, 0.25]]

    [comparability]            # Thresholds fields
    [diagnostics]              # alphas, b_mode, beta
    [timedep]                  # T, sample_dt, initial, forcing, norm, gamma, pad
    [example3]                 # forcing, exponents, resolutions
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .comparability import Thresholds
from .expansion import BUILTIN_FORCINGS, ExpansionOptions
from .ladder import DESK_LADDER, PROBLEMS, check_resolutions
from .solver import SolverConfig
from .spectral import SobolevScale, WaveGrid

MODES = ("ladder", "diagnose", "expand", "timedep", "example3")
SECTIONS = ("experiment", "solver", "expansion", "comparability", "diagnostics", "timedep", "example3")


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


@dataclass
class TimedepConfig:
    T: float = 1.0
    sample_dt: float = 0.01
    initial: str = "manufactured"  # manufactured | zero | single-mode
    forcing: str = "none"  # none | reference
    norm: str = "l2"  # l2 | hgamma
    gamma: float = 0.2
    pad: int = 4
    alpha_x: float = 0.0


@dataclass
class DiagnosticsConfig:
    alphas: tuple = (0.25, 0.5, 0.75, 1.0)
    b_mode: str = "projected"
    beta: float = 0.0


@dataclass
class Example3Config:
    forcing: str = "algebraic-tail"
    exponents: tuple = (1.0, 0.75, 0.5)
    resolutions: tuple | None = None


@dataclass
class ExperimentConfig:
    mode: str
    problem: str = "manufactured"
    eval_n: int = 512
    resolutions: tuple = DESK_LADDER[:6]
    out: str = "runs/out"
    archive: str | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    scales: tuple = ((1.0, 0.75, 0.5, 0.25),)
    expansion: dict = field(default_factory=dict)
    thresholds: Thresholds = field(default_factory=Thresholds)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    timedep: TimedepConfig = field(default_factory=TimedepConfig)
    example3: Example3Config = field(default_factory=Example3Config)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        try:
            self.resolutions = tuple(check_resolutions(self.resolutions))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.mode in ("ladder", "timedep"):
            if self.problem not in PROBLEMS:
                raise ConfigError(f"unknown problem {self.problem!r}")
            if WaveGrid.square(self.eval_n).h < 2 * WaveGrid.square(self.resolutions[-1]).h:
                raise ConfigError(f"eval_n={self.eval_n} must be at least twice the finest level {self.resolutions[-1]}")
        if self.mode in ("diagnose", "expand") and not self.archive:
            raise ConfigError(f"mode {self.mode!r} needs experiment.archive")
        if self.mode == "example3" and self.example3.forcing not in BUILTIN_FORCINGS:
            raise ConfigError(f"unknown example3 forcing {self.example3.forcing!r}; choose from {BUILTIN_FORCINGS}")
        if self.timedep.norm not in ("l2", "hgamma"):
            raise ConfigError("timedep.norm must be 'l2' or 'hgamma'")
        if self.timedep.initial not in ("manufactured", "zero", "single-mode"):
            raise ConfigError(f"unknown timedep.initial {self.timedep.initial!r}")
        if self.timedep.forcing not in ("none", "reference"):
            raise ConfigError(f"unknown timedep.forcing {self.timedep.forcing!r}")
        if self.diagnostics.b_mode not in ("projected", "raw"):
            raise ConfigError("diagnostics.b_mode must be 'projected' or 'raw'")
        for s in self.scales:
            self.scale_objects(s)
        self.expansion_options(self.scales[0])

    @staticmethod
    def scale_objects(exponents) -> SobolevScale:
        try:
            return SobolevScale(tuple(exponents))
        except ValueError as exc:
            raise ConfigError(f"bad scale {exponents}: {exc}") from exc

    def expansion_options(self, exponents) -> ExpansionOptions:
        try:
            return ExpansionOptions(scale=self.scale_objects(exponents), **self.expansion)
        except TypeError as exc:
            raise ConfigError(f"unknown expansion option: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _build(cls, values: dict, section: str):
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    try:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def parse_config(text: str, overrides: dict | None = None, defaults: dict | None = None) -> ExperimentConfig:
    """Parse INI text; ``defaults`` fill missing [experiment] keys, ``overrides`` replace them."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                   interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    extra = set(cp.sections()) - set(SECTIONS)
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
    sec = {s: {k: _value(v) for k, v in cp[s].items()} if cp.has_section(s) else {} for s in SECTIONS}
    exp = dict(defaults or {})
    exp.update(sec["experiment"])
    exp.update(overrides or {})
    if "mode" not in exp:
        raise ConfigError("experiment.mode is required")
    known = {"mode", "problem", "eval_n", "resolutions", "out", "archive"}
    unknown = set(exp) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [experiment]: {', '.join(sorted(unknown))}")
    exp_kw = {k: v for k, v in exp.items() if k != "resolutions"}
    if "resolutions" in exp:
        exp_kw["resolutions"] = tuple(exp["resolutions"])
    ex = dict(sec["expansion"])
    scales = ex.pop("scales", None)
    if "scale" in ex:
        scales = [ex.pop("scale")]
    if scales is not None:
        if not scales or not all(isinstance(s, list) for s in scales):
            raise ConfigError("expansion.scales must be a list of exponent lists")
        exp_kw["scales"] = tuple(tuple(s) for s in scales)
    try:
        return ExperimentConfig(
            solver=_build(SolverConfig, sec["solver"], "solver"),
            expansion=ex,
            thresholds=_build(Thresholds, sec["comparability"], "comparability"),
            diagnostics=_build(DiagnosticsConfig, sec["diagnostics"], "diagnostics"),
            timedep=_build(TimedepConfig, sec["timedep"], "timedep"),
            example3=_build(Example3Config, sec["example3"], "example3"),
            **exp_kw,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, overrides: dict | None = None, defaults: dict | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, overrides, defaults)
