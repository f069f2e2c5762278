"""Intrinsic expansions of finite convergent sequences.

Given elements ``v_n`` converging to ``v`` in a nested scale of weighted
norms ``Z_0 ⊂ Z_1 ⊂ …``, terms are peeled one at a time::

    r_{k,n} = v_n - v - Σ_{j<k} Γ_{j,n} w_j
    Γ_{k,n} = ‖r_{k,n}‖_{Z_{k-1}},   w_{k,n} = r_{k,n} / Γ_{k,n}

and ``w_k`` is an estimate of the limit of ``w_{k,n}`` in ``Z_k``.  Finite
data has no limits, so every estimate carries the window or model it came
from.

The engine works on plain coefficient arrays of any shape; spatial fields
and sampled trajectories differ only in their :class:`NormFamily`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .spectral import (
    TWO_PI,
    SobolevScale,
    SpectralField,
    WaveGrid,
    lambda_cut,
    project,
    resample,
)

LIMIT_MODES = ("reference", "finest", "extrapolated")
ESTIMATORS = ("extrapolated", "window")
TRIVIAL, FINITE, TRUNCATED, NONCONVERGENT = "trivial", "finite", "truncated", "nonconvergent"


# ------------------------------------------------------------------ norms


@dataclass(frozen=True, eq=False)
class NormFamily:
    """Weighted norms ``‖x‖_s = (Σ base·|k|^{4(s+offset)}·|x|²)^{1/2}``.

    ``base`` folds in the full-plane multiplicity, the (2π)² area factor and,
    for trajectories, the trapezoid weights in time.
    """

    base: np.ndarray
    ksq: np.ndarray
    offset: float = 0.0

    @classmethod
    def spatial(cls, grid: WaveGrid, offset: float = 0.0) -> "NormFamily":
        return cls(TWO_PI**2 * grid.weight, grid.ksq_safe, offset)

    @classmethod
    def space_time(cls, grid: WaveGrid, n_samples: int, sample_dt: float, offset: float = 0.0) -> "NormFamily":
        tw = np.full(n_samples, sample_dt)
        tw[[0, -1]] *= 0.5
        return cls(tw[:, None, None] * (TWO_PI**2 * grid.weight)[None], grid.ksq_safe[None], offset)

    def weights(self, s: float) -> np.ndarray:
        p = 2.0 * (s + self.offset)
        return self.base if p == 0 else self.base * self.ksq**p

    def norm(self, x: np.ndarray, s: float) -> float:
        return float(np.sqrt(np.sum(self.weights(s) * (x.real**2 + x.imag**2))))

    def norms(self, xs: np.ndarray, s: float) -> np.ndarray:
        w = self.weights(s)
        axes = tuple(range(1, xs.ndim))
        return np.sqrt(np.sum(w * (xs.real**2 + xs.imag**2), axis=axes))


# -------------------------------------------------------------- options


@dataclass(frozen=True)
class ExpansionOptions:
    """Knobs of the extraction.

    ``window`` is the number of trailing elements used by the window
    estimator and by the trend tests (default: half the sequence, at least 3).
    ``floor_rel`` sets the Γ floor relative to the largest Z_0 norm seen.
    """

    scale: SobolevScale = field(default_factory=SobolevScale.stepped)
    limit_mode: str = "reference"
    estimator: str = "extrapolated"
    max_terms: int = 4
    theta_deg: float = 0.1
    degenerate_slope: float = -0.1
    floor_rel: float = 1e-12
    window: int | None = None
    max_model_terms: int = 4
    model_tol: float = 1e-3
    norm_offset: float = 0.0

    def __post_init__(self):
        if self.limit_mode not in LIMIT_MODES:
            raise ValueError(f"limit_mode must be one of {LIMIT_MODES}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")
        if not 0.0 < self.theta_deg < 1.0:
            raise ValueError("theta_deg must lie in (0, 1)")
        if self.window is not None and self.window < 1:
            raise ValueError("window must be >= 1")
        if self.floor_rel <= 0:
            raise ValueError("floor_rel must be positive")


# ------------------------------------------------- power-law remainder model


@dataclass
class PowerModel:
    """``R_n ≈ C + Σ_j (λ_n/λ_0)^{-ρ_j} U_j`` fitted by variable projection."""

    exponents: np.ndarray
    vectors: np.ndarray
    constant: np.ndarray | None
    rel_residual: float


def _trend_slope(values: np.ndarray, labels: np.ndarray) -> float:
    """Least-squares slope of log(values) against log(labels)."""
    ok = values > 0
    if ok.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log(labels[ok]), np.log(values[ok]), 1)[0])


def fit_power_model(R: np.ndarray, labels: np.ndarray, weights: np.ndarray | None = None,
                    max_terms: int = 4, constant: bool = False) -> PowerModel | None:
    """Fit a sum of power laws in ``labels`` to the sequence ``R``.

    The number of terms grows while each extra term cuts the relative
    residual tenfold.  Returns None when no acceptable fit exists.
    """
    N = R.shape[0]
    shape = R.shape[1:]
    sw = np.ones(shape) if weights is None else np.sqrt(weights)
    B = (R * sw).reshape(N, -1)
    B = np.concatenate([B.real, B.imag], axis=1)
    U, s, Vt = np.linalg.svd(B, full_matrices=False)
    Y = U * s
    scale = np.linalg.norm(Y)
    if scale == 0:
        return None
    x = np.log(labels / labels[0])
    base = np.ones((N, 1)) if constant else np.zeros((N, 0))

    def design(rho):
        return np.hstack([base, np.exp(-np.outer(x, rho))])

    def resid(rho):
        X = design(rho)
        C, *_ = np.linalg.lstsq(X, Y, rcond=None)
        return (X @ C - Y).ravel()

    nr = np.linalg.norm(Y - Y[-1] if constant else Y, axis=1)
    ok = nr > 0
    r0 = -np.polyfit(x[ok], np.log(nr[ok]), 1)[0] if ok.sum() >= 2 else 1.0
    r0 = float(np.clip(r0, 0.05, 8.0))
    jmax = min(max_terms, (N - 1 - int(constant)) // 2)
    best = None
    for J in range(1, jmax + 1):
        starts = [[r0 + d * j for j in range(J)] for d in (0.25, 0.5, 1.0)]
        starts += [[r0 * (j + 1) for j in range(J)]]
        if J > 2:
            starts += [[r0, r0 + 0.5] + [r0 + 0.5 + d * j for j in range(1, J - 1)] for d in (0.5, 1.0)]
        fit = None
        for st in starts:
            try:
                o = least_squares(resid, st, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400 * J)
            except (ValueError, np.linalg.LinAlgError):
                continue
            if np.all(np.isfinite(o.x)) and (fit is None or o.cost < fit.cost):
                fit = o
        if fit is None:
            break
        rho = np.sort(fit.x)
        rel = float(np.sqrt(2 * fit.cost) / scale)
        if J > 1 and (np.min(np.diff(rho)) < 1e-3):
            break
        if best is not None and rel > 0.1 * best[1]:
            break
        best = (rho, rel)
        if rel < 1e-13:
            break
    if best is None:
        return None
    rho, rel = best
    X = design(rho)
    C, *_ = np.linalg.lstsq(X, Y, rcond=None)
    V = C @ Vt
    half = V.shape[1] // 2
    safe = np.where(sw > 0, sw, 1.0)
    V = ((V[:, :half] + 1j * V[:, half:]).reshape((-1,) + shape)) / safe
    V = np.where(sw > 0, V, 0.0)
    const = V[0] if constant else None
    vecs = V[1:] if constant else V
    return PowerModel(rho, vecs, const, rel)


# ------------------------------------------------------------ report types


@dataclass(eq=False)
class ExpansionTerm:
    k: int
    s_gamma: float
    s_limit: float
    gamma: np.ndarray
    limit: np.ndarray
    remainders: np.ndarray
    unit_norm: np.ndarray
    zk_norm: np.ndarray
    limit_distance: np.ndarray
    degenerate: bool
    estimator: str
    window: tuple[int, int]
    defined: np.ndarray
    model_exponents: tuple = ()
    model_residual: float | None = None
    ratio_supported: bool | None = None
    note: str = ""


@dataclass
class Condition:
    name: str
    passed: bool
    detail: str = ""
    slope: float | None = None


@dataclass(eq=False)
class ExpansionReport:
    limit: np.ndarray
    labels: np.ndarray
    terms: list[ExpansionTerm]
    classification: str
    K: int
    floor: float
    options: ExpansionOptions
    family: NormFamily
    sequence: np.ndarray
    grid: WaveGrid | None = None
    notes: list[str] = field(default_factory=list)
    conditions: list[Condition] = field(default_factory=list)

    def gammas(self) -> np.ndarray:
        if not self.terms:
            return np.zeros((0, len(self.labels)))
        return np.stack([t.gamma for t in self.terms])

    def w(self, k: int):
        """Limit vector ``w_k`` (a SpectralField when the report is spatial)."""
        arr = self.terms[k - 1].limit
        if self.grid is not None and arr.ndim == 2:
            return SpectralField(self.grid, arr)
        return arr

    @property
    def window_note(self) -> str:
        parts = [f"w_{t.k}: elements {t.window[0]}..{t.window[1] - 1} ({t.estimator})" for t in self.terms]
        return "uniqueness index not located from finite data; limits estimated from " + "; ".join(parts) \
            if parts else "no terms"

    def to_dict(self) -> dict:
        return {
            "classification": self.classification,
            "K": self.K,
            "floor": self.floor,
            "labels": self.labels.tolist(),
            "scale": list(self.options.scale.exponents),
            "options": _options_dict(self.options),
            "grid": None if self.grid is None else {"n": self.grid.n, "shape": self.grid.shape,
                                                    "bound": self.grid.bound},
            "window_note": self.window_note,
            "notes": list(self.notes),
            "terms": [
                {
                    "k": t.k, "s_gamma": t.s_gamma, "s_limit": t.s_limit,
                    "gamma": t.gamma.tolist(), "degenerate": t.degenerate, "estimator": t.estimator,
                    "window": list(t.window), "zk_norm": t.zk_norm.tolist(),
                    "limit_distance": t.limit_distance.tolist(),
                    "model_exponents": [float(r) for r in t.model_exponents],
                    "model_residual": t.model_residual, "ratio_supported": t.ratio_supported,
                    "limit_vector": f"w{t.k}.bin", "note": t.note,
                }
                for t in self.terms
            ],
            "conditions": [asdict(c) for c in self.conditions],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def gamma_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["index", "lambda_cut"] + [f"Gamma{t.k}" for t in self.terms])
        for i, lab in enumerate(self.labels):
            w.writerow([i, repr(float(lab))] + [repr(float(t.gamma[i])) for t in self.terms])
        return buf.getvalue()


def _options_dict(o: ExpansionOptions) -> dict:
    d = asdict(o)
    d["scale"] = list(o.scale.exponents)
    return d


def write_report(report: ExpansionReport, directory: str | Path, stem: str = "expansion") -> None:
    from .coeffio import write_field, write_stack

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{stem}.json").write_text(report.to_json() + "\n")
    (d / f"{stem}_gamma.csv").write_text(report.gamma_csv())
    if report.grid is None:
        return
    for t in report.terms:
        path = d / f"{stem}_w{t.k}.bin"
        if t.limit.ndim == 2:
            write_field(path, SpectralField(report.grid, t.limit))
        else:
            write_stack(path, report.grid, t.limit)


# ------------------------------------------------------------- extraction


def _window(n: int, options: ExpansionOptions) -> int:
    w = options.window if options.window is not None else max(3, math.ceil(n / 2))
    return max(1, min(w, n))


def _strictly_decreasing(x: np.ndarray, rtol: float = 1e-12) -> bool:
    return bool(len(x) >= 2 and np.all(np.diff(x) < -rtol * np.abs(x[:-1])))


def _is_degenerate(zk: np.ndarray, labels: np.ndarray, win: int, options: ExpansionOptions) -> bool:
    tail = zk[-max(win, 2):]
    lab = labels[-max(win, 2):]
    if not _strictly_decreasing(tail):
        return False
    return bool(tail[-1] < options.theta_deg or _trend_slope(tail, lab) <= options.degenerate_slope)


def extract(sequence: Sequence[SpectralField], options: ExpansionOptions | None = None,
            limit: SpectralField | None = None, labels=None) -> ExpansionReport:
    """Extract an expansion from spatial fields (resampled to a common grid).

    ``labels`` default to lambda_cut of each element's own grid.
    """
    options = options or ExpansionOptions()
    if len(sequence) == 0:
        raise ValueError("empty sequence")
    grids = [f.grid for f in sequence] + ([limit.grid] if limit is not None else [])
    common = max(grids, key=lambda g: g.h)
    if limit is not None and limit.grid.h < max(f.grid.h for f in sequence):
        raise ValueError("reference limit must live on a grid at least as fine as every element")
    if limit is not None:
        common = limit.grid
    arrays = np.stack([resample(f, common).coef for f in sequence])
    if labels is None:
        labels = [lambda_cut(f.grid) for f in sequence]
    lim = None if limit is None else limit.coef
    return extract_arrays(arrays, NormFamily.spatial(common, options.norm_offset), options,
                          limit=lim, labels=labels, grid=common)


def extract_arrays(arrays: np.ndarray, family: NormFamily, options: ExpansionOptions,
                   limit: np.ndarray | None = None, labels=None, grid: WaveGrid | None = None) -> ExpansionReport:
    arrays = np.asarray(arrays, dtype=complex)
    if arrays.shape[0] == 0:
        raise ValueError("empty sequence")
    if not np.all(np.isfinite(arrays)):
        raise ValueError("sequence contains NaN or Inf")
    N0 = arrays.shape[0]
    labels = np.arange(1, N0 + 1, dtype=float) if labels is None else np.asarray(labels, dtype=float)
    if labels.shape != (N0,) or np.any(labels <= 0) or np.any(np.diff(labels) <= 0):
        raise ValueError("labels must be positive and strictly increasing, one per element")
    notes: list[str] = []
    scale = options.scale
    mode = options.limit_mode
    if mode == "reference":
        if limit is None:
            raise ValueError("limit_mode 'reference' needs a limit")
        v = np.asarray(limit, dtype=complex)
    elif mode == "finest":
        if limit is not None:
            notes.append("supplied limit ignored: limit_mode is 'finest'")
        v = arrays[-1]
        arrays, labels = arrays[:-1], labels[:-1]
        notes.append("limit taken as the finest element, which is excluded from the peeled sequence")
    else:
        model = fit_power_model(arrays, labels, family.weights(scale[0]), options.max_model_terms, constant=True)
        if model is None:
            raise ValueError("could not extrapolate a limit from the sequence")
        v = model.constant
        notes.append(f"limit extrapolated by power-law model, exponents {np.round(model.exponents, 4).tolist()}, "
                     f"relative fit residual {model.rel_residual:.2e}")
    if arrays.shape[0] < 2 or (mode != "finest" and N0 < 3):
        raise ValueError("sequence too short for extraction (need at least 3 elements)")
    if v.shape != arrays.shape[1:]:
        raise ValueError("limit shape does not match the sequence")
    N = arrays.shape[0]
    ref = max(family.norm(v, scale[0]), float(np.max(family.norms(arrays, scale[0]))))
    floor = options.floor_rel * ref if ref > 0 else np.finfo(float).tiny
    win = _window(N, options)
    r = arrays - v
    terms: list[ExpansionTerm] = []
    classification, K = TRUNCATED, 0
    kmax = min(options.max_terms, len(scale) - 1)
    if kmax < 1:
        raise ValueError("scale needs at least two exponents")
    prev_gamma = None
    for k in range(1, kmax + 1):
        s_prev, s_k = scale[k - 1], scale[k]
        gam = family.norms(r, s_prev)
        defined = gam > floor
        if not defined.any():
            classification, K = (TRIVIAL, 0) if k == 1 else (FINITE, k - 1)
            break
        W = np.zeros_like(r)
        W[defined] = r[defined] / gam[defined].reshape((-1,) + (1,) * (r.ndim - 1))
        unit = family.norms(W, s_prev)
        zk = family.norms(W, s_k)
        if k == 1 and not gam[-1] < gam[0]:
            notes.append("Γ_1 does not decrease: the sequence is not converging to the limit")
            terms.append(ExpansionTerm(k, s_prev, s_k, gam, np.zeros_like(v), W, unit, zk, zk.copy(), False,
                                       "none", (N - win, N), defined, note="nonconvergent"))
            classification, K = NONCONVERGENT, 1
            break
        idx = np.flatnonzero(defined)
        degenerate = _is_degenerate(zk[idx], labels[idx], win, options)
        model_exp, model_res, est, note = (), None, options.estimator, ""
        if degenerate:
            wk = np.zeros_like(v)
            est = "degenerate"
        elif options.estimator == "extrapolated":
            model = fit_power_model(r[idx], labels[idx], family.weights(s_prev), options.max_model_terms)
            if model is not None and model.exponents[0] > 0 and model.rel_residual <= options.model_tol:
                lead = model.vectors[0]
                wk = lead / family.norm(lead, s_prev)
                model_exp, model_res = tuple(model.exponents), model.rel_residual
            else:
                wk = W[idx[-win:]].mean(axis=0)
                est = "window"
                note = "power-law model rejected; fell back to the trailing-window average"
        else:
            wk = W[idx[-win:]].mean(axis=0)
        dist = family.norms(W - wk, s_k)
        dist[~defined] = 0.0
        term = ExpansionTerm(k, s_prev, s_k, gam, wk, W, unit, zk, dist, degenerate, est,
                             (int(idx[-win:][0]), N), defined, model_exp, model_res, None, note)
        terms.append(term)
        K = k
        if prev_gamma is not None:
            both = defined & (prev_gamma > floor)
            ratio = gam[both] / prev_gamma[both]
            term.ratio_supported = bool(both.sum() >= 2 and ratio[-1] < ratio[0]
                                        and _trend_slope(ratio, labels[both]) < 0)
            if not term.ratio_supported:
                notes.append(f"Γ_{k}/Γ_{k-1} is not decreasing; peeling stopped")
                break
        prev_gamma = gam
        r = r - gam.reshape((-1,) + (1,) * (r.ndim - 1)) * wk
    else:
        gam = family.norms(r, scale[kmax])
        classification = FINITE if not np.any(gam > floor) else TRUNCATED
    if classification == TRUNCATED and K == kmax and kmax < options.max_terms:
        notes.append("scale exhausted before max_terms")
    return ExpansionReport(v, labels, terms, classification, K, floor, options, family, arrays, grid, notes)


# ---------------------------------------------------------- verification


@dataclass(frozen=True)
class VerifyTolerances:
    reconstruction: float = 1e-12
    unit: float = 1e-13


def verify_report(report: ExpansionReport, sequence=None, tolerances: VerifyTolerances | None = None) -> list[Condition]:
    """Re-check the expansion conditions numerically; also stored on the report."""
    tol = tolerances or VerifyTolerances()
    fam, scale, lab = report.family, report.options.scale, report.labels
    if sequence is None:
        seq = report.sequence
    elif isinstance(sequence, np.ndarray):
        seq = sequence
    else:
        target = report.grid
        seq = np.stack([resample(f, target).coef for f in sequence])
        if report.options.limit_mode == "finest":
            seq = seq[:-1]
    out: list[Condition] = []
    if report.classification == TRIVIAL:
        out.append(Condition("trivial", True, "every element equals the limit to the floor"))
        report.conditions = out
        return out
    if report.classification == NONCONVERGENT:
        out.append(Condition("gamma1_to_zero", False, "Γ_1 does not decrease"))
        report.conditions = out
        return out
    g1 = report.terms[0].gamma
    sl = _trend_slope(g1, lab)
    out.append(Condition("gamma1_to_zero", _strictly_decreasing(g1) and sl < 0,
                         "Γ_1 strictly decreasing with negative log-log trend", sl))
    for a, b in zip(report.terms, report.terms[1:]):
        both = (a.gamma > report.floor) & (b.gamma > report.floor)
        q = b.gamma[both] / a.gamma[both]
        s = _trend_slope(q, lab[both])
        out.append(Condition(f"ratio_{b.k}_{a.k}_to_zero", bool(len(q) >= 2 and q[-1] < q[0] and s < 0),
                             f"Γ_{b.k}/Γ_{a.k} trends to zero", s))
    for t in report.terms:
        d = t.limit_distance[t.defined] if not t.degenerate else t.zk_norm[t.defined]
        what = f"‖w_{t.k},n - w_{t.k}‖" if not t.degenerate else f"‖w_{t.k},n‖ (degenerate)"
        if np.all(d <= 1e-12 * max(1.0, float(np.max(t.unit_norm)))):
            out.append(Condition(f"w{t.k}_convergence", True, what + " vanishes identically"))
            continue
        s = _trend_slope(d, lab[t.defined])
        out.append(Condition(f"w{t.k}_convergence", bool(d[-1] < d[0] and s < 0), what + " decreasing", s))
    # reconstruction and unit remainders
    worst = 0.0
    partial = np.broadcast_to(report.limit, seq.shape).copy()
    for t in report.terms:
        g = t.gamma.reshape((-1,) + (1,) * (seq.ndim - 1))
        recon = partial + g * t.remainders
        err = fam.norms(seq - recon, scale[0]) / np.maximum(fam.norms(seq, scale[0]), np.finfo(float).tiny)
        worst = max(worst, float(np.max(err[t.defined])) if t.defined.any() else 0.0)
        partial = partial + g * t.limit
    out.append(Condition("reconstruction", worst <= tol.reconstruction, f"max relative error {worst:.2e}"))
    dev = max((float(np.max(np.abs(t.unit_norm[t.defined] - 1.0))) for t in report.terms if t.defined.any()),
              default=0.0)
    out.append(Condition("unit_remainders", dev <= tol.unit, f"max |‖w_k,n‖-1| = {dev:.2e}"))
    report.conditions = out
    return out


def all_passed(conditions: list[Condition]) -> bool:
    return all(c.passed for c in conditions)


# ------------------------------------------------------- projection example


@dataclass
class Example3Table:
    """Tail norms ``Γ̃_{k,n} = ‖Q_n g‖_{α_{k-1}}`` by direct summation."""

    resolutions: list[int]
    lambda_cut: np.ndarray
    exponents: tuple[float, ...]
    gamma: np.ndarray
    ratios: np.ndarray
    bounds: np.ndarray
    hypothesis_ok: np.ndarray

    @property
    def bound_ok(self) -> bool:
        ok = self.hypothesis_ok
        return bool(np.all(self.ratios[:, ok] <= self.bounds[:, ok]))

    def to_csv(self, engine: np.ndarray | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        L = len(self.exponents)
        head = ["n", "lambda_cut"] + [f"Gamma_tilde{k}" for k in range(1, L + 1)]
        head += [f"ratio{k + 1}_{k}" for k in range(1, L)] + [f"bound{k + 1}_{k}" for k in range(1, L)]
        if engine is not None:
            head += [f"engine_reldiff{k}" for k in range(1, engine.shape[0] + 1)]
        head.append("tail_nonzero")
        w.writerow(head)
        for j, n in enumerate(self.resolutions):
            row = [n, repr(float(self.lambda_cut[j]))] + [repr(float(x)) for x in self.gamma[:, j]]
            row += [repr(float(x)) for x in self.ratios[:, j]] + [repr(float(x)) for x in self.bounds[:, j]]
            if engine is not None:
                row += [repr(float(x)) for x in engine[:, j]]
            row.append(bool(self.hypothesis_ok[j]))
            w.writerow(row)
        return buf.getvalue()


def example3_oracle(g: SpectralField, exponents, resolutions) -> Example3Table:
    """Closed-form tail norms of ``g`` beyond square truncations at ``resolutions``."""
    exps = tuple(float(a) for a in (exponents.exponents if isinstance(exponents, SobolevScale) else exponents))
    res = [int(n) for n in resolutions]
    if g.grid.h <= max(n // 2 for n in res):
        raise ValueError("g must be resolved on a grid strictly finer than the largest resolution")
    grid = g.grid
    rows, cols = np.nonzero(grid.mask)
    k1 = rows - grid.h
    k2 = cols
    mult = np.where(k2 > 0, 2.0, 1.0)
    ksq = (k1**2 + k2**2).astype(float)
    amp2 = np.abs(g.coef[rows, cols]) ** 2
    gam = np.zeros((len(exps), len(res)))
    for j, n in enumerate(res):
        h = n // 2
        tail = (np.abs(k1) > h) | (k2 > h)
        for i, a in enumerate(exps):
            gam[i, j] = TWO_PI * math.sqrt(math.fsum(mult[tail] * ksq[tail] ** (2 * a) * amp2[tail]))
    lc = np.array([lambda_cut(WaveGrid.square(n)) for n in res])
    ok = gam[0] > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(ok, gam[1:] / np.where(ok, gam[:-1], 1.0), 0.0)
    bounds = np.stack([lc ** (exps[i + 1] - exps[i]) for i in range(len(exps) - 1)]) \
        if len(exps) > 1 else np.zeros((0, len(res)))
    return Example3Table(res, lc, exps, gam, ratios.reshape(len(exps) - 1, len(res)), bounds, ok)


def example3_compare(g: SpectralField, exponents, resolutions,
                     options: ExpansionOptions | None = None) -> tuple[Example3Table, ExpansionReport, np.ndarray]:
    """Run the engine on ``P_n g`` and compare its Γ to the closed form.

    Returns the oracle table, the engine report and relative differences
    (one row per engine term; NaN where the oracle vanishes).
    """
    table = example3_oracle(g, exponents, resolutions)
    scale = SobolevScale(table.exponents)
    opts = options or ExpansionOptions(scale=scale)
    if opts.scale != scale:
        raise ValueError("options.scale must match the exponents")
    seq = [project(g, WaveGrid.square(n)) for n in table.resolutions]
    report = extract(seq, opts, limit=g, labels=table.lambda_cut)
    K = len(report.terms)
    diff = np.full((K, len(table.resolutions)), np.nan)
    for i, t in enumerate(report.terms):
        o = table.gamma[i]
        nz = o > 0
        diff[i, nz] = np.abs(t.gamma[nz] - o[nz]) / o[nz]
    return table, report, diff


# ---------------------------------------------------------------- builtins


def builtin_forcing(name: str, eval_n: int = 512, nu: float = 0.01) -> SpectralField:
    """Named forcings: ``single-mode`` (cos 20x), ``algebraic-tail`` (|ĝ_k| = |k|^-3),
    ``manufactured-forcing``."""
    grid = WaveGrid.square(eval_n)
    if name == "single-mode":
        if grid.h < 20:
            raise ValueError("single-mode forcing needs half-width >= 20")
        return SpectralField.from_modes(grid, {(20, 0): 0.5})
    if name == "algebraic-tail":
        return SpectralField(grid, grid.mask * grid.ksq_safe**-1.5)
    if name == "manufactured-forcing":
        from .ladder import manufactured_problem

        return manufactured_problem(eval_n, nu).g
    raise ValueError(f"unknown forcing {name!r}")


BUILTIN_FORCINGS = ("single-mode", "algebraic-tail", "manufactured-forcing")


def default_example3_resolutions(name: str) -> list[int]:
    if name == "single-mode":
        return [8, 12, 16, 18, 24, 32, 36]
    return [32, 36, 48, 54, 64, 72, 96, 108, 128, 144, 192, 216, 256]
