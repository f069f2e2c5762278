"""Convergence diagnostics over a ladder archive.

Per level ``n`` (all norms are L² of vorticity unless stated)::

    Gamma1 = ‖ω_n - ω‖          rho1 = ‖b̃_n - b̃‖          Gn = ‖Q_n g‖
    rate products  ‖v_n - v‖_{D(A)} · lambda_cut(n)^{α*}
    En  = ‖ν A(ω_n - ω) + (b̃_n - b̃) + Q_n g‖ / Gamma1

where ``b̃ = u·∇ω`` and ``‖v‖_{D(A)}`` is the velocity D(A) norm, i.e. the
|k|² weighted norm of the vorticity.  Subtracting the continuum and Galerkin
steady equations shows that the numerator of En is exactly the Galerkin
steady residual when b̃_n is projected, so En·Gamma1 is bounded by the
solver tolerance.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .comparability import PREC, SIM, SUCC, ComparabilityTable, Thresholds, total_comparability
from .expansion import ExpansionReport
from .ladder import ArchiveError, LadderArchive
from .solver import Advection, nonlinear_term
from .spectral import SpectralField, complement, frac_norm, lambda_cut, resample

DEFAULT_ALPHAS = (0.25, 0.5, 0.75, 1.0)
# a sequence counts as identically zero below this fraction of its natural size
ZERO_RTOL = 1e-12
# level errors below this multiple of residual/ν are not resolved by the steady solve
SOLVER_FLOOR = 10.0


class MissingReferenceError(ArchiveError):
    """The archive lacks a reference field needed for diagnostics."""


def _require_reference(archive: LadderArchive):
    p = archive.problem
    missing = [name for name, f in (("omega", p.omega), ("btilde", p.btilde), ("g", p.g)) if f is None]
    if missing:
        raise MissingReferenceError(f"archive is missing reference field(s): {', '.join(missing)}")
    if not archive.records:
        raise ArchiveError("archive has no levels")


@dataclass
class DiagnosticsTable:
    resolutions: list[int]
    lambda_cut: np.ndarray
    gamma1: np.ndarray
    rho1: np.ndarray
    G: np.ndarray
    dA_error: np.ndarray
    alphas: tuple[float, ...]
    rate_products: np.ndarray
    residual: np.ndarray
    En: np.ndarray
    En_literal: np.ndarray
    converged: np.ndarray
    mu0: float | None
    mu00: float | None
    b_mode: str
    nu: float
    window: int
    notes: list[str] = field(default_factory=list)
    vanishing: dict = field(default_factory=dict)

    def vanishes(self, name: str) -> bool:
        """True if the named sequence is zero up to round-off at every level."""
        if name in self.vanishing:
            return bool(self.vanishing[name])
        return bool(np.all(getattr(self, {"Gamma1": "gamma1", "rho1": "rho1", "Gn": "G"}[name]) == 0))

    @property
    def q_rho(self) -> np.ndarray:
        return _safe_div(self.rho1, self.gamma1)

    @property
    def q_G(self) -> np.ndarray:
        return _safe_div(self.G, self.gamma1)

    def rate_slopes(self) -> dict[float, float]:
        """Log-log slope of each rate product against lambda_cut."""
        out = {}
        x = np.log(self.lambda_cut)
        for a, row in zip(self.alphas, self.rate_products):
            ok = row > 0
            out[a] = float(np.polyfit(x[ok], np.log(row[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
        return out

    def flattest_alpha(self) -> float:
        s = self.rate_slopes()
        return min(s, key=lambda a: abs(s[a]) if np.isfinite(s[a]) else np.inf)

    def conv_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["n", "lambda_cut", "Gamma1", "rho1", "Gn", "rho1_over_Gamma1", "Gn_over_Gamma1", "converged"])
        for i, n in enumerate(self.resolutions):
            w.writerow([n, _r(self.lambda_cut[i]), _r(self.gamma1[i]), _r(self.rho1[i]), _r(self.G[i]),
                        _r(self.q_rho[i]), _r(self.q_G[i]), bool(self.converged[i])])
        return buf.getvalue()

    def alphastar_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["n", "lambda_cut", "dA_error"] + [f"rate_product_alpha{a:g}" for a in self.alphas]
                   + ["En", "En_literal", "steady_residual"])
        for i, n in enumerate(self.resolutions):
            w.writerow([n, _r(self.lambda_cut[i]), _r(self.dA_error[i])]
                       + [_r(x) for x in self.rate_products[:, i]]
                       + [_r(self.En[i]), _r(self.En_literal[i]), _r(self.residual[i])])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "resolutions": self.resolutions, "lambda_cut": self.lambda_cut.tolist(),
            "Gamma1": self.gamma1.tolist(), "rho1": self.rho1.tolist(), "Gn": self.G.tolist(),
            "rho1_over_Gamma1": self.q_rho.tolist(), "Gn_over_Gamma1": self.q_G.tolist(),
            "dA_error": self.dA_error.tolist(), "alphas": list(self.alphas),
            "rate_products": self.rate_products.tolist(), "rate_slopes": {str(k): v for k, v in self.rate_slopes().items()},
            "flattest_alpha": self.flattest_alpha(), "En": self.En.tolist(), "En_literal": self.En_literal.tolist(),
            "steady_residual": self.residual.tolist(), "converged": self.converged.tolist(),
            "mu0": self.mu0, "mu00": self.mu00, "b_mode": self.b_mode, "nu": self.nu,
            "window": self.window, "notes": self.notes, "vanishing": self.vanishing,
        }


def _r(x) -> str:
    return repr(float(x))


def _safe_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.full_like(a, np.nan, dtype=float)
    ok = b > 0
    out[ok] = a[ok] / b[ok]
    return out


def _level_terms(archive: LadderArchive, rec, b_mode: str):
    """Level differences on the evaluation grid: ω_n - ω, b̃_n - b̃, Q_n g."""
    p = archive.problem
    E = p.eval_grid
    dw = resample(rec.omega, E) - p.omega
    bn = nonlinear_term(rec.omega, b_mode, archive.config.dealias)
    if bn.grid.h > E.h:
        raise ArchiveError("evaluation grid too coarse for the raw nonlinear term; need at least twice the level")
    db = resample(bn, E) - p.btilde
    qg = complement(p.g, rec.grid)
    return dw, db, qg


def _window(n: int, window: int | None) -> int:
    return max(1, min(n, window if window is not None else math.ceil(n / 2)))


def _geo_mean_tail(q: np.ndarray, m: int) -> float | None:
    t = q[-m:]
    t = t[np.isfinite(t) & (t > 0)]
    return float(np.exp(np.mean(np.log(t)))) if len(t) else None


def rate_product_slope(seq, labels, alpha: float) -> float:
    """Log-log slope of ``seq_n · labels_n^alpha``; zero iff seq decays like ``labels^-alpha``."""
    x = np.log(np.asarray(labels, dtype=float))
    y = np.log(np.asarray(seq, dtype=float)) + alpha * x
    return float(np.polyfit(x, y, 1)[0])


def compute_table(archive: LadderArchive, alphas=DEFAULT_ALPHAS, b_mode: str = "projected",
                  window: int | None = None) -> DiagnosticsTable:
    """Diagnostics for every level; levels are sorted by resolution first."""
    _require_reference(archive)
    if b_mode not in ("projected", "raw"):
        raise ValueError("b_mode must be 'projected' or 'raw'")
    archive = archive.sorted()
    nu = archive.problem.nu
    res, lc, g1, r1, G, dA, resid, En, Elit, conv, floor = ([] for _ in range(11))
    notes = []
    for rec in archive.records:
        dw, db, qg = _level_terms(archive, rec, b_mode)
        gam = frac_norm(dw, 0.0)
        num = frac_norm(dw.with_coef(nu * dw.grid.ksq * dw.coef) + db + qg, 0.0)
        lit = frac_norm(dw.with_coef(dw.grid.ksq * dw.coef) + db - qg, 0.0)
        res.append(rec.grid.n)
        lc.append(lambda_cut(rec.grid))
        g1.append(gam)
        r1.append(frac_norm(db, 0.0))
        G.append(frac_norm(qg, 0.0))
        dA.append(frac_norm(dw, 0.5))
        resid.append(num)
        En.append(num / gam if gam > 0 else 0.0 if num == 0 else np.inf)
        Elit.append(lit / gam if gam > 0 else 0.0 if lit == 0 else np.inf)
        conv.append(rec.converged)
        r_ss = max(rec.residual, rec.equation_residual)
        floor.append(SOLVER_FLOOR * r_ss / nu if np.isfinite(r_ss) else 0.0)
        if not rec.converged:
            notes.append(f"level {rec.grid.n} did not converge; included and flagged")
    g1, r1, G, lc = map(np.array, (g1, r1, G, lc))
    alphas = tuple(float(a) for a in alphas)
    dA = np.array(dA)
    rp = np.stack([dA * lc**a for a in alphas]) if alphas else np.zeros((0, len(res)))
    m = _window(len(res), window)
    mu0 = _geo_mean_tail(_safe_div(r1, g1), m)
    mu00 = _geo_mean_tail(_safe_div(G, g1), m)
    om, g = archive.problem.omega, archive.problem.g
    size_w = frac_norm(om, 0.0)
    sizes = {"Gamma1": size_w, "rho1": size_w * frac_norm(om, 0.5), "Gn": frac_norm(g, 0.0)}
    vanishing = {k: bool(np.all(v <= ZERO_RTOL * sizes[k]))
                 for k, v in (("Gamma1", g1), ("rho1", r1), ("Gn", G))}
    # a level that sits on the reference up to solver accuracy counts as exact
    vanishing["Gamma1"] = vanishing["Gamma1"] or bool(np.all(g1 <= np.maximum(ZERO_RTOL * size_w, floor)))
    if vanishing["rho1"]:
        notes.append("rho1 vanishes at every level (no nonlinear contribution)")
    if vanishing["Gamma1"]:
        notes.append("Gamma1 vanishes at every level (levels equal the reference)")
    return DiagnosticsTable(res, lc, g1, r1, G, dA, alphas, rp, np.array(resid), np.array(En), np.array(Elit),
                            np.array(conv), mu0, mu00, b_mode, nu, m, notes, vanishing)


# ---------------------------------------------------------- normalized vectors


@dataclass
class NormalizedVectors:
    resolutions: list[int]
    w: dict
    b: dict
    f: dict
    w_hat: SpectralField | None
    b_hat: SpectralField | None
    phi_hat: SpectralField | None
    window: int
    notes: list[str] = field(default_factory=list)


def normalized_vectors(archive: LadderArchive, table: DiagnosticsTable | None = None,
                       window: int | None = None) -> NormalizedVectors:
    """Unit vectors (ω_n-ω)/Γ, (b̃_n-b̃)/ρ, (P_n g - g)/G and their trailing-window means."""
    _require_reference(archive)
    archive = archive.sorted()
    table = table or compute_table(archive, (), window=window)
    w, b, f, notes = {}, {}, {}, []
    for i, rec in enumerate(archive.records):
        n = rec.grid.n
        dw, db, qg = _level_terms(archive, rec, table.b_mode)
        for store, vec, den, name in ((w, dw, table.gamma1[i], "Gamma1"), (b, db, table.rho1[i], "rho1"),
                                      (f, -qg, table.G[i], "Gn")):
            if den > 0:
                store[n] = vec / den
            else:
                notes.append(f"{name} = 0 at n={n}; vector skipped")
    m = _window(len(archive.records), window if window is not None else table.window)
    tail = archive.resolutions[-m:]

    def mean(store):
        items = [store[n] for n in tail if n in store]
        if not items:
            return None
        acc = items[0]
        for x in items[1:]:
            acc = acc + x
        return acc / len(items)

    return NormalizedVectors(list(archive.resolutions), w, b, f, mean(w), mean(b), mean(f), m, notes)


# ------------------------------------------------------------ first method


@dataclass
class FirstMethodResult:
    En: np.ndarray
    En_literal: np.ndarray
    numerator: np.ndarray
    limit_residual: float | None
    limit_residual_relative: float | None
    identity_bound: float
    identity_ok: bool
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"En": self.En.tolist(), "En_literal": self.En_literal.tolist(), "numerator": self.numerator.tolist(),
                "limit_residual": self.limit_residual, "limit_residual_relative": self.limit_residual_relative,
                "identity_bound": self.identity_bound, "identity_ok": self.identity_ok, "notes": self.notes}


IDENTITY_FACTOR = 10.0


def relation_residual_first_method(archive: LadderArchive, table: DiagnosticsTable,
                                   vectors: NormalizedVectors | None = None) -> FirstMethodResult:
    """E_n per level and the limit relation ``ν A ŵ₁ + μ̂₀ b̂₁ - μ̂₀₀ φ̂₁``.

    With projected b̃_n the numerator of E_n equals the Galerkin steady
    residual; every converged level is checked against ``10·steady_tol``.
    """
    vectors = vectors or normalized_vectors(archive, table)
    notes = []
    tol = archive.config.steady_tol
    bound = IDENTITY_FACTOR * tol
    ok = True
    if table.b_mode == "projected":
        ok = bool(np.all(table.residual[table.converged] <= bound))
    else:
        notes.append("raw b̃_n: E_n is not an exact identity; bound not asserted")
    lim = rel = None
    if vectors.w_hat is not None and vectors.b_hat is not None and vectors.phi_hat is not None \
            and table.mu0 is not None and table.mu00 is not None:
        w = vectors.w_hat
        Aw = w.with_coef(table.nu * w.grid.ksq * w.coef)
        r = Aw + vectors.b_hat * table.mu0 - vectors.phi_hat * table.mu00
        lim = frac_norm(r, 0.0)
        scale = frac_norm(Aw, 0.0) + table.mu0 * frac_norm(vectors.b_hat, 0) + table.mu00 * frac_norm(vectors.phi_hat, 0)
        rel = lim / scale if scale > 0 else None
        notes.append("three-term relation includes the force direction; "
                     "the shared relation for Γ₁ ≻ G carries no force term")
    else:
        notes.append("limit relation unavailable (a normalized vector or quotient limit is missing)")
    return FirstMethodResult(table.En, table.En_literal, table.residual, lim, rel, bound, ok, notes)


# ----------------------------------------------------------- second method


@dataclass
class SecondMethodResult:
    verdict: str
    beta: float
    rho0: np.ndarray
    rho1: np.ndarray | None
    rho_pairs: dict
    residual1: float | None
    residual1_relative: float | None
    residual2: float | None
    lam: float | None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "beta": self.beta, "rho0": self.rho0.tolist(),
                "rho1": None if self.rho1 is None else self.rho1.tolist(),
                "rho_pairs": {k: v.tolist() for k, v in self.rho_pairs.items()},
                "residual1": self.residual1, "residual1_relative": self.residual1_relative,
                "residual2": self.residual2, "lambda": self.lam, "notes": self.notes}


def _symmetric(adv: Advection, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Vorticity form of B_s(v, w) = B(v, w) + B(w, v)."""
    fv, fw = adv.fields(v), adv.fields(w)
    return adv.bilinear(fv, fw) + adv.bilinear(fw, fv)


def relation_residual_second_method(archive: LadderArchive, report: ExpansionReport, beta: float = 0.0,
                                    lam: float | None = None) -> SecondMethodResult:
    """Tail norms of the substituted nonlinear terms and the linearized relations.

    ``report`` must be an expansion of the archive's levels on its
    evaluation grid.  A degenerate first term yields the degenerate verdict.
    """
    _require_reference(archive)
    archive = archive.sorted()
    if beta < 0:
        raise ValueError("beta must be >= 0")
    p = archive.problem
    E = p.eval_grid
    adv = Advection(E, archive.config.dealias)
    v = p.omega.coef
    grids = [r.grid for r in archive.records]
    bvv = SpectralField(E, adv(v))
    rho0 = np.array([frac_norm(complement(bvv, g), beta) for g in grids])
    notes: list[str] = []
    if not report.terms or report.terms[0].degenerate or report.classification in ("trivial", "nonconvergent"):
        notes.append("first expansion term is degenerate or absent: v_n ≈ v + Σ Γ_k·0")
        return SecondMethodResult("degenerate", beta, rho0, None, {}, None, None, None, None, notes)
    if report.grid is None or report.grid != E:
        raise ValueError("expansion report must live on the archive's evaluation grid")
    w1 = report.terms[0].limit
    nu = p.nu
    bs1 = SpectralField(E, _symmetric(adv, v, w1))
    rho1 = np.array([frac_norm(complement(bs1, g), beta) for g in grids])
    Aw1 = SpectralField(E, nu * E.ksq * w1)
    r1 = Aw1 + bs1
    res1 = frac_norm(r1, beta)
    den = frac_norm(Aw1, beta) + frac_norm(bs1, beta)
    pairs = {}
    res2 = None
    if len(report.terms) >= 2 and not report.terms[1].degenerate:
        w2 = report.terms[1].limit
        b11 = SpectralField(E, adv.bilinear(w1, w1))
        pairs["1,1"] = np.array([frac_norm(complement(b11, g), beta) for g in grids])
        if lam is None:
            g1, g2 = report.terms[0].gamma, report.terms[1].gamma
            ok = (g2 > 0) & np.isfinite(g1)
            m = max(1, len(g1) // 2)
            q = (g1[ok] ** 2 / g2[ok])[-m:]
            lam = float(np.exp(np.mean(np.log(q)))) if len(q) else None
            notes.append("λ estimated as trailing geometric mean of Γ_1²/Γ_2")
        if lam is not None:
            r2 = SpectralField(E, nu * E.ksq * w2 + _symmetric(adv, v, w2)) + b11 * lam
            res2 = frac_norm(r2, beta)
    return SecondMethodResult("relations", beta, rho0, rho1, pairs, res1, res1 / den if den > 0 else None,
                              res2, lam, notes)


# ---------------------------------------------------------------- dispatch


CASE_FINITE_FORCE = "finite-force"
CASE_TRIVIAL = "trivial"
CASE_1I = "case1(i)"
CASE_1II = "case1(ii)"
CASE_1III = "case1(iii)"
CASE_2 = "case2"

CONCLUSIONS = {
    CASE_FINITE_FORCE: "force lies in a finite Galerkin span: compare Γ₁ and ρ₁ directly",
    CASE_TRIVIAL: "levels coincide with the limit",
    CASE_1I: "shared relation ν A w₁ + μ₀ b₁ = 0; see first-method limit residual",
    CASE_1II: "w₁ = 0: degenerate expansion of v_n",
    CASE_1III: "b₁ = 0: degenerate expansion of the nonlinear term",
    CASE_2: "rate bound ‖v_n - v‖_{D(A)} = O(λ^{-α*}); see rate products",
}


@dataclass
class Dispatch:
    case: str
    ambiguous: bool
    candidates: list[str]
    conclusion: str
    check: dict
    relations: dict

    def to_dict(self) -> dict:
        return {"case": self.case, "ambiguous": self.ambiguous, "candidates": self.candidates,
                "conclusion": self.conclusion, "check": self.check, "relations": self.relations}


def _case_from(r_gr: str, r_gG: str, r_rG: str) -> str:
    """Map relations Γ?ρ, Γ?G, ρ?G to a case label."""
    if r_gG == SUCC or r_rG == SUCC:
        return {SIM: CASE_1I, SUCC: CASE_1II, PREC: CASE_1III}[r_gr]
    return CASE_2


def comparability_for(table: DiagnosticsTable, thresholds: Thresholds | None = None) -> ComparabilityTable | None:
    seqs = {"Gamma1": table.gamma1, "rho1": table.rho1, "Gn": table.G}
    seqs = {k: v for k, v in seqs.items() if np.all(v > 0) and not table.vanishes(k)}
    if len(seqs) < 2:
        return None
    return total_comparability(seqs, table.lambda_cut, thresholds)


def theorem_case_dispatch(table: DiagnosticsTable, comparability: ComparabilityTable | None,
                          first: FirstMethodResult | None = None,
                          min_confidence: float | None = None) -> Dispatch:
    """Route the verdicts on {Γ₁, ρ₁, G} through the case tree."""
    check: dict = {}
    if table.vanishes("Gamma1"):
        return Dispatch(CASE_TRIVIAL, False, [CASE_TRIVIAL], CONCLUSIONS[CASE_TRIVIAL], check, {})
    if table.vanishes("Gn"):
        check["Gamma1"] = table.gamma1.tolist()
        check["rho1"] = table.rho1.tolist()
        return Dispatch(CASE_FINITE_FORCE, False, [CASE_FINITE_FORCE], CONCLUSIONS[CASE_FINITE_FORCE], check, {})
    rate = {"flattest_alpha": table.flattest_alpha(), "slopes": {str(k): v for k, v in table.rate_slopes().items()}}
    if table.vanishes("rho1"):
        return Dispatch(CASE_2, False, [CASE_2], "nonlinear term absent; " + CONCLUSIONS[CASE_2], rate, {})
    if comparability is None:
        raise ValueError("comparability table required")
    mc = min_confidence if min_confidence is not None else 0.5
    names = {"Gamma1", "rho1", "Gn"}
    if not names <= set(comparability.labels):
        raise ValueError("comparability table must cover Gamma1, rho1 and Gn")
    pairs = [("Gamma1", "rho1"), ("Gamma1", "Gn"), ("rho1", "Gn")]
    options, rels = [], {}
    for a, b in pairs:
        v = comparability.verdict(a, b)
        rels[f"{a}|{b}"] = {"relation": v.relation, "confidence": v.confidence, "lambda": v.lam}
        options.append([v.relation] if v.confidence >= mc else [SUCC, SIM, PREC])
    cands = sorted({_case_from(*combo) for combo in itertools.product(*options)})
    low = any(len(o) > 1 for o in options)
    case = cands[0] if len(cands) == 1 else "ambiguous"
    if case == CASE_2:
        check = rate
    elif case == CASE_1I and first is not None:
        check = {"limit_residual": first.limit_residual, "limit_residual_relative": first.limit_residual_relative}
    elif case in (CASE_1II, CASE_1III):
        check = {"quotient_rho_over_Gamma": table.q_rho.tolist()}
    conclusion = CONCLUSIONS.get(case, "low-confidence comparability; candidates: " + ", ".join(cands))
    if low and len(cands) == 1:
        conclusion += " (low-confidence pairs do not change the case)"
    return Dispatch(case, len(cands) > 1, cands, conclusion, check, rels)


def bundle(archive: LadderArchive, table: DiagnosticsTable, comp: ComparabilityTable | None,
           first: FirstMethodResult, dispatch: Dispatch) -> str:
    return json.dumps({
        "table": table.to_dict(),
        "comparability": None if comp is None else comp.to_dict(),
        "first_method": first.to_dict(),
        "dispatch": dispatch.to_dict(),
        "archive": {"resolutions": archive.resolutions, "problem": archive.problem.name,
                    "complete": archive.complete},
    }, indent=2, sort_keys=True, default=float)
