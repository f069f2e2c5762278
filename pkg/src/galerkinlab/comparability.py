"""Asymptotic ordering of positive sequences and power-law rate fits.

Two sequences are compared through ``log q_n = log ξ_n - log η_n``.  Working
in logs makes the pair relation exactly antisymmetric: swapping the
arguments negates every derived quantity.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

SUCC, SIM, PREC = "succ", "sim", "prec"


@dataclass(frozen=True)
class Thresholds:
    slope: float = 0.1
    band: float = 0.2
    min_confidence: float = 0.5

    def __post_init__(self):
        if self.slope <= 0 or self.band <= 0:
            raise ValueError("thresholds must be positive")
        if not 0 <= self.min_confidence <= 1:
            raise ValueError("min_confidence must lie in [0, 1]")


@dataclass
class PairVerdict:
    relation: str
    log_lam: float | None
    confidence: float
    quotient: np.ndarray
    slope: float
    spread: float
    note: str = ""

    @property
    def lam(self) -> float | None:
        return None if self.log_lam is None else math.exp(self.log_lam)

    def to_dict(self) -> dict:
        return {"relation": self.relation, "lambda": self.lam, "confidence": self.confidence,
                "slope": self.slope, "spread": self.spread, "quotient": self.quotient.tolist(), "note": self.note}


def _check_positive(x, name) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValueError(f"{name} must have finite positive entries")
    return x


def _slope(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - np.mean(x)
    return float(np.sum(xc * (y - np.mean(y))) / np.sum(xc * xc))


def _abscissa(n: int, labels) -> np.ndarray:
    if labels is None:
        return np.log(np.arange(1, n + 1, dtype=float))
    lab = np.asarray(labels, dtype=float)
    if lab.shape != (n,) or np.any(lab <= 0) or np.any(np.diff(lab) <= 0):
        raise ValueError("labels must be positive, strictly increasing and match the sequence length")
    return np.log(lab)


def classify_pair(xi, eta, labels=None, thresholds: Thresholds | None = None) -> PairVerdict:
    """Decide ξ ≻ η, ξ ∼ η or ξ ≺ η from the trailing half of the quotient.

    The slope of ``log q`` is taken against ``log lambda_cut`` when labels
    are given, else against the log of the 1-based index.
    """
    th = thresholds or Thresholds()
    xi, eta = _check_positive(xi, "xi"), _check_positive(eta, "eta")
    if xi.shape != eta.shape:
        raise ValueError("sequences must have equal length")
    n = len(xi)
    if n < 2:
        raise ValueError("need at least 2 entries")
    lq = np.log(xi) - np.log(eta)
    x = _abscissa(n, labels)
    m = max(2, n - n // 2)
    tx, ty = x[-m:], lq[-m:]
    s = _slope(tx, ty)
    centre = float(np.mean(ty))
    spread = float(np.max(np.abs(ty - centre)))
    band = math.log1p(th.band)
    if abs(s) <= th.slope:
        rel, log_lam = SIM, centre
        if spread <= band:
            conf = 1.0 - 0.5 * max(abs(s) / th.slope, spread / band)
            note = ""
        else:
            conf = 0.5 * band / spread
            note = "quotient leaves the band: no evidence of a limit"
    else:
        rel, log_lam = (SUCC if s > 0 else PREC), None
        steps = np.diff(ty) * np.sign(s)
        consistent = float(np.mean(steps > 0)) if len(steps) else 0.0
        conf = min(1.0, (abs(s) - th.slope) / th.slope) * consistent
        note = "" if consistent == 1.0 else "quotient not monotone in the window"
    if n < 4:
        conf, note = 0.0, "fewer than 4 entries"
    return PairVerdict(rel, log_lam, float(conf), np.exp(lq), s, spread, note)


def _code(v: PairVerdict) -> int:
    return {SUCC: 1, SIM: 0, PREC: -1}[v.relation]


def _flip(v: PairVerdict) -> PairVerdict:
    rel = {SUCC: PREC, PREC: SUCC, SIM: SIM}[v.relation]
    return PairVerdict(rel, None if v.log_lam is None else -v.log_lam, v.confidence, 1.0 / v.quotient,
                       -v.slope, v.spread, v.note)


@dataclass
class ComparabilityTable:
    labels: list[str]
    verdicts: dict
    totally_comparable: bool
    confidence: float
    inconsistent: list[tuple[str, str, str]]
    subsampling: dict = field(default_factory=dict)

    def verdict(self, a: str, b: str) -> PairVerdict:
        return self.verdicts[(a, b)]

    def matrix(self) -> list[list[str]]:
        out = []
        for a in self.labels:
            row = []
            for b in self.labels:
                if a == b:
                    row.append("=")
                    continue
                v = self.verdicts[(a, b)]
                sym = {SUCC: "≻", PREC: "≺", SIM: "∼"}[v.relation]
                row.append(f"{sym}({v.lam:.4g})" if v.relation == SIM else sym)
            out.append(row)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["row_vs_col"] + self.labels)
        for a, row in zip(self.labels, self.matrix()):
            w.writerow([a] + row)
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "labels": self.labels,
            "totally_comparable": self.totally_comparable,
            "confidence": self.confidence,
            "inconsistent_triples": [list(t) for t in self.inconsistent],
            "subsampling": self.subsampling,
            "pairs": {f"{a}|{b}": v.to_dict() for (a, b), v in self.verdicts.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _table(seqs: dict, labels, th: Thresholds):
    names = list(seqs)
    verdicts = {}
    for a, b in itertools.combinations(names, 2):
        v = classify_pair(seqs[a], seqs[b], labels, th)
        verdicts[(a, b)] = v
        verdicts[(b, a)] = _flip(v)
    bad = []
    for a, b, c in itertools.permutations(names, 3):
        vab, vbc, vac = verdicts[(a, b)], verdicts[(b, c)], verdicts[(a, c)]
        if min(vab.confidence, vbc.confidence, vac.confidence) < th.min_confidence:
            continue
        x, y, z = _code(vab), _code(vbc), _code(vac)
        if x >= 0 and y >= 0 and z != max(x, y):
            bad.append((a, b, c))
        elif x == y == z == 0 and abs(vab.log_lam + vbc.log_lam - vac.log_lam) > math.log1p(th.band):
            bad.append((a, b, c))
    uniq = sorted({tuple(sorted(t)) for t in bad})
    conf = min((v.confidence for v in verdicts.values()), default=1.0)
    if uniq:
        conf *= 0.5
    ok = not uniq and all(v.confidence >= th.min_confidence for v in verdicts.values())
    return names, verdicts, ok, conf, uniq


def total_comparability(sequences: dict, labels=None, thresholds: Thresholds | None = None) -> ComparabilityTable:
    """All pairwise verdicts plus a totally-comparable verdict.

    Inconsistent high-confidence triples are listed and halve the overall
    confidence; nothing is repaired.  Subsamplings (all elements, even and odd
    positions) are evaluated and reported side by side.
    """
    th = thresholds or Thresholds()
    if len(sequences) < 2:
        raise ValueError("need at least 2 sequences")
    seqs = {str(k): _check_positive(v, str(k)) for k, v in sequences.items()}
    lengths = {len(v) for v in seqs.values()}
    if len(lengths) != 1:
        raise ValueError("sequences must have equal length")
    names, verdicts, ok, conf, bad = _table(seqs, labels, th)
    sub = {"all": ok}
    n = lengths.pop()
    lab = None if labels is None else np.asarray(labels, dtype=float)
    for tag, start in (("every_other_even", 0), ("every_other_odd", 1)):
        idx = np.arange(start, n, 2)
        if len(idx) < 2:
            sub[tag] = None
            continue
        s2 = {k: v[idx] for k, v in seqs.items()}
        sub[tag] = _table(s2, None if lab is None else lab[idx], th)[2]
    return ComparabilityTable(names, verdicts, ok, conf, bad, sub)


@dataclass
class RateFit:
    r: float
    C: float
    residual: float
    window: tuple[int, int]
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def rate_fit(xi, labels, window: int | None = None) -> RateFit:
    """Fit ``ξ_n ≈ C·lambda_cut(n)^{-r}`` by least squares in log-log coordinates."""
    xi = _check_positive(xi, "xi")
    lab = np.asarray(labels, dtype=float)
    if lab.shape != xi.shape or np.any(lab <= 0):
        raise ValueError("labels must be positive and match the sequence")
    n = len(xi)
    if n < 2:
        raise ValueError("need at least 2 entries")
    m = n if window is None else max(2, min(window, n))
    x, y = np.log(lab[-m:]), np.log(xi[-m:])
    A = np.vstack([np.ones_like(x), -x]).T
    (logC, r), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ np.array([logC, r]) - y) ** 2)))
    note = "" if r > 0 else "sequence does not decay"
    return RateFit(float(r), float(math.exp(logC)), res, (n - m, n), note)
