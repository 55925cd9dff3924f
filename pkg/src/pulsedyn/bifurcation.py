"""Critical points of the potential and the closed-form regime classifications.

Dumbbell: with ``mu = (1-k)^2/(4k)`` and ``g(mu) = (2+2mu-3mu^2)/(3mu+2)`` the sign
of ``E''(0)`` equals the sign of ``g(mu) - sin^2 theta*`` where ``w = S(theta*)``.
Perforated disk: ``E`` increases with ``D(s) = 4b^2 (cos s - b0)^2 + ...`` so the
critical set is read off from ``b0 = (1+b^2) cos w / (2b)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DomainParameterError, FlatPotentialError, ThresholdUndefinedError
from .geometry import ConformalDomain, DomainKind, annulus_parameters
from .greens import PotentialField

K_STAR = (5.0 + 2.0 * math.sqrt(7.0) - 2.0 * math.sqrt(11.0 + 5.0 * math.sqrt(7.0))) / 3.0
MU_G_ROOT = (1.0 + math.sqrt(7.0)) / 3.0
DEGENERATE_E2 = 1e-8
FLAT_E1 = 1e-12
MIN_GRID = 256


@dataclass(frozen=True)
class CriticalPoint:
    s0: float
    kind: str  # "min", "max" or "degenerate"
    E_value: float
    E_second: float
    provenance: str = "numeric"


@dataclass
class RegimeReport:
    """Which clause of the classification applies, with the thresholds used."""

    domain: dict
    w: float
    clause: int
    thresholds: dict
    critical_points: list = field(default_factory=list)
    description: str = ""

    def as_dict(self) -> dict:
        return {
            "domain": self.domain,
            "w": self.w,
            "clause": self.clause,
            "thresholds": self.thresholds,
            "critical_points": [cp.__dict__ for cp in self.critical_points],
            "description": self.description,
        }


def _classify(E2: float) -> str:
    if abs(E2) < DEGENERATE_E2:
        return "degenerate"
    return "min" if E2 > 0.0 else "max"


def _symmetry_representative(domain: ConformalDomain, s: float) -> float:
    L = domain.perimeter
    s = s % L
    s = min(s, L - s)  # reflection s -> -s
    if domain.kind is DomainKind.DUMBBELL:
        s = min(s, 0.5 * L - s)  # reflection s -> L/2 - s
    return 0.0 if s < 1e-12 * L else s


def critical_points(pf: PotentialField, grid_n: int = 512, dedupe: bool = False,
                    xtol: float = 1e-13) -> list[CriticalPoint]:
    """All zeros of ``E'`` over one period, classified by the sign of ``E''``.

    ``E'`` is sampled on a half-cell-shifted grid so that symmetry points
    falling on ``k L / grid_n`` sit inside a cell, not on a node.
    """
    if grid_n < MIN_GRID:
        raise DomainParameterError(f"grid_n must be >= {MIN_GRID}, got {grid_n}")
    L = pf.L
    s = (np.arange(grid_n) + 0.5) * (L / grid_n)
    d1 = np.asarray(pf.derivative(s, 1))
    if np.max(np.abs(d1)) < FLAT_E1:
        raise FlatPotentialError("E is constant in s0: every position is a neutral equilibrium")

    def E1(x):
        return float(pf.derivative(x, 1))

    nxt = np.roll(d1, -1)
    found = []
    for i in np.nonzero(np.sign(d1) * np.sign(nxt) <= 0.0)[0]:
        a, b = s[i], s[i] + L / grid_n
        fa, fb = d1[i], nxt[i]
        if fa == 0.0:
            root = a
        elif fb == 0.0:
            root = b
        else:
            root = brentq(E1, a, b, xtol=xtol, rtol=1e-15)
        # Newton polish, kept only if it stays in the bracket and reduces |E'|
        for _ in range(3):
            e2 = float(pf.derivative(root, 2))
            if e2 == 0.0:
                break
            trial = root - E1(root) / e2
            if not a <= trial <= b or abs(E1(trial)) >= abs(E1(root)):
                break
            root = trial
        root = root % L
        if L - root < 1e-12 * L:
            root = 0.0
        e2 = float(pf.derivative(root, 2))
        found.append(CriticalPoint(root, _classify(e2), float(pf(root)), e2))
    # a root sitting exactly on a node is reported by both neighbouring cells
    found.sort(key=lambda cp: cp.s0)
    out: list[CriticalPoint] = []
    for cp in found:
        if out and abs(cp.s0 - out[-1].s0) < 1e-9:
            continue
        out.append(cp)
    if len(out) > 1 and L - out[-1].s0 + out[0].s0 < 1e-9:
        out.pop()
    if dedupe:
        reps: list[CriticalPoint] = []
        for cp in out:
            r = _symmetry_representative(pf.domain, cp.s0)
            if all(abs(r - q.s0) > 1e-8 for q in reps):
                reps.append(CriticalPoint(r, cp.kind, cp.E_value, cp.E_second, cp.provenance))
        out = sorted(reps, key=lambda cp: cp.s0)
    return out


# -- dumbbell ------------------------------------------------------------
def mu(k: float) -> float:
    return (1.0 - k) ** 2 / (4.0 * k)


def g(m: float) -> float:
    return (2.0 + 2.0 * m - 3.0 * m * m) / (3.0 * m + 2.0)


def _check_k(k: float) -> None:
    if not 0.0 < k < 1.0:
        raise DomainParameterError(f"dumbbell parameter k must lie in (0, 1), got {k}")


def w_b(k: float) -> float:
    """Threshold half-width ``S(arcsin sqrt(g(mu(k))))`` for ``k* < k < 1``."""
    _check_k(k)
    if k <= K_STAR:
        raise ThresholdUndefinedError(f"w_b(k) is defined only for k > k* = {K_STAR:.10f}, got {k}")
    gm = g(mu(k))
    theta = math.asin(math.sqrt(min(max(gm, 0.0), 1.0)))
    dom = ConformalDomain(DomainKind.DUMBBELL, k=k)
    return float(dom.arclength(theta))


def k_b(w: float, xtol: float = 1e-13) -> float:
    """Inverse of the strictly increasing ``w_b`` on ``(k*, 1)``."""
    if not 0.0 < w < 0.5 * math.pi:
        raise DomainParameterError(f"k_b(w) requires 0 < w < pi/2, got {w}")
    lo, hi = K_STAR, 1.0 - 1e-9
    if w_b(hi) <= w:
        raise ThresholdUndefinedError(f"w={w} exceeds w_b on the admissible k range")
    return brentq(lambda k: w_b(k) - w, lo + 1e-15, hi, xtol=xtol, rtol=1e-15)


def dumbbell_regime(k: float, w: float) -> RegimeReport:
    """Clause of the dumbbell classification for ``(k, w)``.

    Clause 2: ``k <= k*``; 3: ``w_b < w < L/2 - w_b``; 4: outside that window
    (``s = 0`` becomes a local minimum). At ``w = w_b`` exactly the clause is
    reported as 0 (degenerate boundary).
    """
    _check_k(k)
    dom = ConformalDomain(DomainKind.DUMBBELL, k=k)
    L = dom.perimeter
    if not 0.0 < w < 0.5 * L:
        raise DomainParameterError(f"half-width must lie in (0, L/2) = (0, {0.5 * L:.10g}), got {w}")
    m = mu(k)
    gm = g(m)
    theta_star = float(dom.theta_of(w))
    thresholds = {"k_star": K_STAR, "mu": m, "g_mu": gm, "theta_star": theta_star, "L": L}
    if k <= K_STAR:
        clause, zero_kind = 2, "max"
    else:
        wb = w_b(k)
        thresholds["w_b"] = wb
        if wb < w < L / 2 - wb:
            clause, zero_kind = 3, "max"
        elif w < wb or w > L / 2 - wb:
            clause, zero_kind = 4, "min"
        else:
            clause, zero_kind = 0, "degenerate"
    cps = [
        CriticalPoint(0.0, zero_kind, math.nan, math.nan, "closed_form"),
        CriticalPoint(0.25 * L, "min", math.nan, math.nan, "closed_form"),
    ]
    text = {
        0: "w = w_b(k): s=0 is degenerate",
        2: "k <= k*: only s=0 (max) and s=L/4 (min)",
        3: "w_b < w < L/2 - w_b: only s=0 (max) and s=L/4 (min)",
        4: "s=0 and s=L/4 both minima; an interior maximum lies in (0, L/4)",
    }[clause]
    return RegimeReport({"kind": "dumbbell", "k": k}, w, clause, thresholds, cps, text)


# -- perforated disk -----------------------------------------------------
def hole_threshold(b: float) -> float:
    """``arccos(2b/(1+b^2))``."""
    return math.acos(2.0 * b / (1.0 + b * b))


def _check_hole(c: float, r: float) -> None:
    if not 0.0 < r < 1.0:
        raise DomainParameterError(f"hole radius r must lie in (0, 1), got {r}")
    if not 0.0 <= c < 1.0 - r:
        raise DomainParameterError(f"hole offset c must lie in [0, 1-r) = [0, {1 - r:.10g}), got {c}")


def hole_regime(c: float, r: float, w: float) -> RegimeReport:
    """Clause of the perforated-disk classification (1, 2 or 3).

    The concentric case ``c = 0`` has a flat potential and is reported as
    clause 0; exact threshold values of ``w`` are also reported as 0.
    """
    _check_hole(c, r)
    if not 0.0 < w < math.pi:
        raise DomainParameterError(f"half-width must lie in (0, pi), got {w}")
    a, b = annulus_parameters(c, r) if c > 0.0 else (r, 0.0)
    if b == 0.0:
        return RegimeReport({"kind": "perforated_disk", "c": c, "r": r}, w, 0,
                            {"a": a, "b": 0.0, "tau": 0.5 * math.pi}, [], "concentric annulus: E is constant")
    tau = hole_threshold(b)
    b0 = (1.0 + b * b) / (2.0 * b) * math.cos(w)
    thresholds = {"a": a, "b": b, "tau": tau, "b0": b0}
    dom = {"kind": "perforated_disk", "c": c, "r": r}
    if w < tau:
        cps = [CriticalPoint(0.0, "min", math.nan, math.nan, "closed_form"),
               CriticalPoint(math.pi, "max", math.nan, math.nan, "closed_form")]
        return RegimeReport(dom, w, 1, thresholds, cps, "only s=0 (min) and s=pi (max)")
    if tau < w < math.pi - tau:
        s_star = math.acos(b0)
        cps = [CriticalPoint(0.0, "max", math.nan, math.nan, "closed_form"),
               CriticalPoint(s_star, "min", math.nan, math.nan, "closed_form"),
               CriticalPoint(math.pi, "max", math.nan, math.nan, "closed_form"),
               CriticalPoint(2.0 * math.pi - s_star, "min", math.nan, math.nan, "closed_form")]
        return RegimeReport(dom, w, 2, thresholds, cps, "s=0, pi maxima; s=+-arccos(b0) minima")
    if w > math.pi - tau:
        cps = [CriticalPoint(0.0, "max", math.nan, math.nan, "closed_form"),
               CriticalPoint(math.pi, "min", math.nan, math.nan, "closed_form")]
        return RegimeReport(dom, w, 3, thresholds, cps, "only s=0 (max) and s=pi (min)")
    return RegimeReport(dom, w, 0, thresholds, [], "w on a threshold: degenerate")


def c_b(r: float, w: float, xtol: float = 1e-13) -> float:
    """Offset where ``arccos(2b/(1+b^2)) = w`` (pitchfork from ``s = 0``)."""
    if not 0.0 < r < 1.0:
        raise DomainParameterError(f"hole radius r must lie in (0, 1), got {r}")
    if not 0.0 < w < 0.5 * math.pi:
        raise DomainParameterError(f"c_b(r, w) requires 0 < w < pi/2, got {w}")

    def gap(c):
        return hole_threshold(annulus_parameters(c, r)[1]) - w

    hi = (1.0 - r) * (1.0 - 1e-9)
    return brentq(gap, 1e-9, hi, xtol=xtol, rtol=1e-15)


def regime_points(domain: ConformalDomain, w: float) -> RegimeReport:
    """Dispatch to the closed-form classification for a built domain."""
    if domain.kind is DomainKind.DUMBBELL:
        return dumbbell_regime(domain.k, w)
    if domain.kind is DomainKind.PERFORATED_DISK:
        return hole_regime(domain.c, domain.r, w)
    raise FlatPotentialError("the disk has a constant potential; no regime to classify")


__all__ = [
    "K_STAR", "MU_G_ROOT", "CriticalPoint", "RegimeReport", "critical_points", "mu", "g", "w_b", "k_b",
    "dumbbell_regime", "hole_threshold", "hole_regime", "c_b", "regime_points",
]
