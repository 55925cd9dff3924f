"""Bistable surface kinetics, travelling fronts and the pulse mass relation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .errors import (
    AdmissibilityError,
    BistableRangeError,
    FrontSolveError,
    KineticsNotBistableError,
    MassInfeasibleError,
)

SCAN_NODES = 2048
V_SCAN_NODES = 1024

Rate = Callable[[np.ndarray, np.ndarray], np.ndarray]


def hill_rate(k0: float, gamma0: float) -> tuple[Rate, Rate, Rate]:
    """``f(u,v) = (k0 + gamma0 u^2/(1+u^2)) v - u`` and its partial derivatives."""

    def f(u, v):
        return (k0 + gamma0 * u * u / (1.0 + u * u)) * v - u

    def f_u(u, v):
        return 2.0 * gamma0 * u * v / (1.0 + u * u) ** 2 - 1.0

    def f_v(u, v):
        return k0 + gamma0 * u * u / (1.0 + u * u)

    return f, f_u, f_v


@dataclass(frozen=True)
class Front:
    """Heteroclinic front ``U'' + c U' + f(U, v) = 0`` from ``h-(v)`` to ``h+(v)``."""

    v: float
    speed: float
    kappa: float
    h_minus: float
    h_zero: float
    h_plus: float
    xi_left: float
    xi_right: float
    tail_residual: float


class ReactionKinetics:
    """A bistable rate ``f(u, v)`` with its equilibrium branches and pinning data.

    ``u_upper`` bounds the search for roots in ``u``; it may be a float or a
    callable of ``v``. ``v_search`` brackets the bistable range.
    """

    def __init__(self, f: Rate, f_u: Rate, f_v: Rate, *, u_upper, v_search: tuple[float, float],
                 name: str = "custom", params: dict | None = None):
        self.f = f
        self.f_u = f_u
        self.f_v = f_v
        self._u_upper = u_upper
        self.v_search = v_search
        self.name = name
        self.params = dict(params or {})
        self.v_min, self.v_max = self._find_bistable_range()
        self.v_star = self._find_pinning_value()
        self.J_prime_star = self.J_derivative(self.v_star)
        if self.J_prime_star == 0.0:
            raise KineticsNotBistableError("J'(v*) = 0: pinning value is not isolated")
        self._check_branch_invariants()

    @classmethod
    def hill(cls, k0: float = 0.05, gamma0: float = 0.79) -> "ReactionKinetics":
        if not gamma0 > 8.0 * k0 > 0.0:
            raise KineticsNotBistableError(f"Hill kinetics need gamma0 > 8 k0 > 0, got k0={k0}, gamma0={gamma0}")
        f, f_u, f_v = hill_rate(k0, gamma0)
        # h+(v) < (k0 + gamma0) v, and the folds lie below v = 1/k0
        return cls(f, f_u, f_v, u_upper=lambda v: 10.0 * (k0 + gamma0) * v,
                   v_search=(1e-3, 2.0 / k0), name="hill", params={"k0": k0, "gamma0": gamma0})

    # -- equilibria ------------------------------------------------------
    def u_upper(self, v: float) -> float:
        return float(self._u_upper(v)) if callable(self._u_upper) else float(self._u_upper)

    def _critical_points(self, v: float):
        """Zeros of ``f_u(., v)`` on ``[0, u_upper]``."""
        u = np.linspace(0.0, self.u_upper(v), SCAN_NODES)
        g = self.f_u(u, v)
        idx = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]
        return [brentq(self.f_u, u[i], u[i + 1], args=(v,), xtol=1e-15, rtol=1e-15) for i in idx], u[-1]

    def _fold_functions(self, v: float):
        crit, _ = self._critical_points(v)
        if len(crit) != 2:
            return None
        return self.f(crit[0], v), self.f(crit[1], v)

    def _find_bistable_range(self):
        lo, hi = self.v_search
        vs = np.linspace(lo, hi, V_SCAN_NODES)
        ok = np.zeros(vs.size, dtype=bool)
        for i, v in enumerate(vs):
            vals = self._fold_functions(v)
            ok[i] = vals is not None and vals[0] < 0.0 < vals[1]
        if not ok.any():
            raise KineticsNotBistableError("no fold pair found: f(., v) never has three roots")
        first = int(np.argmax(ok))
        last = first
        while last + 1 < vs.size and ok[last + 1]:
            last += 1
        if first == 0 or last == vs.size - 1:
            raise KineticsNotBistableError("bistable range touches the search window; widen v_search")

        def fold_gap(v):
            vals = self._fold_functions(v)
            if vals is None:
                return -1.0
            return min(-vals[0], vals[1])

        v_min = brentq(fold_gap, vs[first - 1], vs[first], xtol=1e-14, rtol=1e-15)
        v_max = brentq(fold_gap, vs[last], vs[last + 1], xtol=1e-14, rtol=1e-15)
        return v_min, v_max

    def _check_range(self, v: float) -> None:
        if not self.v_min < v < self.v_max:
            raise BistableRangeError(v, self.v_min, self.v_max)

    def _polish(self, u: float, v: float) -> float:
        for _ in range(4):
            fu = self.f_u(u, v)
            if fu == 0.0:
                break
            step = self.f(u, v) / fu
            u -= step
            if abs(step) < 1e-16 * max(1.0, abs(u)):
                break
        return u

    def equilibrium_branches(self, v: float) -> tuple[float, float, float]:
        """The three roots ``h- < h0 < h+`` of ``f(., v) = 0``."""
        v = float(v)
        self._check_range(v)
        crit, u_top = self._critical_points(v)
        if len(crit) != 2:
            raise BistableRangeError(v, self.v_min, self.v_max)
        c1, c2 = crit
        brackets = [(0.0, c1), (c1, c2), (c2, u_top)]
        roots = []
        for lo, hi in brackets:
            flo, fhi = self.f(lo, v), self.f(hi, v)
            if flo * fhi > 0.0:
                raise BistableRangeError(v, self.v_min, self.v_max)
            r = brentq(self.f, lo, hi, args=(v,), xtol=1e-15, rtol=1e-15)
            roots.append(self._polish(r, v))
        return tuple(roots)

    def branch_slopes(self, v: float) -> tuple[float, float]:
        """``(h-)'(v)`` and ``(h+)'(v)`` from implicit differentiation."""
        hm, _, hp = self.equilibrium_branches(v)
        return (-self.f_v(hm, v) / self.f_u(hm, v), -self.f_v(hp, v) / self.f_u(hp, v))

    def delta_h(self, v: float) -> float:
        hm, _, hp = self.equilibrium_branches(v)
        return hp - hm

    # -- mass balance ----------------------------------------------------
    def J(self, v: float) -> float:
        """``J(v) = int_{h-}^{h+} f(u, v) du``."""
        hm, _, hp = self.equilibrium_branches(v)
        return quad(self.f, hm, hp, args=(v,), epsabs=1e-13, epsrel=1e-13, limit=200)[0]

    def J_derivative(self, v: float) -> float:
        """``J'(v) = int_{h-}^{h+} f_v(u, v) du`` (boundary terms vanish)."""
        hm, _, hp = self.equilibrium_branches(v)
        return quad(self.f_v, hm, hp, args=(v,), epsabs=1e-13, epsrel=1e-13, limit=200)[0]

    def _find_pinning_value(self) -> float:
        span = self.v_max - self.v_min
        vs = np.linspace(self.v_min + 1e-6 * span, self.v_max - 1e-6 * span, 257)
        Js = np.array([self.J(v) for v in vs])
        idx = np.nonzero(np.sign(Js[:-1]) * np.sign(Js[1:]) < 0)[0]
        if idx.size == 0:
            raise KineticsNotBistableError("J has no root in the bistable range")
        if idx.size > 1:
            raise KineticsNotBistableError(f"J has {idx.size} roots in the bistable range; pinning value ambiguous")
        i = int(idx[0])
        return brentq(self.J, vs[i], vs[i + 1], xtol=1e-15, rtol=1e-15)

    def _check_branch_invariants(self) -> None:
        span = self.v_max - self.v_min
        for v in np.linspace(self.v_min + 0.02 * span, self.v_max - 0.02 * span, 9):
            hm, h0, hp = self.equilibrium_branches(v)
            if not (self.f_u(hm, v) < 0.0 < self.f_u(h0, v) and self.f_u(hp, v) < 0.0):
                raise KineticsNotBistableError(f"sign pattern of f_u violated at v={v}")
            if not (self.f_v(hm, v) > 0.0 and self.f_v(hp, v) > 0.0):
                raise KineticsNotBistableError(f"f_v(h+-, v) > 0 violated at v={v}")

    # -- fronts ----------------------------------------------------------
    def front(self, v: float, n_grid: int | None = None) -> Front:
        return front(self, v, n_grid=n_grid)

    @cached_property
    def pinned_front(self) -> Front:
        return front(self, self.v_star)

    @property
    def kappa_star(self) -> float:
        return self.pinned_front.kappa

    @cached_property
    def kappa_cache(self) -> "KappaCache":
        return KappaCache(self)

    @cached_property
    def f_u_max(self) -> float:
        """``max |f_u|`` over the states visited by pulses (used for time steps)."""
        lo = self.equilibrium_branches(self.v_min + 1e-6 * (self.v_max - self.v_min))[0]
        hi = self.equilibrium_branches(self.v_max - 1e-6 * (self.v_max - self.v_min))[2]
        u = np.linspace(0.5 * lo, 1.5 * hi, 4001)
        return float(max(np.abs(self.f_u(u, self.v_min)).max(), np.abs(self.f_u(u, self.v_max)).max()))


def equilibrium_branches(kin: ReactionKinetics, v: float):
    return kin.equilibrium_branches(v)


def bistable_range(kin: ReactionKinetics) -> tuple[float, float]:
    return kin.v_min, kin.v_max


def mass_imbalance(kin: ReactionKinetics, v: float) -> float:
    return kin.J(v)


def J_derivative(kin: ReactionKinetics, v: float) -> float:
    return kin.J_derivative(v)


def standing_wave_kappa(kin: ReactionKinetics, v: float | None = None) -> float:
    """First-integral value ``int sqrt(2 W(u)) du`` with ``W(u) = -int_{h-}^u f``.

    Exact for ``kappa`` only where ``J(v) = 0``, i.e. at the pinning value.
    """
    v = kin.v_star if v is None else v
    hm, _, hp = kin.equilibrium_branches(v)

    def W(u):
        return -quad(kin.f, hm, u, args=(v,), epsabs=1e-15, epsrel=1e-14, limit=200)[0]

    return quad(lambda u: np.sqrt(max(2.0 * W(u), 0.0)), hm, hp, epsabs=1e-14, epsrel=1e-13, limit=400)[0]


def _half_front(kin: ReactionKinetics, v: float, c: float, h_from: float, h0: float, delta: float,
                xi_max: float, rtol: float, dense: bool):
    """Follow the 1-D invariant manifold of ``h_from`` until ``U = h0``.

    From ``h-`` the unstable manifold is integrated forward; from ``h+`` the
    stable manifold is integrated backward in ``xi``. The state carries
    ``(U, U', int U'^2)``.
    """
    root = np.sqrt(c * c - 4.0 * kin.f_u(h_from, v))
    if h_from < h0:
        lam, sign, direction = 0.5 * (-c + root), 1.0, 1.0
    else:
        lam, sign, direction = 0.5 * (-c - root), -1.0, -1.0
    # tail of the linearised manifold beyond the starting point
    tail = abs(lam) * delta * delta / 2.0
    y0 = [h_from + sign * delta, sign * lam * delta, 0.0]

    def rhs(_, y):
        return [y[1], -c * y[1] - kin.f(y[0], v), y[1] * y[1]]

    def reach(_, y):
        return y[0] - h0

    def turn(_, y):
        return y[1]

    reach.terminal = True
    turn.terminal = True
    sol = solve_ivp(rhs, (0.0, direction * xi_max), y0, method="DOP853", rtol=rtol, atol=1e-15,
                    events=(reach, turn), dense_output=dense)
    if sol.t_events[0].size:
        y_end = sol.y_events[0][0]
        return y_end[1], abs(y_end[2]) + tail, abs(sol.t_events[0][0]), sol
    # the manifold folds back before the phase point, or creeps into the node
    # h0 without crossing it: either way its slope there is zero
    return 0.0, math.nan, abs(sol.t[-1]), sol


def _mismatch(kin, v, c, hm, h0, hp, delta, xi_max, rtol=1e-12):
    left = _half_front(kin, v, c, hm, h0, delta, xi_max, rtol, False)
    right = _half_front(kin, v, c, hp, h0, delta, xi_max, rtol, False)
    return left[0] - right[0]


def front(kin: ReactionKinetics, v: float, n_grid: int | None = None, c_tol: float = 1e-14) -> Front:
    """Travelling front connecting ``h-(v)`` (left) to ``h+(v)`` (right).

    The speed ``c`` zeroes the slope mismatch at the phase point ``U(0) = h0(v)``
    between the unstable manifold of ``h-`` and the stable manifold of ``h+``;
    ``kappa = int (U')^2``. With ``n_grid`` the integral is instead taken by
    composite Simpson on ``n_grid`` uniform nodes of each half (used for
    convergence studies). The projection identity ``c kappa = -J(v)`` holds.
    """
    v = float(v)
    hm, h0, hp = kin.equilibrium_branches(v)
    delta = 1e-8 * (hp - hm)
    lam_m = np.sqrt(-kin.f_u(hm, v))
    lam_p = np.sqrt(-kin.f_u(hp, v))
    xi_max = 60.0 * (1.0 / lam_m + 1.0 / lam_p) + 80.0

    def mis(c):
        return _mismatch(kin, v, c, hm, h0, hp, delta, xi_max)

    c_lo, c_hi = -0.5, 0.5
    m_lo, m_hi = mis(c_lo), mis(c_hi)
    for _ in range(40):
        if m_lo * m_hi <= 0.0:
            break
        c_lo, c_hi = 2.0 * c_lo, 2.0 * c_hi
        m_lo, m_hi = mis(c_lo), mis(c_hi)
    else:
        raise FrontSolveError(f"could not bracket the front speed at v={v}")
    c = brentq(mis, c_lo, c_hi, xtol=c_tol, rtol=1e-15)
    left = _half_front(kin, v, c, hm, h0, delta, xi_max, 1e-12, n_grid is not None)
    right = _half_front(kin, v, c, hp, h0, delta, xi_max, 1e-12, n_grid is not None)
    if n_grid is None:
        kappa = left[1] + right[1]
    else:
        kappa = _simpson_kappa(left[3], left[2], n_grid) + _simpson_kappa(right[3], right[2], n_grid)
    if not np.isfinite(kappa) or kappa <= 0.0:
        raise FrontSolveError(f"front solve produced kappa={kappa} at v={v}")
    return Front(v, float(c), float(kappa), hm, h0, hp, -float(left[2]), float(right[2]),
                 float(abs(left[0] - right[0])))


def _simpson_kappa(sol, length: float, n_grid: int) -> float:
    """Composite Simpson for ``int U'^2`` over one half of the front."""
    if n_grid % 2 == 0:
        n_grid += 1
    sgn = 1.0 if sol.t[-1] >= 0.0 else -1.0
    xi = sgn * np.linspace(0.0, length, n_grid)
    p = sol.sol(xi)[1]
    hstep = length / (n_grid - 1)
    wts = np.ones(n_grid)
    wts[1:-1:2] = 4.0
    wts[2:-1:2] = 2.0
    return float(hstep / 3.0 * np.dot(wts, p * p))


class KappaCache:
    """Memoised ``kappa(v)`` on a lazily filled uniform grid, linearly interpolated.

    Queries within ``tol`` of a computed node reuse it directly.
    """

    def __init__(self, kin: ReactionKinetics, n_nodes: int = 128, tol: float = 1e-6):
        self.kin = kin
        self.tol = tol
        span = kin.v_max - kin.v_min
        self.grid = np.linspace(kin.v_min + 1e-3 * span, kin.v_max - 1e-3 * span, n_nodes)
        self._values: dict[float, float] = {kin.v_star: kin.kappa_star}

    def _at(self, v: float) -> float:
        if v not in self._values:
            self._values[v] = front(self.kin, v).kappa
        return self._values[v]

    def __call__(self, v: float) -> float:
        v = float(v)
        for node in self._values:
            if abs(node - v) <= self.tol:
                return self._values[node]
        j = int(np.clip(np.searchsorted(self.grid, v) - 1, 0, self.grid.size - 2))
        a, b = float(self.grid[j]), float(self.grid[j + 1])
        if not a <= v <= b:
            return self._at(v)
        t = (v - a) / (b - a)
        return (1.0 - t) * self._at(a) + t * self._at(b)


class MassRelation:
    """Mass bookkeeping ``F(v0, w) = 2w h+(v0) + (L - 2w) h-(v0) + |Omega| v0 - M``."""

    def __init__(self, kin: ReactionKinetics, M: float, perimeter: float, area: float):
        self.kin = kin
        self.M = float(M)
        self.L = float(perimeter)
        self.area = float(area)
        lo, hi = self.admissible_range()
        if not lo < self.M < hi:
            raise AdmissibilityError(f"total mass M={self.M!r} outside admissible range ({lo:.12g}, {hi:.12g})")

    @classmethod
    def for_domain(cls, kin: ReactionKinetics, domain, M: float) -> "MassRelation":
        return cls(kin, M, domain.perimeter, domain.area)

    @classmethod
    def with_w_star(cls, kin: ReactionKinetics, domain, w_star: float) -> "MassRelation":
        """Choose ``M`` so that the stationary half-width equals ``w_star``."""
        hm, _, hp = kin.equilibrium_branches(kin.v_star)
        M = kin.v_star * domain.area + domain.perimeter * hm + 2.0 * w_star * (hp - hm)
        return cls(kin, M, domain.perimeter, domain.area)

    def admissible_range(self) -> tuple[float, float]:
        hm, _, hp = self.kin.equilibrium_branches(self.kin.v_star)
        base = self.kin.v_star * self.area
        return base + self.L * hm, base + self.L * hp

    def F(self, v0: float, w: float) -> float:
        hm, _, hp = self.kin.equilibrium_branches(v0)
        return 2.0 * w * hp + (self.L - 2.0 * w) * hm + self.area * v0 - self.M

    def dF_dv0(self, v0: float, w: float) -> float:
        dm, dp = self.kin.branch_slopes(v0)
        return 2.0 * w * dp + (self.L - 2.0 * w) * dm + self.area

    def v0_of_w(self, w: float) -> float:
        """Bulk level ``v0(w)`` solving ``F(v0, w) = 0``."""
        w = float(w)
        if not 0.0 < w < 0.5 * self.L:
            raise MassInfeasibleError(f"half-width w={w} outside (0, L/2)")
        kin = self.kin
        span = kin.v_max - kin.v_min
        lo, hi = kin.v_min + 1e-9 * span, kin.v_max - 1e-9 * span
        if self.F(lo, w) > 0.0 or self.F(hi, w) < 0.0:
            raise MassInfeasibleError(f"no bulk level in the bistable range balances mass at w={w}")
        v = kin.v_star
        for _ in range(50):
            Fv = self.F(v, w)
            if Fv > 0.0:
                hi = v
            else:
                lo = v
            step = Fv / self.dF_dv0(v, w)
            trial = v - step
            if not lo < trial < hi:
                trial = 0.5 * (lo + hi)
            if abs(trial - v) < 1e-15 * max(1.0, abs(v)):
                return trial
            v = trial
        return v

    def feasible_w_interval(self) -> tuple[float, float]:
        """Half-widths whose mass-balancing bulk level stays in the bistable range.

        ``F(v, w) = 0`` is linear in ``w``; the endpoints come from ``v -> v_max``
        (small pulses) and ``v -> v_min`` (large pulses), clipped to ``(0, L/2)``.
        """
        kin = self.kin
        span = kin.v_max - kin.v_min

        def w_at(v):
            hm, _, hp = kin.equilibrium_branches(v)
            return (self.M - self.L * hm - self.area * v) / (2.0 * (hp - hm))

        lo = w_at(kin.v_max - 1e-9 * span)
        hi = w_at(kin.v_min + 1e-9 * span)
        return max(lo, 0.0), min(hi, 0.5 * self.L)

    def v0_prime(self, w: float) -> float:
        v0 = self.v0_of_w(w)
        hm, _, hp = self.kin.equilibrium_branches(v0)
        return -2.0 * (hp - hm) / self.dF_dv0(v0, w)

    @property
    def w_star(self) -> float:
        kin = self.kin
        hm, _, hp = kin.equilibrium_branches(kin.v_star)
        return (self.M - kin.v_star * self.area - self.L * hm) / (2.0 * (hp - hm))

    def stability_eigenvalue(self) -> float:
        """Linearisation ``J'(v*) v0'(w*) / kappa(v*)`` of the wave-pinning ODE."""
        kin = self.kin
        return kin.J_prime_star * self.v0_prime(self.w_star) / kin.kappa_star


def w_star(rel: MassRelation) -> float:
    return rel.w_star


def stability_eigenvalue(rel: MassRelation) -> float:
    return rel.stability_eigenvalue()
