"""Reduced pulse dynamics: fast wave-pinning of the half-width, slow drift of the centre.

    fast:  dw/dt  = J(v0(w)) / kappa(v0(w)),                 ds0/dt = 0
    slow:  ds0/dt = -eps^2 dh(v*) J'(v*) / (4 kappa* D) E'(s0; w*),  w = w*
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bifurcation import critical_points
from .errors import (
    BistableRangeError,
    DomainParameterError,
    FlatPotentialError,
    MassInfeasibleError,
    StiffnessError,
    UnstablePinningError,
)
from .geometry import ConformalDomain
from .greens import PotentialField
from .kinetics import MassRelation, ReactionKinetics

RK_TOL = 1e-8
HANDOFF_RATE = 1e-8
STABILITY_CAP = 2.0


@dataclass
class PulseState:
    s0: float
    w: float
    t: float = 0.0

    @property
    def s1(self) -> float:
        return self.s0 - self.w

    @property
    def s2(self) -> float:
        return self.s0 + self.w


@dataclass
class ReducedConfig:
    eps: float
    D: float
    kin: ReactionKinetics
    rel: MassRelation
    domain: ConformalDomain
    kappa: KappaCache = field(init=False, repr=False)
    potential: PotentialField = field(init=False, repr=False)

    def __post_init__(self):
        if not self.eps > 0.0:
            raise DomainParameterError(f"eps must be positive, got {self.eps}")
        if not self.D > 0.0:
            raise DomainParameterError(f"D must be positive, got {self.D}")
        self.kappa = self.kin.kappa_cache
        self.potential = PotentialField(self.domain, self.rel.w_star)

    @classmethod
    def build(cls, domain: ConformalDomain, kin: ReactionKinetics, eps: float, D: float = 1.0,
              M: float | None = None, w_star: float | None = None) -> "ReducedConfig":
        if (M is None) == (w_star is None):
            raise DomainParameterError("give exactly one of M or w_star")
        if M is None:
            rel = MassRelation.with_w_star(kin, domain, w_star)
        else:
            rel = MassRelation.for_domain(kin, domain, M)
        return cls(eps, D, kin, rel, domain)

    @property
    def L(self) -> float:
        return self.domain.perimeter

    @property
    def w_star(self) -> float:
        return self.rel.w_star

    @property
    def drift_prefactor(self) -> float:
        """``eps^2 dh(v*) J'(v*) / (4 kappa* D)``."""
        kin = self.kin
        return self.eps**2 * kin.delta_h(kin.v_star) * kin.J_prime_star / (4.0 * kin.kappa_star * self.D)


def _check_state(state: PulseState, L: float) -> None:
    if not 0.0 < state.w < 0.5 * L:
        raise DomainParameterError(f"half-width must lie in (0, L/2) = (0, {0.5 * L:.10g}), got {state.w}")


def fast_rhs(state: PulseState, cfg: ReducedConfig) -> float:
    """``dw/dt`` on the wave-pinning time scale."""
    _check_state(state, cfg.L)
    v0 = cfg.rel.v0_of_w(state.w)
    return cfg.kin.J(v0) / cfg.kappa(v0)


def slow_rhs(state: PulseState, cfg: ReducedConfig) -> float:
    """``ds0/dt`` on the metastable time scale (``w`` is frozen at ``w*``)."""
    if cfg.kin.J_prime_star < 0.0:
        raise UnstablePinningError("J'(v*) < 0: the pinned width w* is unstable and the drift law does not apply")
    return -cfg.drift_prefactor * float(cfg.potential.derivative(state.s0 % cfg.L, 1))


@dataclass
class Trajectory:
    t: np.ndarray
    s0: np.ndarray
    w: np.ndarray
    E: np.ndarray
    mode: str
    fast_duration: float = math.nan

    def final(self) -> PulseState:
        return PulseState(float(self.s0[-1]), float(self.w[-1]), float(self.t[-1]))


def _rk4(fun, t, y, h):
    k1 = fun(y)
    k2 = fun(y + 0.5 * h * k1)
    k3 = fun(y + 0.5 * h * k2)
    k4 = fun(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate_scalar(fun, y0: float, t0: float, t_end: float, tol: float, h0: float,
                      stop_rate: float | None = None, wrap: float | None = None):
    """Adaptive classic RK4 by step doubling; returns accepted (t, y) pairs."""
    ts, ys = [t0], [y0]
    t, y, h = t0, y0, h0
    span = t_end - t0
    f_y = fun(y)  # raises on infeasible initial data
    while t < t_end:
        # keep h |df/dy| inside the monotone part of the RK4 stability interval
        dy = 1e-7 * max(1.0, abs(y))
        try:
            jac = abs(fun(y + dy) - f_y) / dy
        except (MassInfeasibleError, BistableRangeError, DomainParameterError):
            jac = abs(fun(y - dy) - f_y) / dy
        if jac > 0.0:
            h = min(h, STABILITY_CAP / jac)
        h = min(h, t_end - t)
        try:
            full = _rk4(fun, t, y, h)
            half = _rk4(fun, t, y, 0.5 * h)
            two = _rk4(fun, t + 0.5 * h, half, 0.5 * h)
            err = abs(two - full) / 15.0
        except (MassInfeasibleError, BistableRangeError, DomainParameterError):
            # a trial stage left the feasible set: treat as a rejected step
            err = math.inf
        if err <= tol:
            t += h
            y = two
            if wrap is not None:
                y %= wrap
            ts.append(t)
            ys.append(y)
            f_y = fun(y)
            if stop_rate is not None and abs(f_y) < stop_rate:
                break
        factor = 4.0 if err == 0.0 else 0.25 if err == math.inf else min(4.0, max(0.1, 0.9 * (tol / err) ** 0.2))
        h *= factor
        if h < 1e-12 * span and t < t_end:
            raise StiffnessError(f"step size {h:.3e} underflowed at t={t:.6g}")
    return np.array(ts), np.array(ys)


def integrate(state: PulseState, cfg: ReducedConfig, t_end: float, mode: str = "composite",
              tol: float = RK_TOL, rest_rate: float | None = None) -> Trajectory:
    """Integrate the reduced dynamics to ``t_end``.

    ``fast`` evolves ``w`` at fixed ``s0``; ``slow`` evolves ``s0`` with ``w = w*``;
    ``composite`` runs ``fast`` until ``|dw/dt| < 1e-8`` and then ``slow`` for the
    remaining time. ``rest_rate`` stops the slow phase once ``|ds0/dt|`` falls
    below it.
    """
    if not t_end > 0.0:
        raise DomainParameterError(f"t_end must be positive, got {t_end}")
    if mode not in ("fast", "slow", "composite"):
        raise DomainParameterError(f"unknown mode {mode!r}")
    _check_state(state, cfg.L)
    L = cfg.L
    t0 = state.t
    pf = cfg.potential

    def fast_fun(w):
        return fast_rhs(PulseState(state.s0, w), cfg)

    def slow_fun(s):
        return slow_rhs(PulseState(s, cfg.w_star), cfg)

    if mode == "fast":
        ts, ws = _integrate_scalar(fast_fun, state.w, t0, t0 + t_end, tol, min(1e-2 * t_end, 0.1))
        s0s = np.full(ts.size, state.s0 % L)
        return Trajectory(ts, s0s, ws, np.full(ts.size, np.nan), "fast", float(ts[-1] - t0))
    if mode == "slow":
        ts, ss = _integrate_scalar(slow_fun, state.s0 % L, t0, t0 + t_end, tol, 1e-3 * t_end,
                                   stop_rate=rest_rate, wrap=L)
        return Trajectory(ts, ss, np.full(ts.size, cfg.w_star), np.asarray(pf(ss)), "slow", 0.0)
    tf, wf = _integrate_scalar(fast_fun, state.w, t0, t0 + t_end, tol, min(1e-3 * t_end, 0.1), stop_rate=HANDOFF_RATE)
    fast_duration = float(tf[-1] - t0)
    s_fast = np.full(tf.size, state.s0 % L)
    E_fast = np.full(tf.size, np.nan)
    remaining = t0 + t_end - tf[-1]
    if remaining <= 0.0:
        return Trajectory(tf, s_fast, wf, E_fast, "composite", fast_duration)
    ts, ss = _integrate_scalar(slow_fun, state.s0 % L, tf[-1], t0 + t_end, tol, 1e-3 * remaining,
                               stop_rate=rest_rate, wrap=L)
    return Trajectory(
        np.concatenate([tf, ts[1:]]),
        np.concatenate([s_fast, ss[1:]]),
        np.concatenate([wf, np.full(ts.size - 1, cfg.w_star)]),
        np.concatenate([E_fast, np.asarray(pf(ss[1:]))]),
        "composite",
        fast_duration,
    )


@dataclass(frozen=True)
class Equilibrium:
    s0: float
    w: float
    tag: str  # "stable", "unstable", "degenerate" or "neutral"
    flat: bool = False


def pulse_equilibria(cfg: ReducedConfig, grid_n: int = 512) -> list[Equilibrium]:
    """Stationary pulse positions at ``w*`` with their stability under the drift law."""
    if cfg.kin.J_prime_star == 0.0:
        raise UnstablePinningError("J'(v*) = 0: stability undefined")
    w = cfg.w_star
    try:
        cps = critical_points(cfg.potential, grid_n=grid_n)
    except FlatPotentialError:
        return [Equilibrium(math.nan, w, "neutral", flat=True)]
    out = []
    for cp in cps:
        if cp.kind == "degenerate":
            tag = "degenerate"
        elif (cp.kind == "min") == (cfg.kin.J_prime_star > 0.0):
            tag = "stable"
        else:
            tag = "unstable"
        out.append(Equilibrium(cp.s0, w, tag))
    return out
