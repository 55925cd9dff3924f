"""Neumann Green's function traces and the pulse-position potential ``E(s0; w)``.

``E(s0; w) = 2 G(s0-w, s0+w) - H(s0-w, s0-w) - H(s0+w, s0+w)`` where ``G`` is the
boundary trace of the Neumann Green's function and ``H`` its regular part. For
conformal images of the disk the unknown Poisson correction cancels and

    E = -(1/pi) log(4 rho(t1) rho(t2) sin^2((t2 - t1)/2)),   t_i = Theta(s_i);

for the annulus the cosine series of the annulus Green's function is added.
The additive constant ``C_w`` is fixed to zero: only ``dE/ds0`` drives the
dynamics.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainParameterError, SingularEvaluationError, UnsupportedDomainError
from .geometry import TWO_PI, ConformalDomain, DomainKind

DEFAULT_SERIES_TOL = 1e-15
NEAR_COINCIDENT = 1e-3


def disk_trace_green(theta, phi):
    """Neumann Green's function of the unit disk with both points on the circle."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    half = np.abs(np.sin(0.5 * (theta - phi)))
    if np.any(half == 0.0):
        raise SingularEvaluationError("disk Green's function evaluated at coincident points")
    return -np.log(2.0 * half) / np.pi + 1.0 / (8.0 * np.pi)


def annulus_terms(a: float, series_tol: float = DEFAULT_SERIES_TOL) -> int:
    """Number of series terms so that the geometric tail stays below ``series_tol``.

    Terms are bounded by ``4 a^{2m} / (1 - a^{2m})^2``; the tail after ``m`` is
    at most that bound divided by ``1 - a^2``.
    """
    if not 0.0 < a < 1.0:
        raise DomainParameterError(f"annulus inner radius must lie in (0, 1), got a={a}")
    m = 1
    while True:
        q = a ** (2 * m)
        if 4.0 * q / (1.0 - q) ** 2 < series_tol * (1.0 - a * a):
            return m
        m += 1


def annulus_trace_green(a: float, theta, phi, series_tol: float = DEFAULT_SERIES_TOL,
                        method: str = "sum"):
    """Annulus Neumann Green's function, both points on the outer circle ``|z| = 1``.

    ``method="sum"`` adds ``(2/pi) sum_n a^{2n} cos(n phi) / (n (1 - a^{2n}))``
    term by term; ``method="product"`` uses the resummed form
    ``-(1/pi) sum_m log(1 - 2 a^{2m} cos(phi) + a^{4m})``. The constant ``C0`` is 0.
    """
    if not 0.0 < a < 1.0:
        raise DomainParameterError(f"annulus inner radius must lie in (0, 1), got a={a}")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    delta = theta - phi
    base = -np.log(2.0 * np.abs(np.sin(0.5 * delta))) / np.pi
    if np.any(np.sin(0.5 * delta) == 0.0):
        raise SingularEvaluationError("annulus Green's function evaluated at coincident points")
    return base + annulus_series(a, delta, series_tol, method)


def annulus_series(a: float, delta, series_tol: float = DEFAULT_SERIES_TOL, method: str = "sum"):
    """Smooth part ``(2/pi) sum_n a^{2n} cos(n delta) / (n (1 - a^{2n}))``."""
    delta = np.asarray(delta, dtype=float)
    if method == "product":
        m = np.arange(1, annulus_terms(a, series_tol) + 1)
        q = a ** (2 * m)
        arg = 1.0 - 2.0 * q * np.cos(delta)[..., None] + q * q
        return -np.sum(np.log(arg), axis=-1) / np.pi
    if method != "sum":
        raise ValueError(f"unknown summation method {method!r}")
    # a^{2n}/(n(1-a^{2n})) <= a^{2n}/(n (1-a^2)): stop when the geometric tail is below tol
    a2 = a * a
    n_max = 1
    while (2.0 / np.pi) * a2 ** n_max / ((1.0 - a2) ** 2) >= series_tol:
        n_max += 1
    n = np.arange(1, n_max + 1)
    coef = (2.0 / np.pi) * a2**n / (n * (1.0 - a2**n))
    return np.cos(np.multiply.outer(delta, n)) @ coef


@dataclass(frozen=True)
class PotentialField:
    """The potential ``E(.; w)`` on one domain for one half-width."""

    domain: ConformalDomain
    w: float
    series_tol: float = DEFAULT_SERIES_TOL
    C_w: float = field(default=0.0, init=False)

    def __post_init__(self):
        L = self.domain.perimeter
        if not 0.0 < self.w < 0.5 * L:
            raise DomainParameterError(f"half-width must lie in (0, L/2) = (0, {0.5 * L:.10g}), got {self.w}")
        if self.w < NEAR_COINCIDENT or 0.5 * L - self.w < NEAR_COINCIDENT:
            warnings.warn(
                f"interfaces nearly coincide (w={self.w}, L/2={0.5 * L}); log term dominates E",
                RuntimeWarning,
                stacklevel=2,
            )

    @property
    def L(self) -> float:
        return self.domain.perimeter

    def __call__(self, s0):
        return potential(self, s0)

    def derivative(self, s0, order: int = 1):
        return potential_derivative(self, s0, order)


def _interface_angles(pf: PotentialField, s0):
    s0 = np.asarray(s0, dtype=float)
    # reduce s0 so that both Theta evaluations share one period
    s0 = np.mod(s0, pf.L)
    t1 = pf.domain.theta_of(s0 - pf.w)
    t2 = pf.domain.theta_of(s0 + pf.w)
    return t1, t2


def potential_simply_connected(domain: ConformalDomain, w: float, s0):
    """Generic formula for conformal images of the disk (any map)."""
    pf = PotentialField(domain, w)
    t1, t2 = _interface_angles(pf, s0)
    return -np.log(4.0 * domain.rho(t1) * domain.rho(t2) * np.sin(0.5 * (t2 - t1)) ** 2) / np.pi


def potential_annulus_generic(domain: ConformalDomain, w: float, s0, series_tol: float = DEFAULT_SERIES_TOL):
    """Generic annulus formula (log term plus cosine series), constant ``C_w = 0``."""
    pf = PotentialField(domain, w, series_tol)
    t1, t2 = _interface_angles(pf, s0)
    base = -np.log(4.0 * domain.rho(t1) * domain.rho(t2) * np.sin(0.5 * (t2 - t1)) ** 2) / np.pi
    return base + 2.0 * annulus_series(domain.a, t2 - t1, series_tol)


def _dumbbell_closed_form(k: float, t1, t2):
    q = (1.0 - k) ** 2
    c1, c2 = np.cos(t1) ** 2, np.cos(t2) ** 2
    s1, s2 = np.sin(t1) ** 2, np.sin(t2) ** 2
    arg = (
        4.0 * q * np.sin(0.5 * (t2 - t1)) ** 2
        * np.sqrt((q + 4.0 * k * c1) * (q + 4.0 * k * c2))
        / ((q + 4.0 * k * s1) * (q + 4.0 * k * s2))
    )
    return -np.log(arg) / np.pi


def _hole_weights(pf: PotentialField):
    a, b = pf.domain.a, pf.domain.b
    m = np.arange(1, annulus_terms(a, pf.series_tol) + 1)
    q = a ** (2 * m)
    return 4.0 * q * (1.0 - b * b) ** 2 * np.sin(pf.w) ** 2 / (1.0 - q) ** 2


def hole_D(b: float, w: float, s):
    """``D(s) = (1 - 2b cos(s-w) + b^2)(1 - 2b cos(s+w) + b^2)``."""
    s = np.asarray(s, dtype=float)
    return (1.0 - 2.0 * b * np.cos(s - w) + b * b) * (1.0 - 2.0 * b * np.cos(s + w) + b * b)


def _hole_D_derivs(b: float, w: float, s):
    b0 = (1.0 + b * b) / (2.0 * b) * np.cos(w) if b > 0 else 0.0
    d1 = 8.0 * b * b * np.sin(s) * (b0 - np.cos(s))
    d2 = 8.0 * b * b * (np.cos(s) * (b0 - np.cos(s)) + np.sin(s) ** 2)
    return d1, d2


def _hole_phi_derivs(X, D):
    # phi(D) = -(2/pi) sum log(1 + X/D)
    Dx = D[..., None]
    phi = -(2.0 / np.pi) * np.sum(np.log1p(X / Dx), axis=-1)
    phi1 = (2.0 / np.pi) * np.sum(X / (Dx * (Dx + X)), axis=-1)
    phi2 = -(2.0 / np.pi) * np.sum(X * (2.0 * Dx + X) / (Dx**2 * (Dx + X) ** 2), axis=-1)
    return phi, phi1, phi2


def potential(pf: PotentialField, s0):
    """``E(s0; w)`` with ``C_w = 0``.

    For the perforated disk, ``s0`` is the polar angle on the outer unit
    circle, which coincides with its arc length.
    """
    s0 = np.asarray(s0, dtype=float)
    dom = pf.domain
    if dom.kind is DomainKind.PERFORATED_DISK:
        if dom.b == 0.0:
            return np.full(s0.shape, -(2.0 / np.pi) * np.sum(np.log1p(_hole_weights(pf))))
        D = hole_D(dom.b, pf.w, s0)
        return _hole_phi_derivs(_hole_weights(pf), D)[0]
    t1, t2 = _interface_angles(pf, s0)
    if dom.kind is DomainKind.DUMBBELL:
        return _dumbbell_closed_form(dom.k, t1, t2)
    return -np.log(4.0 * dom.rho(t1) * dom.rho(t2) * np.sin(0.5 * (t2 - t1)) ** 2) / np.pi


def _first_derivative_simply_connected(pf: PotentialField, s0):
    dom = pf.domain
    t1, t2 = _interface_angles(pf, s0)
    r1, r2 = dom.rho(t1), dom.rho(t2)
    g1, g2 = dom.log_rho_prime(t1), dom.log_rho_prime(t2)
    cot = 1.0 / np.tan(0.5 * (t2 - t1))
    return -(g1 / r1 + g2 / r2 + cot * (1.0 / r2 - 1.0 / r1)) / np.pi


def potential_derivative(pf: PotentialField, s0, order: int = 1):
    """``dE/ds0`` (analytic) or ``d2E/ds0^2``.

    The second derivative is analytic for the perforated disk and a
    Richardson-extrapolated central difference of the analytic first
    derivative otherwise (step ``1e-4 L``).
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    s0 = np.asarray(s0, dtype=float)
    dom = pf.domain
    if dom.kind is DomainKind.PERFORATED_DISK:
        if dom.b == 0.0:
            return np.zeros(s0.shape)
        D = hole_D(dom.b, pf.w, s0)
        _, p1, p2 = _hole_phi_derivs(_hole_weights(pf), D)
        d1, d2 = _hole_D_derivs(dom.b, pf.w, s0)
        return p1 * d1 if order == 1 else p2 * d1**2 + p1 * d2
    if dom.kind is DomainKind.DISK or (dom.kind is DomainKind.DUMBBELL and dom.k == 0.0):
        return np.zeros(s0.shape)
    if order == 1:
        return _first_derivative_simply_connected(pf, s0)
    h = 1e-4 * pf.L

    def central(step):
        return (_first_derivative_simply_connected(pf, s0 + step)
                - _first_derivative_simply_connected(pf, s0 - step)) / (2.0 * step)

    return (4.0 * central(0.5 * h) - central(h)) / 3.0


# fourth-order first-derivative weights on offsets -2, -1, 1, 2
_FD4_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_FD4_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


def regular_part_mixed_derivative(domain: ConformalDomain, s0, h: float | None = None):
    """``d_s d_s' H(s0, s0)`` for a simply connected conformal domain.

    Only the conformal log-ratio ``(1/pi) log|f(z)-f(zeta)|/|z-zeta|`` survives
    the mixed derivative; it is differentiated with a tensor fourth-order
    stencil. The ratio is evaluated through the closed-form difference
    quotient, which equals ``f'(z)`` on the diagonal.
    """
    if not domain.simply_connected:
        raise UnsupportedDomainError("mixed derivative of H is only implemented for simply connected domains")
    s0 = np.asarray(s0, dtype=float)
    if h is None:
        h = 1e-2 * domain.perimeter / TWO_PI
    off = _FD4_OFFSETS * h
    ts = domain.theta_of(s0[..., None] + off)  # (..., 4)
    z = np.exp(1j * ts)
    ratio = domain.difference_quotient(z[..., :, None], z[..., None, :])
    F = np.log(np.abs(ratio)) / np.pi
    W = np.multiply.outer(_FD4_WEIGHTS, _FD4_WEIGHTS) / h**2
    return np.sum(F * W, axis=(-2, -1))


def small_w_expansion(domain: ConformalDomain, s0, w: float):
    """Two-term small half-width expansion of ``E(s0; w)``.

    ``E ~ -(2/pi) log(2w) + (kappa(s0)^2/(3 pi) - 4 d_s d_s' H(s0, s0)) w^2``.
    """
    if not domain.simply_connected:
        raise UnsupportedDomainError("small-w expansion is only available for simply connected domains")
    if w > 0.2 * domain.perimeter:
        raise DomainParameterError(f"small-w expansion requires w <= 0.2 L, got w={w}")
    s0 = np.asarray(s0, dtype=float)
    kappa = domain.curvature(s0)
    coef = kappa**2 / (3.0 * np.pi) - 4.0 * regular_part_mixed_derivative(domain, s0)
    return -(2.0 / np.pi) * np.log(2.0 * w) + coef * w * w


def small_w_coefficient(domain: ConformalDomain, s0):
    """The ``w^2`` coefficient of :func:`small_w_expansion`."""
    kappa = domain.curvature(np.asarray(s0, dtype=float))
    return kappa**2 / (3.0 * np.pi) - 4.0 * regular_part_mixed_derivative(domain, s0)
