"""Planar domains given as conformal images of the unit disk or of an annulus.

Three families are supported:

* ``disk``: the identity map on the unit disk.
* ``dumbbell``: ``f(z) = (1-k) z / (1 - k z^2)`` on the unit disk, ``0 <= k < 1``.
* ``perforated_disk``: the unit disk minus the closed disk ``B(c, r)`` centred
  at ``(c, 0)``, written as the Moebius image ``f(z) = (z + b)/(1 + b z)`` of the
  annulus ``a < |z| < 1``.

Only the outer boundary carries the surface variable; all arc-length
quantities (``S``, ``Theta``, ``L``) refer to it.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ._quadrature import adaptive_gl
from .errors import DomainParameterError, GeometrySolveError

TWO_PI = 2.0 * np.pi
ARC_TABLE_NODES = 4096
DEGENERACY_MARGIN = 1e-6


class DomainKind(str, enum.Enum):
    DISK = "disk"
    DUMBBELL = "dumbbell"
    PERFORATED_DISK = "perforated_disk"


@dataclass(frozen=True)
class DomainSpec:
    kind: DomainKind
    k: float = 0.0
    c: float = 0.0
    r: float = 0.0

    @classmethod
    def from_mapping(cls, data: Mapping) -> "DomainSpec":
        kind = DomainKind(str(data["kind"]).lower())
        return cls(kind, float(data.get("k", 0.0)), float(data.get("c", 0.0)), float(data.get("r", 0.0)))


def annulus_forward(a: float, b: float) -> tuple[float, float]:
    """Hole centre ``c`` and radius ``r`` of the Moebius image of ``a < |z| < 1``."""
    den = 1.0 - a * a * b * b
    return b * (1.0 - a * a) / den, a * (1.0 - b * b) / den


def _a_given_b(r: float, b: float) -> float:
    # r b^2 a^2 + (1 - b^2) a - r = 0, positive root
    if b == 0.0:
        return r
    p = 1.0 - b * b
    disc = p * p + 4.0 * r * r * b * b
    return 2.0 * r / (p + np.sqrt(disc))


def annulus_parameters(c: float, r: float, tol: float = 1e-14, max_iter: int = 100) -> tuple[float, float]:
    """Invert :func:`annulus_forward`: find ``(a, b)`` with ``c(a,b)=c``, ``r(a,b)=r``.

    Damped Newton from ``(a, b) = (r, c)``; falls back to bisection on ``b``
    with ``a`` eliminated through the radius equation.
    """
    if c == 0.0:
        return r, 0.0
    x = np.array([r, c], dtype=float)

    def residual(v):
        cc, rr = annulus_forward(v[0], v[1])
        return np.array([cc - c, rr - r])

    res = residual(x)
    for _ in range(max_iter):
        nrm = np.max(np.abs(res))
        if nrm < tol:
            return float(x[0]), float(x[1])
        a, b = x
        den = 1.0 - a * a * b * b
        # partial derivatives of the forward map
        dc_da = b * (-2.0 * a * den + (1.0 - a * a) * 2.0 * a * b * b) / den**2
        dc_db = ((1.0 - a * a) * den + b * (1.0 - a * a) * 2.0 * a * a * b) / den**2
        dr_da = ((1.0 - b * b) * den + a * (1.0 - b * b) * 2.0 * a * b * b) / den**2
        dr_db = a * (-2.0 * b * den + (1.0 - b * b) * 2.0 * a * a * b) / den**2
        jac = np.array([[dc_da, dc_db], [dr_da, dr_db]])
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-6:
            trial = x + lam * step
            if 0.0 < trial[0] < 1.0 and 0.0 <= trial[1] < 1.0:
                tres = residual(trial)
                if np.max(np.abs(tres)) < nrm:
                    x, res = trial, tres
                    break
            lam *= 0.5
        else:
            break
    return _annulus_bisection(c, r, tol)


def _annulus_bisection(c: float, r: float, tol: float) -> tuple[float, float]:
    lo, hi = 0.0, 1.0 - 1e-15
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        cc, _ = annulus_forward(_a_given_b(r, mid), mid)
        if cc < c:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    b = 0.5 * (lo + hi)
    a = _a_given_b(r, b)
    cc, rr = annulus_forward(a, b)
    resid = max(abs(cc - c), abs(rr - r))
    if resid > max(tol, 1e-12):
        raise GeometrySolveError("annulus parameter solve did not converge", resid)
    return a, b


class ConformalDomain:
    """Immutable description of a conformal domain and its outer boundary.

    Build instances with :func:`build_domain`.
    """

    def __init__(self, kind: DomainKind, k: float = 0.0, c: float = 0.0, r: float = 0.0):
        self.kind = DomainKind(kind)
        self.k = float(k)
        self.c = float(c)
        self.r = float(r)
        if self.kind is DomainKind.PERFORATED_DISK:
            self.a, self.b = annulus_parameters(self.c, self.r)
        else:
            self.a, self.b = 0.0, 0.0
        self._build_arc_table()
        self.area = bulk_area(self)

    # -- the map ---------------------------------------------------------
    @property
    def simply_connected(self) -> bool:
        return self.kind is not DomainKind.PERFORATED_DISK

    def spec(self) -> DomainSpec:
        return DomainSpec(self.kind, self.k, self.c, self.r)

    def map(self, z):
        z = np.asarray(z, dtype=complex)
        if self.kind is DomainKind.DUMBBELL:
            k = self.k
            return (1.0 - k) * z / (1.0 - k * z * z)
        if self.kind is DomainKind.PERFORATED_DISK:
            b = self.b
            return (z + b) / (1.0 + b * z)
        return z

    def dmap(self, z):
        z = np.asarray(z, dtype=complex)
        if self.kind is DomainKind.DUMBBELL:
            k = self.k
            return (1.0 - k) * (1.0 + k * z * z) / (1.0 - k * z * z) ** 2
        if self.kind is DomainKind.PERFORATED_DISK:
            b = self.b
            return (1.0 - b * b) / (1.0 + b * z) ** 2
        return np.ones_like(z)

    def d2_over_d1(self, z):
        """``f''(z) / f'(z)``."""
        z = np.asarray(z, dtype=complex)
        if self.kind is DomainKind.DUMBBELL:
            k = self.k
            return 2.0 * k * z / (1.0 + k * z * z) + 4.0 * k * z / (1.0 - k * z * z)
        if self.kind is DomainKind.PERFORATED_DISK:
            return -2.0 * self.b / (1.0 + self.b * z)
        return np.zeros_like(z)

    def difference_quotient(self, z, zeta):
        """``(f(z) - f(zeta)) / (z - zeta)`` in cancellation-free closed form."""
        z = np.asarray(z, dtype=complex)
        zeta = np.asarray(zeta, dtype=complex)
        if self.kind is DomainKind.DUMBBELL:
            k = self.k
            return (1.0 - k) * (1.0 + k * z * zeta) / ((1.0 - k * z * z) * (1.0 - k * zeta * zeta))
        if self.kind is DomainKind.PERFORATED_DISK:
            b = self.b
            return (1.0 - b * b) / ((1.0 + b * z) * (1.0 + b * zeta))
        return np.ones(np.broadcast(z, zeta).shape, dtype=complex)

    # -- boundary metric -------------------------------------------------
    def rho(self, theta):
        """Boundary metric ``|f'(e^{i theta})|`` from the closed form of each family."""
        theta = np.asarray(theta, dtype=float)
        if self.kind is DomainKind.DUMBBELL:
            k = self.k
            q = (1.0 - k) ** 2
            return (1.0 - k) * np.sqrt(q + 4.0 * k * np.cos(theta) ** 2) / (q + 4.0 * k * np.sin(theta) ** 2)
        if self.kind is DomainKind.PERFORATED_DISK:
            b = self.b
            return (1.0 - b * b) / (1.0 + 2.0 * b * np.cos(theta) + b * b)
        return np.ones_like(theta)

    def log_rho_prime(self, theta):
        """``d/dtheta log rho = -Im(z f''/f')`` at ``z = e^{i theta}``."""
        z = np.exp(1j * np.asarray(theta, dtype=float))
        return -np.imag(z * self.d2_over_d1(z))

    # -- arc length ------------------------------------------------------
    def _build_arc_table(self) -> None:
        nodes = np.linspace(0.0, TWO_PI, ARC_TABLE_NODES + 1)
        panels = adaptive_gl(self.rho, nodes[:-1], nodes[1:])
        cum = np.concatenate([[0.0], np.cumsum(panels)])
        self.arc_theta = nodes
        self.arc_s = cum
        self.perimeter = float(cum[-1])

    @property
    def L(self) -> float:
        return self.perimeter

    def arclength(self, theta):
        """``S(theta)``; continuous across periods, ``S(theta + 2 pi) = S(theta) + L``."""
        theta = np.asarray(theta, dtype=float)
        n, red = np.divmod(theta, TWO_PI)
        j = np.minimum((red / TWO_PI * ARC_TABLE_NODES).astype(int), ARC_TABLE_NODES - 1)
        base = self.arc_s[j]
        part = adaptive_gl(self.rho, self.arc_theta[j].ravel(), red.ravel()).reshape(red.shape)
        return n * self.perimeter + base + part

    def theta_of(self, s, max_newton: int = 8):
        """Inverse arc-length map ``Theta = S^{-1}``, continuous across periods."""
        s = np.asarray(s, dtype=float)
        L = self.perimeter
        n, red = np.divmod(s, L)
        j = np.clip(np.searchsorted(self.arc_s, red, side="right") - 1, 0, ARC_TABLE_NODES - 1)
        t0, t1 = self.arc_theta[j], self.arc_theta[j + 1]
        s0, s1 = self.arc_s[j], self.arc_s[j + 1]
        theta = t0 + (red - s0) / (s1 - s0) * (t1 - t0)
        for _ in range(max_newton):
            resid = s0 + adaptive_gl(self.rho, t0.ravel(), theta.ravel()).reshape(theta.shape) - red
            delta = resid / self.rho(theta)
            theta = np.clip(theta - delta, t0, t1)
            if np.all(np.abs(delta) < 1e-15):
                break
        return theta + TWO_PI * n

    # -- boundary points -------------------------------------------------
    def boundary_point(self, s):
        """Position ``f(e^{i Theta(s)})`` as ``(..., 2)`` array and signed curvature."""
        theta = self.theta_of(s)
        z = np.exp(1j * theta)
        w = self.map(z)
        kappa = np.real(1.0 + z * self.d2_over_d1(z)) / np.abs(self.dmap(z))
        return np.stack([w.real, w.imag], axis=-1), kappa

    def curvature(self, s):
        return self.boundary_point(s)[1]

    def __repr__(self) -> str:
        if self.kind is DomainKind.DUMBBELL:
            par = f"k={self.k}"
        elif self.kind is DomainKind.PERFORATED_DISK:
            par = f"c={self.c}, r={self.r}, a={self.a:.6g}, b={self.b:.6g}"
        else:
            par = ""
        return f"ConformalDomain({self.kind.value}{', ' if par else ''}{par}, L={self.perimeter:.10g})"


def _validate(kind: DomainKind, k: float, c: float, r: float) -> None:
    if kind is DomainKind.DUMBBELL:
        if not 0.0 <= k < 1.0:
            raise DomainParameterError(f"dumbbell requires 0 <= k < 1, got k={k}")
        if k > 1.0 - DEGENERACY_MARGIN:
            raise DomainParameterError(f"k={k} within {DEGENERACY_MARGIN} of the tangent-disk limit k=1")
    elif kind is DomainKind.PERFORATED_DISK:
        if not 0.0 < r < 1.0:
            raise DomainParameterError(f"perforated disk requires 0 < r < 1, got r={r}")
        if not 0.0 <= c < 1.0 - r:
            raise DomainParameterError(f"perforated disk requires 0 <= c < 1 - r, got c={c}, r={r}")
        if c > 1.0 - r - DEGENERACY_MARGIN:
            raise DomainParameterError(f"hole within {DEGENERACY_MARGIN} of touching the outer boundary")


def build_domain(spec: DomainSpec | Mapping | str, **params) -> ConformalDomain:
    """Construct a :class:`ConformalDomain` from a descriptor.

    ``spec`` may be a :class:`DomainSpec`, a mapping with ``kind`` and
    parameters, or a kind name with parameters passed as keywords.
    """
    if isinstance(spec, (str, DomainKind)):
        spec = DomainSpec(DomainKind(spec), **{key: float(val) for key, val in params.items()})
    elif not isinstance(spec, DomainSpec):
        spec = DomainSpec.from_mapping(spec)
    _validate(spec.kind, spec.k, spec.c, spec.r)
    return ConformalDomain(spec.kind, spec.k, spec.c, spec.r)


def boundary_metric(domain: ConformalDomain, theta):
    return domain.rho(theta)


def arclength(domain: ConformalDomain, theta):
    return domain.arclength(theta)


def theta_of(domain: ConformalDomain, s):
    return domain.theta_of(s)


def boundary_point(domain: ConformalDomain, s):
    return domain.boundary_point(s)


def _shoelace(f, dfz, radius: float, n: int) -> float:
    theta = np.arange(n) * (TWO_PI / n)
    z = radius * np.exp(1j * theta)
    # x dy - y dx = Im(conj(w) dw), dw = f'(z) i z dtheta
    integrand = np.imag(np.conj(f(z)) * dfz(z) * 1j * z)
    return 0.5 * integrand.mean() * TWO_PI


def _periodic_trapezoid(f, dfz, radius: float, rtol: float = 1e-14) -> float:
    n = 64
    prev = _shoelace(f, dfz, radius, n)
    while n < 2**22:
        n *= 2
        cur = _shoelace(f, dfz, radius, n)
        if abs(cur - prev) <= rtol * abs(cur):
            return cur
        prev = cur
    return cur


def bulk_area(domain: ConformalDomain) -> float:
    """Area of the bulk by the boundary integral ``(1/2) closed-int (x dy - y dx)``."""
    outer = _periodic_trapezoid(domain.map, domain.dmap, 1.0)
    if domain.kind is DomainKind.PERFORATED_DISK:
        outer -= _periodic_trapezoid(domain.map, domain.dmap, domain.a)
    return outer
