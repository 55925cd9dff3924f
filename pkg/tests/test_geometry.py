import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from pulsedyn import build_domain
from pulsedyn.errors import DomainParameterError
from pulsedyn.geometry import DomainSpec, annulus_forward, annulus_parameters, bulk_area


def curve(dom, s):
    return dom.boundary_point(s)[0]


def test_disk_is_trivial():
    dom = build_domain("disk")
    theta = np.linspace(0.0, 6.0, 13)
    assert dom.L == pytest.approx(2.0 * math.pi, abs=1e-12)
    assert np.allclose(dom.arclength(theta), theta, atol=1e-12)
    assert np.allclose(dom.curvature(theta), 1.0, atol=1e-12)
    assert dom.area == pytest.approx(math.pi, rel=1e-12)


def test_dumbbell_metric_closed_form():
    k = 0.5
    dom = build_domain("dumbbell", k=k)
    theta = np.linspace(0.0, 2.0 * math.pi, 9)
    expected = (1 - k) * np.sqrt(1 + 2 * k * np.cos(2 * theta) + k * k) / (1 - 2 * k * np.cos(2 * theta) + k * k)
    assert np.allclose(dom.rho(theta), expected, rtol=1e-13)
    assert dom.rho(0.0) == pytest.approx(3.0, rel=1e-13)


def test_perimeter_against_quadrature():
    dom = build_domain("dumbbell", k=0.5)
    L_quad, _ = quad(dom.rho, 0.0, 2.0 * math.pi, epsabs=1e-13, epsrel=1e-13, limit=400)
    assert dom.L == pytest.approx(L_quad, rel=1e-10)
    assert dom.L < 2.0 * math.pi * 3.0


@pytest.mark.parametrize("k", [0.0, 0.2, 0.5, 0.8])
def test_quarter_perimeter_maps_to_right_angle(k):
    dom = build_domain("dumbbell", k=k)
    assert dom.theta_of(0.25 * dom.L) == pytest.approx(0.5 * math.pi, abs=1e-10)


@pytest.mark.parametrize("spec", [dict(kind="dumbbell", k=0.7), dict(kind="perforated_disk", c=0.6, r=0.2)])
def test_arclength_round_trip_and_monotone(spec):
    dom = build_domain(spec)
    theta = np.linspace(0.0, 2.0 * math.pi, 1001, endpoint=False)
    s = dom.arclength(theta)
    assert np.all(np.diff(s) > 0.0)
    assert np.max(np.abs(dom.theta_of(s) - theta)) < 1e-10


@pytest.mark.parametrize("k", [0.0, 0.2, 0.5, 0.8])
def test_curvature_matches_finite_differences(k):
    dom = build_domain("dumbbell", k=k)
    # the neck shrinks to an arclength scale of min rho, so the stencil follows it
    h = 4e-3 * min(1.0, float(dom.rho(0.5 * math.pi)))
    worst = 0.0
    for s in np.linspace(0.0, dom.L, 64, endpoint=False):
        p = [curve(dom, s + j * h) for j in (-2, -1, 0, 1, 2)]
        # fourth-order stencils: the neck curvature varies on a short scale
        d1 = (p[0] - 8 * p[1] + 8 * p[3] - p[4]) / (12 * h)
        d2 = (-p[0] + 16 * p[1] - 30 * p[2] + 16 * p[3] - p[4]) / (12 * h**2)
        fd = (d1[0] * d2[1] - d1[1] * d2[0]) / np.hypot(*d1) ** 3
        kappa = dom.curvature(s)
        worst = max(worst, abs(fd - kappa) / max(1.0, abs(kappa)))
    assert worst < 1e-6


def test_boundary_point_at_origin_of_arclength():
    pos, _ = build_domain("dumbbell", k=0.3).boundary_point(0.0)
    assert np.allclose(pos, [1.0, 0.0], atol=1e-14)


@given(st.floats(0.0, 2.0 * math.pi), st.floats(0.01, 0.95))
@settings(max_examples=40, deadline=None)
def test_dumbbell_metric_symmetries(theta, k):
    dom = build_domain("dumbbell", k=k)
    r = dom.rho(theta)
    assert dom.rho(-theta) == pytest.approx(r, rel=1e-12)
    assert dom.rho(math.pi - theta) == pytest.approx(r, rel=1e-12)


def test_annulus_round_trip_grid():
    worst = 0.0
    for r in np.linspace(0.05, 0.6, 8):
        for c in np.linspace(0.05, 0.9 * (1 - r), 8):
            a, b = annulus_parameters(c, r)
            c2, r2 = annulus_forward(a, b)
            worst = max(worst, abs(c2 - c), abs(r2 - r))
    assert worst < 1e-10


def test_areas():
    assert build_domain("perforated_disk", c=0.4, r=0.2).area == pytest.approx(0.96 * math.pi, rel=1e-10)
    dom = build_domain("dumbbell", k=0.5)
    # Monte Carlo: a point is inside f(D) iff its preimage has modulus < 1
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1.1, 1.1, (400_000, 2))
    w = pts[:, 0] + 1j * pts[:, 1]
    k = dom.k
    # preimage of w under (1-k) z / (1 - k z^2): k w z^2 + (1-k) z - w = 0
    disc = np.sqrt((1 - k) ** 2 + 4 * k * w * w)
    z = np.where(np.abs(w) > 0, (-(1 - k) + disc) / (2 * k * np.where(w == 0, 1, w)), 0)
    z2 = np.where(np.abs(w) > 0, (-(1 - k) - disc) / (2 * k * np.where(w == 0, 1, w)), 0)
    inside = (np.abs(z) < 1) | (np.abs(z2) < 1)
    mc = inside.mean() * 2.2**2
    assert dom.area == pytest.approx(mc, abs=1e-2)
    assert bulk_area(dom) == dom.area


def test_perimeter_is_continuous_in_k():
    L1 = build_domain("dumbbell", k=0.4).L
    L2 = build_domain("dumbbell", k=0.4 + 1e-4).L
    assert abs(L2 - L1) < 1e-2


@pytest.mark.parametrize("params", [dict(kind="dumbbell", k=1.0), dict(kind="dumbbell", k=-0.1),
                                    dict(kind="dumbbell", k=1 - 1e-7),
                                    dict(kind="perforated_disk", c=0.5, r=0.5),
                                    dict(kind="perforated_disk", c=0.1, r=0.0)])
def test_invalid_parameters(params):
    with pytest.raises(DomainParameterError):
        build_domain(params)


def test_spec_round_trip():
    dom = build_domain(DomainSpec.from_mapping({"kind": "perforated_disk", "c": 0.3, "r": 0.2}))
    assert dom.spec() == DomainSpec.from_mapping({"kind": "PERFORATED_DISK", "c": 0.3, "r": 0.2})
