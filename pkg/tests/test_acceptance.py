"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Every test prints a single ``criterion N: PASS/FAIL`` line; the same lines are
repeated in the terminal summary.
"""
import math

import numpy as np
import pytest

from pulsedyn import PotentialField, build_domain
from pulsedyn.bifurcation import (
    K_STAR,
    c_b,
    critical_points,
    dumbbell_regime,
    g,
    hole_regime,
    k_b,
    mu,
    w_b,
)
from pulsedyn.greens import potential_simply_connected, small_w_expansion
from pulsedyn.kinetics import standing_wave_kappa
from pulsedyn.reduced import PulseState, ReducedConfig, integrate, pulse_equilibria
from pulsedyn.surface_pde import SurfaceConfig, crossing_time, run_and_compare


def _periodic_gap(x, y, L):
    return abs((x - y + 0.5 * L) % L - 0.5 * L)


# -- 1 ------------------------------------------------------------------------
def test_k_star_closed_form(criterion):
    k = (5.0 + 2.0 * math.sqrt(7.0) - 2.0 * math.sqrt(11.0 + 5.0 * math.sqrt(7.0))) / 3.0
    assert k == pytest.approx(K_STAR, abs=1e-15)
    residual = abs(g(mu(k)))
    ok = abs(k - 0.1480) <= 0.0005 and residual <= 1e-8
    criterion(1, ok, f"k* = {k:.10f} (target 0.1480 +- 0.0005), |g(mu(k*))| = {residual:.2e} (<= 1e-8)")


# -- 2 ------------------------------------------------------------------------
def test_dumbbell_subcritical_threshold(criterion):
    kb = k_b(0.7)
    criterion(2, abs(kb - 0.181) <= 0.005, f"k_b(0.7) = {kb:.6f} (target 0.181 +- 0.005)")


# -- 3 ------------------------------------------------------------------------
def test_hole_supercritical_threshold(criterion):
    cb = c_b(0.1, 0.5)
    criterion(3, abs(cb - 0.58) <= 0.01, f"c_b(0.1, 0.5) = {cb:.6f} (target 0.58 +- 0.01)")


# -- 4 ------------------------------------------------------------------------
def _match(closed, numeric, L):
    """Every closed-form point has a numeric twin within 1e-6 and of the same kind."""
    worst = 0.0
    for cp in closed:
        twins = [n for n in numeric if _periodic_gap(n.s0, cp.s0, L) <= 1e-6]
        if not twins or twins[0].kind != cp.kind:
            return False, math.inf
        worst = max(worst, _periodic_gap(twins[0].s0, cp.s0, L))
    return True, worst


def _dumbbell_sample(rng):
    while True:
        k = rng.uniform(0.03, 0.9)
        dom = build_domain("dumbbell", k=k)
        w = rng.uniform(0.05, 0.48) * dom.L
        if k > K_STAR:
            wb = w_b(k)
            if min(abs(w - wb), abs(w - (0.5 * dom.L - wb))) < 0.02:
                continue  # keep away from the degenerate boundary
        return dom, w


def _hole_sample(rng):
    while True:
        r = rng.uniform(0.05, 0.5)
        c = rng.uniform(0.05, 0.9) * (1.0 - r)
        w = rng.uniform(0.05, 0.95) * math.pi
        rep = hole_regime(c, r, w)
        tau = rep.thresholds["tau"]
        if min(abs(w - tau), abs(w - (math.pi - tau))) < 0.02:
            continue
        return build_domain("perforated_disk", c=c, r=r), w, rep


def test_closed_form_classification_matches_numeric(criterion):
    rng = np.random.default_rng(20240404)
    failures, worst = [], 0.0
    for _ in range(20):
        dom, w = _dumbbell_sample(rng)
        rep = dumbbell_regime(dom.k, w)
        numeric = critical_points(PotentialField(dom, w), dedupe=True)
        ok, err = _match(rep.critical_points, numeric, dom.L)
        if rep.clause in (2, 3):
            ok = ok and len(numeric) == 2  # exactly {0, L/4}
        else:
            interior = [n for n in numeric if 1e-6 < n.s0 < 0.25 * dom.L - 1e-6]
            ok = ok and any(n.kind == "max" for n in interior)
        worst = max(worst, err)
        if not ok:
            failures.append(("dumbbell", dom.k, w, rep.clause))
    for _ in range(20):
        dom, w, rep = _hole_sample(rng)
        numeric = critical_points(PotentialField(dom, w))
        ok, err = _match(rep.critical_points, numeric, dom.L)
        ok = ok and len(numeric) == len(rep.critical_points)
        worst = max(worst, err)
        if not ok:
            failures.append(("hole", dom.c, dom.r, w, rep.clause))
    criterion(4, not failures, f"40 samples, worst position gap {worst:.1e}, mismatches {failures}")


# -- 5 ------------------------------------------------------------------------
def test_threshold_width_asymptotics(criterion):
    near = w_b(K_STAR + 1e-3)
    ratio = w_b(0.999) / build_domain("dumbbell", k=0.999).L
    ok = near < 0.02 and abs(ratio - 0.25) <= 0.01
    criterion(5, ok, f"w_b(k*+1e-3) = {near:.5f} (< 0.02), w_b(0.999)/L = {ratio:.5f} (0.25 +- 0.01)")


# -- 6 ------------------------------------------------------------------------
def test_potential_correctness(criterion):
    disk = build_domain("disk")
    s = np.linspace(0.0, disk.L, 97, endpoint=False)
    E_disk = PotentialField(disk, 0.9)(s)
    a = float(np.ptp(E_disk))

    b = 0.0
    for k in (0.1, 0.44, 0.8):
        dom = build_domain("dumbbell", k=k)
        s = np.linspace(0.0, dom.L, 128, endpoint=False)
        for w in (0.3, 0.7):
            b = max(b, float(np.max(np.abs(PotentialField(dom, w)(s) - potential_simply_connected(dom, w, s)))))

    c = 0.0
    rng = np.random.default_rng(7)
    for dom, w in ((build_domain("dumbbell", k=0.44), 0.7), (build_domain("perforated_disk", c=0.7, r=0.1), 0.5)):
        pf = PotentialField(dom, w)
        for x in rng.uniform(0.05, dom.L - 0.05, 32):
            h = 1e-5
            fd = (pf(x + h) - pf(x - h)) / (2.0 * h)
            an = pf.derivative(x, 1)
            c = max(c, abs(an - fd) / max(abs(an), 1e-3))

    d = 0.0
    for k in (0.1, 0.44, 0.8):
        dom = build_domain("dumbbell", k=k)
        pf = PotentialField(dom, 0.7)
        d = max(d, abs(pf.derivative(0.0, 1)), abs(pf.derivative(0.25 * dom.L, 1)))

    ok = a <= 1e-10 and b <= 1e-10 and c <= 1e-6 and d <= 1e-9
    criterion(6, ok, f"(a) disk spread {a:.1e}; (b) closed vs generic {b:.1e}; (c) E' vs FD {c:.1e}; "
                     f"(d) trivial E' {d:.1e}")


# -- 7 ------------------------------------------------------------------------
def test_small_w_expansion(criterion):
    dom = build_domain("dumbbell", k=0.3)
    ok, lines = True, []
    for s0 in (0.0, 0.13 * dom.L, 0.25 * dom.L):
        errs = [abs(PotentialField(dom, w)(s0) - small_w_expansion(dom, s0, w)) / w**2 for w in (0.1, 0.05, 0.025)]
        ok = ok and errs[0] > errs[1] > errs[2]
        lines.append("/".join(f"{e:.2e}" for e in errs))
    criterion(7, ok, f"|E - expansion|/w^2 at w = 0.1/0.05/0.025: {'; '.join(lines)}")


# -- 8 ------------------------------------------------------------------------
def test_kinetics_cross_check(criterion, kin):
    kappa_shoot = kin.front(kin.v_star).kappa
    kappa_quad = standing_wave_kappa(kin)
    rel_err = abs(kappa_shoot - kappa_quad) / kappa_quad
    worst = 0.0
    span = kin.v_max - kin.v_min
    for v in np.linspace(kin.v_min + 0.05 * span, kin.v_max - 0.05 * span, 11):
        if abs(v - kin.v_star) < 1e-3 * span:
            continue
        fr = kin.front(float(v))
        J = kin.J(float(v))
        worst = max(worst, abs(fr.speed * fr.kappa + J) / abs(J))
    ok = rel_err <= 1e-5 and worst < 1e-5
    criterion(8, ok, f"kappa(v*) shooting vs quadrature rel {rel_err:.1e}; max |c kappa + J|/|J| {worst:.1e}")


# -- 9 ------------------------------------------------------------------------
def test_fast_width_relaxation(criterion, kin):
    dom = build_domain("dumbbell", k=0.44)
    cfg = ReducedConfig.build(dom, kin, eps=math.sqrt(1e-3), w_star=0.7)
    lam = cfg.rel.stability_eigenvalue()
    traj = integrate(PulseState(1.0, 0.4 * 0.7), cfg, 60.0, mode="fast")
    monotone = bool(np.all(np.diff(traj.w) >= 0.0))
    gap = abs(traj.w[-1] - 0.7)
    ok = lam < 0.0 and monotone and gap < 1e-6
    criterion(9, ok, f"lambda = {lam:.4f} (< 0), monotone {monotone}, |w(60) - w*| = {gap:.1e}")


# -- 10 -----------------------------------------------------------------------
SLOW_CASES = [
    (("dumbbell", {"k": 0.44}), 0.7, (0.3, 0.5, 0.7, 1.0, 2.0, 3.5)),
    (("dumbbell", {"k": 0.1}), 0.7, (0.4, 1.9)),
    (("perforated_disk", {"c": 0.8, "r": 0.1}), 0.5, (0.2, 1.5, 4.0)),
    (("perforated_disk", {"c": 0.4, "r": 0.1}), 0.5, (0.6, 5.5)),
]


def test_slow_gradient_flow(criterion, kin):
    worst_rise, misses = 0.0, []
    for (kind, params), w_star, starts in SLOW_CASES:
        dom = build_domain(kind, **params)
        cfg = ReducedConfig.build(dom, kin, eps=math.sqrt(1e-3), w_star=w_star)
        stable = [e.s0 for e in pulse_equilibria(cfg) if e.tag == "stable"]
        for s0 in starts:
            traj = integrate(PulseState(s0, w_star), cfg, 1e8, mode="slow", rest_rate=1e-14)
            worst_rise = max(worst_rise, float(np.max(np.diff(traj.E))))
            end = float(traj.s0[-1])
            if min(_periodic_gap(end, x, dom.L) for x in stable) > 1e-4:
                misses.append((kind, params, s0, end))
    ok = worst_rise <= 1e-10 and not misses
    criterion(10, ok, f"max per-step rise of E {worst_rise:.1e} (<= 1e-10); unmatched endpoints {misses}")


# -- 11 -----------------------------------------------------------------------
EPS2 = 1e-3
DUMBBELL = ("dumbbell", {"k": 0.44}, 0.7)


def _run(kin, kind, params, w_star, s0, t_end, eps2=EPS2, N=512, sample_dt=10.0):
    dom = build_domain(kind, **params)
    cfg = SurfaceConfig(eps=math.sqrt(eps2), N=N)
    return dom, run_and_compare(dom, kin, cfg, t_end, s0, w_star, sample_dt=sample_dt)


@pytest.fixture(scope="module")
def pde_runs(kin):
    """Long surface simulations shared by the criterion 11 checks."""
    return {
        "dumbbell_inner": _run(kin, *DUMBBELL, 0.45, 3000.0, sample_dt=20.0),
        "dumbbell_outer": _run(kin, *DUMBBELL, 0.8, 2000.0),
        "hole_far": _run(kin, "perforated_disk", {"c": 0.8, "r": 0.1}, 0.5, 0.2, 1500.0),
        "hole_near": _run(kin, "perforated_disk", {"c": 0.4, "r": 0.1}, 0.5, 0.2, 1500.0, sample_dt=20.0),
    }


def _nearest_stable(kin, dom, w_star, x):
    cfg = ReducedConfig.build(dom, kin, eps=math.sqrt(EPS2), w_star=w_star)
    stable = [e.s0 for e in pulse_equilibria(cfg) if e.tag == "stable"]
    return min(stable, key=lambda e: _periodic_gap(x, e, dom.L))


def test_pde_width(criterion, pde_runs):
    gaps = {name: abs(rep.w_final - rep.w_star) / rep.w_star for name, (_, rep) in pde_runs.items()}
    detail = ", ".join(f"{n} {g:.2%}" for n, g in gaps.items())
    criterion("11a", max(gaps.values()) <= 0.05, f"long-time |w - w*|/w*: {detail} (<= 5%)")


def test_pde_drift_sign(criterion, pde_runs):
    reps = [pde_runs["dumbbell_inner"][1], pde_runs["dumbbell_outer"][1]]
    ok = all(r.sign_agreement for r in reps)
    ratios = ", ".join(f"{r.speed_ratio:.3f}" for r in reps)
    criterion("11b", ok, f"dumbbell k=0.44 sign(ds0/dt) = -sign(E') over the window: {ok}; PDE/ODE ratio {ratios}")


def test_pde_eps_scaling(criterion, kin):
    lo, hi = 1.05, 1.15
    times = []
    for eps2, N, t_end in ((EPS2, 512, 500.0), (0.25 * EPS2, 1024, 1800.0)):
        _, rep = _run(kin, *DUMBBELL, 1.0, t_end, eps2=eps2, N=N, sample_dt=2.0)
        times.append(crossing_time(rep.t, rep.s0_pde, hi) - crossing_time(rep.t, rep.s0_pde, lo))
    factor = times[1] / times[0]
    criterion("11c", abs(factor - 4.0) <= 1.2,
              f"drift speed over s0 in [{lo}, {hi}] drops by {factor:.3f} when eps halves (4 +- 30%)")


def test_pde_final_positions(criterion, kin, pde_runs):
    out = {}
    for name, (dom, rep) in pde_runs.items():
        s = rep.s0_pde
        end = float(s[-1])
        target = _nearest_stable(kin, dom, rep.w_star, end)
        approaching = _periodic_gap(end, target, dom.L) < _periodic_gap(float(s[0]), target, dom.L)
        out[name] = (target, approaching, end)
    L = pde_runs["dumbbell_inner"][0].L
    bistable = (_periodic_gap(out["dumbbell_inner"][0], 0.0, L) < 1e-6
                and abs(out["dumbbell_outer"][0] - 0.25 * L) < 1e-6)
    far = out["hole_far"][0]
    switch = (0.1 < far < math.pi - 0.1 and _periodic_gap(out["hole_near"][0], 0.0, 2 * math.pi) < 1e-6)
    moving = all(v[1] for v in out.values())
    detail = ", ".join(f"{n}: s0 {v[2]:.4f} -> {v[0]:.4f}" for n, v in out.items())
    criterion("11d", bistable and switch and moving,
              f"dumbbell bistability {bistable}, hole position switch {switch}, approaching {moving}; {detail}")
