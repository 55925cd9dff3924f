import math

import numpy as np
import pytest

from pulsedyn import MassRelation, build_domain
from pulsedyn.errors import DivergenceError, NotSinglePulseError, ResolutionError
from pulsedyn.greens import annulus_trace_green, disk_trace_green
from pulsedyn.surface_pde import (
    C0,
    TRAJECTORY_HEADER,
    SurfaceConfig,
    SurfaceSimState,
    build_kernel,
    crossing_time,
    extract_pulse,
    initial_state,
    reconstruct_bulk_trace,
    run_and_compare,
    step,
)

EPS = math.sqrt(1e-3)
DUMBBELL = build_domain("dumbbell", k=0.44)
HOLE = build_domain("perforated_disk", c=0.8, r=0.1)


@pytest.fixture(scope="module")
def dumbbell_kernel():
    return build_kernel(DUMBBELL, 512)


def _offdiag(K):
    return ~np.eye(K.shape[0], dtype=bool)


def test_disk_kernel_is_circulant_closed_form():
    ker = build_kernel(build_domain("disk"), 128)
    th = ker.theta
    mask = _offdiag(ker.K)
    i, j = np.nonzero(mask)
    G = np.zeros_like(ker.K)
    G[mask] = disk_trace_green(th[i], th[j])
    assert np.max(np.abs(ker.K[mask] - G[mask])) < 1e-12
    for j in range(1, 5):
        assert np.allclose(np.diag(ker.K, j), ker.K[0, j], atol=1e-12)
    assert ker.rank <= 1


def test_hole_kernel_matches_annulus_green():
    ker = build_kernel(HOLE, 128)
    th = ker.theta
    mask = _offdiag(ker.K)
    i, j = np.nonzero(mask)
    G = np.zeros_like(ker.K)
    G[mask] = annulus_trace_green(HOLE.a, th[i], th[j]) + C0
    assert np.max(np.abs(ker.K[mask] - G[mask])) < 1e-10


@pytest.mark.parametrize("dom", [DUMBBELL, HOLE])
def test_kernel_symmetric(dom):
    ker = build_kernel(dom, 256)
    assert np.max(np.abs(ker.K - ker.K.T)) < 1e-12


def test_kernel_resolution_rules():
    with pytest.raises(ResolutionError):
        build_kernel(DUMBBELL, 300)
    with pytest.raises(ResolutionError):
        build_kernel(DUMBBELL, 64)


def test_spectral_and_matrix_reconstruction_agree(kin, dumbbell_kernel):
    cfg = SurfaceConfig(EPS)
    rel = MassRelation.with_w_star(kin, DUMBBELL, 0.7)
    st = initial_state(dumbbell_kernel, kin, cfg, rel.M, 1.0, 0.7)
    v_spec, vbar = reconstruct_bulk_trace(dumbbell_kernel, st.u, None, rel.M, cfg)
    v_mat, vbar2 = reconstruct_bulk_trace(dumbbell_kernel, st.u, None, rel.M, cfg, method="matrix")
    assert vbar == vbar2
    spread = np.ptp(v_spec)
    assert np.max(np.abs(v_spec - v_mat)) < 0.02 * spread


def _homogeneous(kin, ker, cfg, v_bar):
    hp = kin.equilibrium_branches(v_bar)[2]
    u = np.full(ker.N, hp)
    M = hp * ker.domain.perimeter + ker.domain.area * v_bar
    v, vb = reconstruct_bulk_trace(ker, u, None, M, cfg)
    return SurfaceSimState(u, v, vb, M, 0.0, cfg)


def test_homogeneous_state_is_fixed(kin):
    ker = build_kernel(DUMBBELL, 128)
    cfg = SurfaceConfig(EPS, N=128)
    st = _homogeneous(kin, ker, cfg, 2.4)
    out = step(st, ker, kin, n_steps=200)
    assert np.max(np.abs(out.u - st.u)) < 1e-12


def test_small_perturbation_decays(kin):
    ker = build_kernel(DUMBBELL, 128)
    cfg = SurfaceConfig(EPS, N=128)
    st = _homogeneous(kin, ker, cfg, 2.4)
    base = st.u.copy()
    bump = 1e-3 * np.cos(3 * 2 * np.pi * ker.s / DUMBBELL.L)
    v, vb = reconstruct_bulk_trace(ker, base + bump, None, st.M, cfg)
    st = SurfaceSimState(base + bump, v, vb, st.M, 0.0, cfg)
    out = step(st, ker, kin, n_steps=2000)
    assert np.max(np.abs(out.u - base)) < 0.1 * 1e-3


def test_mass_is_conserved(kin):
    ker = build_kernel(HOLE, 128)
    cfg = SurfaceConfig(EPS, N=128)
    rel = MassRelation.with_w_star(kin, HOLE, 0.5)
    st = initial_state(ker, kin, cfg, rel.M, 0.4, 0.5)
    out = step(st, ker, kin, n_steps=100_000)
    assert out.total_mass(ker) == pytest.approx(rel.M, rel=1e-12)


def test_pulse_relaxes_to_pinned_width(kin, dumbbell_kernel):
    cfg = SurfaceConfig(EPS)
    rel = MassRelation.with_w_star(kin, DUMBBELL, 0.7)
    st = initial_state(dumbbell_kernel, kin, cfg, rel.M, 1.0, 0.4)
    st = step(st, dumbbell_kernel, kin, n_steps=int(60 / cfg.time_step(kin)))
    _, _, s0, w = extract_pulse(st, kin, dumbbell_kernel)
    assert w == pytest.approx(0.7, rel=0.05)
    assert s0 == pytest.approx(1.0, abs=0.05)


def test_extract_synthetic_pulse(kin, dumbbell_kernel):
    cfg = SurfaceConfig(EPS)
    rel = MassRelation.with_w_star(kin, DUMBBELL, 0.7)
    st = initial_state(dumbbell_kernel, kin, cfg, rel.M, 1.0, 0.7)
    s1, s2, s0, w = extract_pulse(st, kin, dumbbell_kernel)
    ds = dumbbell_kernel.ds
    assert abs(s0 - 1.0) < ds / 10 and abs(w - 0.7) < ds / 10
    assert s1 == pytest.approx(0.3, abs=ds / 10) and s2 == pytest.approx(1.7, abs=ds / 10)


def test_extract_pulse_across_the_seam(kin, dumbbell_kernel):
    cfg = SurfaceConfig(EPS)
    rel = MassRelation.with_w_star(kin, DUMBBELL, 0.7)
    st = initial_state(dumbbell_kernel, kin, cfg, rel.M, 0.1, 0.7)
    _, _, s0, w = extract_pulse(st, kin, dumbbell_kernel)
    assert s0 == pytest.approx(0.1, abs=1e-3) and w == pytest.approx(0.7, abs=1e-3)


def test_extract_rejects_non_pulses(kin, dumbbell_kernel):
    cfg = SurfaceConfig(EPS)
    st = _homogeneous(kin, dumbbell_kernel, cfg, 2.4)
    with pytest.raises(NotSinglePulseError):
        extract_pulse(st, kin, dumbbell_kernel)
    hm, _, hp = kin.equilibrium_branches(kin.v_star)
    s = dumbbell_kernel.s
    two = np.where(np.cos(4 * np.pi * s / DUMBBELL.L) > 0, hp, hm)
    with pytest.raises(NotSinglePulseError) as err:
        extract_pulse(SurfaceSimState(two, two, kin.v_star, 0.0, 0.0, cfg), kin, dumbbell_kernel)
    assert err.value.n_crossings == 4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_guard(kin):
    ker = build_kernel(DUMBBELL, 128)
    cfg = SurfaceConfig(EPS, N=128, dt=5.0)
    rel = MassRelation.with_w_star(kin, DUMBBELL, 0.7)
    st = initial_state(ker, kin, cfg, rel.M, 1.0, 0.7)
    with pytest.raises(DivergenceError) as err:
        step(st, ker, kin, n_steps=500)
    assert "u_max" in err.value.dump


def test_validator_resolution_rules(kin):
    with pytest.raises(ResolutionError):
        run_and_compare(DUMBBELL, kin, SurfaceConfig(0.2), 1.0, 1.0, 0.7)
    with pytest.raises(ResolutionError):
        run_and_compare(DUMBBELL, kin, SurfaceConfig(EPS, N=256), 1.0, 1.0, 0.7)


def test_disk_pulse_does_not_drift(kin):
    disk = build_domain("disk")
    rep = run_and_compare(disk, kin, SurfaceConfig(EPS), 300.0, 2.0, 0.9, sample_dt=10.0)
    assert abs(rep.fitted_speed) < 1e-6 * disk.L


def test_trajectory_columns(kin):
    rep = run_and_compare(DUMBBELL, kin, SurfaceConfig(EPS), 60.0, 1.0, 0.7, sample_dt=20.0)
    assert TRAJECTORY_HEADER == ("t", "s0", "w", "s1", "s2", "v_bar", "E_at_s0")
    assert all(len(row) == len(TRAJECTORY_HEADER) for row in rep.run.rows)
    assert rep.run.column("t")[-1] == pytest.approx(60.0, abs=rep.run.dt)


def test_spatial_self_convergence(kin):
    times = []
    for N in (512, 1024):
        rep = run_and_compare(DUMBBELL, kin, SurfaceConfig(EPS, N=N), 500.0, 1.0, 0.7, sample_dt=2.0)
        times.append(crossing_time(rep.t, rep.s0_pde, 1.15) - crossing_time(rep.t, rep.s0_pde, 1.05))
    assert abs(times[1] / times[0] - 1.0) < 0.1


def test_crossing_time():
    t = np.array([0.0, 1.0, 2.0])
    assert crossing_time(t, np.array([0.0, 1.0, 3.0]), 2.0) == pytest.approx(1.5)
    assert math.isnan(crossing_time(t, np.array([0.0, 1.0, 3.0]), 5.0))
