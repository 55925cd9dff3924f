"""Quasi-stationary nonlocal surface solver.

The surface field obeys ``u_t = eps u_ss + f(u, v)/eps`` on the outer boundary,
with the bulk trace reconstructed from the Green's representation

    v(s) = v_bar + (eps^2/D) int G(s, s') u_ss(s') ds',
    v_bar = (M - int u ds) / |Omega|.

The trace kernel is split as ``G = -(1/pi) log|2 sin(pi (s-s')/L)| + R`` where
the first part is diagonal in Fourier space and ``R`` is smooth and applied in
low-rank form. Time stepping is first-order IMEX: diffusion implicit in
Fourier space, reaction explicit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft

from .errors import BistableRangeError, DivergenceError, NotSinglePulseError, ResolutionError
from .geometry import TWO_PI, ConformalDomain, DomainKind
from .greens import PotentialField, annulus_series
from .kinetics import MassRelation, ReactionKinetics

C0 = 1.0 / (8.0 * math.pi)
RANK_TOL = 1e-13
TRAJECTORY_HEADER = ("t", "s0", "w", "s1", "s2", "v_bar", "E_at_s0")


@dataclass(frozen=True)
class SurfaceConfig:
    eps: float
    D: float = 1.0
    N: int = 512
    dt: float | None = None
    include_ut: bool = False

    def time_step(self, kin: ReactionKinetics) -> float:
        """Explicit-reaction bound ``0.1 eps / max|f_u|`` unless ``dt`` is given."""
        if self.dt is not None:
            return float(self.dt)
        return 0.1 * self.eps / kin.f_u_max


@dataclass
class NonlocalKernel:
    """Trace kernel on ``N`` uniform arc-length nodes.

    ``K`` is the assembled matrix (singular cells integrated exactly); the
    fields ``circ_*``, ``V`` and ``lam`` hold the spectral split used for fast
    evaluation.
    """

    domain: ConformalDomain
    N: int
    s: np.ndarray
    theta: np.ndarray
    K: np.ndarray
    weights: np.ndarray
    wavenumber: np.ndarray  # 2 pi m / L for rfft modes m = 0..N/2
    V: np.ndarray  # (N, r) eigenvectors of the smooth remainder
    lam: np.ndarray  # (r,) eigenvalues
    R: np.ndarray = field(repr=False, default=None)

    @property
    def ds(self) -> float:
        return self.domain.perimeter / self.N

    @property
    def rank(self) -> int:
        return self.lam.size

    def apply(self, g: np.ndarray) -> np.ndarray:
        """``int G(s_i, s') g(s') ds'`` with the spectral split (``g`` of zero mean)."""
        k = self.wavenumber
        gh = sfft.rfft(g)
        mult = np.zeros_like(k)
        mult[1:] = 1.0 / k[1:]
        return sfft.irfft(gh * mult, n=self.N) + self.V @ (self.lam * (self.V.T @ g) * self.ds)


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _smooth_series(domain: ConformalDomain, delta):
    """Smooth annulus correction to the disk kernel (zero for simply connected domains)."""
    delta = np.asarray(delta, dtype=float)
    if domain.kind is DomainKind.PERFORATED_DISK:
        return annulus_series(domain.a, delta)
    return np.zeros(delta.shape)


def build_kernel(domain: ConformalDomain, N: int) -> NonlocalKernel:
    """Assemble the boundary trace of the Neumann Green's function.

    Off-diagonal entries come from the disk (or annulus) closed form in the
    preimage angle. The diagonal uses the exact cell average of
    ``-(1/pi) log|s - s'|`` plus ``H(s, s) = (1/pi) log rho + C0``.
    """
    if not _is_power_of_two(N) or N < 128:
        raise ResolutionError(f"N must be a power of two >= 128, got {N}")
    L = domain.perimeter
    ds = L / N
    s = np.arange(N) * ds
    theta = domain.theta_of(s)
    rho = domain.rho(theta)
    dth = theta[:, None] - theta[None, :]
    dss = s[:, None] - s[None, :]
    smooth = _smooth_series(domain, dth)
    smooth0 = float(_smooth_series(domain, np.zeros(1))[0])
    eye = np.eye(N, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_theta = np.log(2.0 * np.abs(np.sin(0.5 * dth)))
        log_s = np.log(2.0 * np.abs(np.sin(np.pi * dss / L)))
        R = -log_theta / np.pi + log_s / np.pi + smooth + C0
    K = -log_theta / np.pi + smooth + C0
    K[eye] = -(math.log(0.5 * ds) - 1.0) / np.pi + np.log(rho) / np.pi + C0 + smooth0
    R[eye] = np.log(TWO_PI * rho / L) / np.pi + C0 + smooth0
    R = 0.5 * (R + R.T)
    lam, V = np.linalg.eigh(R)
    keep = np.abs(lam) > RANK_TOL * np.abs(lam).max()
    m = np.arange(N // 2 + 1)
    return NonlocalKernel(domain, N, s, theta, K, np.full(N, ds), TWO_PI * m / L,
                          np.ascontiguousarray(V[:, keep]), lam[keep], R)


@dataclass
class SurfaceSimState:
    u: np.ndarray
    v_trace: np.ndarray
    v_bar: float
    M: float
    t: float
    cfg: SurfaceConfig
    u_prev: np.ndarray | None = None

    def total_mass(self, kernel: NonlocalKernel) -> float:
        return float(self.u.sum() * kernel.ds + kernel.domain.area * self.v_bar)


def spectral_second_derivative(kernel: NonlocalKernel, u: np.ndarray) -> np.ndarray:
    k = kernel.wavenumber
    return sfft.irfft(-(k * k) * sfft.rfft(u), n=kernel.N)


def reconstruct_bulk_trace(kernel: NonlocalKernel, u: np.ndarray, u_ss: np.ndarray | None, M: float,
                           cfg: SurfaceConfig, method: str = "spectral", u_t: np.ndarray | None = None):
    """Bulk trace ``v`` and mean ``v_bar`` from the surface field.

    ``method="spectral"`` uses the Fourier/low-rank split; ``"matrix"`` sums
    ``w_j K_ij (u_ss)_j`` with the assembled kernel. ``u_t`` adds the
    ``-(eps^3/D) int G u_t`` correction when given.
    """
    if u_ss is None:
        u_ss = spectral_second_derivative(kernel, u)
    area = kernel.domain.area
    v_bar = (M - u.sum() * kernel.ds) / area
    scale = cfg.eps**2 / cfg.D
    if method == "matrix":
        fluct = kernel.K @ (kernel.weights * u_ss)
        if u_t is not None:
            fluct = fluct - cfg.eps * (kernel.K @ (kernel.weights * (u_t - u_t.mean())))
    elif method == "spectral":
        k = kernel.wavenumber
        uh = sfft.rfft(u)
        fluct = sfft.irfft(-k * uh, n=kernel.N) + kernel.V @ (kernel.lam * (kernel.V.T @ u_ss) * kernel.ds)
        if u_t is not None:
            fluct = fluct - cfg.eps * kernel.apply(u_t - u_t.mean())
    else:
        raise ValueError(f"unknown method {method!r}")
    return v_bar + scale * fluct, v_bar


class _Stepper:
    """Precomputed IMEX update; three FFTs and two rank-``r`` products per step."""

    def __init__(self, kernel: NonlocalKernel, kin: ReactionKinetics, cfg: SurfaceConfig, M: float, dt: float):
        self.kernel = kernel
        self.kin = kin
        self.cfg = cfg
        self.M = M
        self.dt = dt
        N = kernel.N
        k = kernel.wavenumber
        eps = cfg.eps
        self.N = N
        self.area = kernel.domain.area
        self.ds = kernel.ds
        self.scale = eps**2 / cfg.D
        self.denom = 1.0 / (1.0 + dt * eps * k * k)
        self.gain = dt / eps
        self.mult_circ = -self.scale * k
        # low-rank remainder acting on u through the spectral second derivative
        eye_h = sfft.rfft(np.eye(N), axis=0)
        D2 = sfft.irfft(-(k * k)[:, None] * eye_h, n=N, axis=0)
        self.A = (kernel.lam[:, None] * (kernel.V.T @ D2)) * (kernel.ds * self.scale)
        self.V = kernel.V
        span = kin.v_max - kin.v_min
        lo = kin.equilibrium_branches(kin.v_min + 1e-6 * span)[0]
        hi = kin.equilibrium_branches(kin.v_max - 1e-6 * span)[2]
        margin = 0.5 * (hi - lo)
        self.bounds = (lo - margin, hi + margin)
        if cfg.include_ut:
            mult = np.zeros_like(k)
            mult[1:] = 1.0 / k[1:]
            self.ut_circ = -self.scale * eps * mult
            self.ut_B = kernel.lam[:, None] * kernel.V.T * (kernel.ds * self.scale * eps)

    def trace(self, u: np.ndarray, uh: np.ndarray, u_t: np.ndarray | None = None):
        v_bar = (self.M - uh[0].real * self.ds) / self.area
        spec = self.mult_circ * uh
        if u_t is not None:
            spec = spec + self.ut_circ * sfft.rfft(u_t)
        v = sfft.irfft(spec, n=self.N) + self.V @ (self.A @ u) + v_bar
        if u_t is not None:
            v -= self.V @ (self.ut_B @ (u_t - u_t.mean()))
        return v, v_bar

    def run(self, u: np.ndarray, n_steps: int, u_prev: np.ndarray | None = None, t0: float = 0.0,
            check_every: int = 64):
        f = self.kin.f
        uh = sfft.rfft(u)
        lo, hi = self.bounds
        for n in range(n_steps):
            u_t = None
            if self.cfg.include_ut and u_prev is not None:
                u_t = (u - u_prev) / self.dt
            v, _ = self.trace(u, uh, u_t)
            uh = (uh + self.gain * sfft.rfft(f(u, v))) * self.denom
            if self.cfg.include_ut:
                u_prev = u
            u = sfft.irfft(uh, n=self.N)
            if n % check_every == 0 or n == n_steps - 1:
                umin, umax = u.min(), u.max()
                if not (lo <= umin and umax <= hi):
                    t = t0 + (n + 1) * self.dt
                    raise DivergenceError(
                        f"surface field left [{lo:.4g}, {hi:.4g}] at t={t:.6g}",
                        {"t": t, "u_min": float(umin), "u_max": float(umax),
                         "argmin": int(np.argmin(u)), "argmax": int(np.argmax(u)), "dt": self.dt},
                    )
        return u, uh, u_prev


def initial_state(kernel: NonlocalKernel, kin: ReactionKinetics, cfg: SurfaceConfig, M: float,
                  s0: float, w: float, width: float | None = None) -> SurfaceSimState:
    """Smoothed plateau of ``h+(v*)`` on ``(s0 - w, s0 + w)`` over a ``h-(v*)`` background."""
    L = kernel.domain.perimeter
    hm, _, hp = kin.equilibrium_branches(kin.v_star)
    width = cfg.eps if width is None else width
    s = kernel.s
    x = (s - s0 + 0.5 * L) % L - 0.5 * L  # signed distance to the centre
    u = hm + (hp - hm) * 0.5 * (np.tanh((x + w) / (2.0 * width)) - np.tanh((x - w) / (2.0 * width)))
    v, v_bar = reconstruct_bulk_trace(kernel, u, None, M, cfg)
    return SurfaceSimState(u, v, v_bar, M, 0.0, cfg)


def step(state: SurfaceSimState, kernel: NonlocalKernel, kin: ReactionKinetics, dt: float | None = None,
         n_steps: int = 1) -> SurfaceSimState:
    """Advance ``n_steps`` IMEX steps; returns a new state."""
    cfg = state.cfg
    dt = cfg.time_step(kin) if dt is None else dt
    stepper = _Stepper(kernel, kin, cfg, state.M, dt)
    u, uh, u_prev = stepper.run(state.u.copy(), n_steps, state.u_prev, state.t)
    u_t = (u - u_prev) / dt if cfg.include_ut and u_prev is not None else None
    v, v_bar = stepper.trace(u, uh, u_t)
    return replace(state, u=u, v_trace=v, v_bar=v_bar, t=state.t + n_steps * dt, u_prev=u_prev)


def _trig_eval(uh: np.ndarray, N: int, L: float, x: float):
    """Trigonometric interpolant of ``u`` and its derivative at ``x``."""
    m = np.arange(uh.size)
    wgt = np.full(uh.size, 2.0)
    wgt[0] = 1.0
    if N % 2 == 0:
        wgt[-1] = 1.0
    ph = np.exp(1j * TWO_PI * m * x / L)
    val = np.sum(wgt * (uh * ph).real) / N
    der = np.sum(wgt * (1j * TWO_PI * m / L * uh * ph).real) / N
    return val, der


def extract_pulse(state: SurfaceSimState, kin: ReactionKinetics, kernel: NonlocalKernel | None = None,
                  polish: bool = True):
    """Interface positions ``(s1, s2, s0, w)`` from the mid-level crossings of ``u``.

    Crossings are located by linear interpolation and, when ``polish`` is set,
    refined by Newton's method on the trigonometric interpolant.
    """
    u = state.u
    N = u.size
    L = kernel.domain.perimeter if kernel is not None else None
    if L is None:
        raise ValueError("a kernel (for the node positions) is required")
    ds = L / N
    try:
        hm, _, hp = kin.equilibrium_branches(state.v_bar)
    except BistableRangeError:
        hm, _, hp = kin.equilibrium_branches(kin.v_star)
    mid = 0.5 * (hm + hp)
    g = u - mid
    nxt = np.roll(g, -1)
    up = np.nonzero((g < 0.0) & (nxt >= 0.0))[0]
    down = np.nonzero((g >= 0.0) & (nxt < 0.0))[0]
    n_cross = up.size + down.size
    if up.size != 1 or down.size != 1:
        raise NotSinglePulseError(n_cross)
    uh = sfft.rfft(u) if polish else None

    def locate(i):
        x = (i + g[i] / (g[i] - nxt[i])) * ds
        if polish:
            for _ in range(6):
                val, der = _trig_eval(uh, N, L, x)
                if der == 0.0:
                    break
                dx = (val - mid) / der
                if abs(dx) > ds:
                    break
                x -= dx
                if abs(dx) < 1e-14 * L:
                    break
        return x % L

    s1 = locate(int(up[0]))
    s2 = locate(int(down[0]))
    if s2 < s1:
        s2 += L
    w = 0.5 * (s2 - s1)
    s0 = (0.5 * (s1 + s2)) % L
    return s1, s2 % L, s0, w


@dataclass
class SurfaceRun:
    """Sampled trajectory of a surface simulation."""

    rows: list
    final: SurfaceSimState
    kernel: NonlocalKernel
    dt: float

    def column(self, name: str) -> np.ndarray:
        return np.array([r[TRAJECTORY_HEADER.index(name)] for r in self.rows])


def run(state: SurfaceSimState, kernel: NonlocalKernel, kin: ReactionKinetics, t_end: float,
        sample_dt: float, potential: PotentialField | None = None, progress=None) -> SurfaceRun:
    """Integrate to ``t_end`` and sample ``(t, s0, w, s1, s2, v_bar, E(s0))``."""
    cfg = state.cfg
    # shrink dt so that a sample interval is a whole number of steps
    steps_per_sample = max(1, int(math.ceil(sample_dt / cfg.time_step(kin) - 1e-9)))
    dt = sample_dt / steps_per_sample
    n_samples = max(1, int(math.ceil(t_end / sample_dt - 1e-9)))
    stepper = _Stepper(kernel, kin, cfg, state.M, dt)
    rows = []

    def record(st):
        s1, s2, s0, w = extract_pulse(st, kin, kernel)
        E = float(potential(s0)) if potential is not None else math.nan
        rows.append((st.t, s0, w, s1, s2, st.v_bar, E))

    record(state)
    u, u_prev, t = state.u.copy(), state.u_prev, state.t
    for j in range(n_samples):
        u, uh, u_prev = stepper.run(u, steps_per_sample, u_prev, t)
        t = state.t + (j + 1) * steps_per_sample * dt
        v, v_bar = stepper.trace(u, uh)
        cur = replace(state, u=u, v_trace=v, v_bar=v_bar, t=t, u_prev=u_prev)
        record(cur)
        if progress is not None:
            progress(j + 1, n_samples)
    return SurfaceRun(rows, cur, kernel, dt)


@dataclass
class DriftReport:
    """PDE drift versus the reduced slow ODE over the metastable window."""

    run: SurfaceRun
    t: np.ndarray
    s0_pde: np.ndarray
    s0_ode: np.ndarray
    window: tuple[float, float]
    fitted_speed: float
    predicted_speed: float
    speed_ratio: float
    sign_agreement: bool
    w_final: float
    w_star: float

    @property
    def residual(self) -> np.ndarray:
        L = self.run.kernel.domain.perimeter
        return (self.s0_pde - self.s0_ode + 0.5 * L) % L - 0.5 * L


def _unwrap(s: np.ndarray, L: float) -> np.ndarray:
    return np.unwrap(s * (TWO_PI / L)) * (L / TWO_PI)


def metastable_window(t: np.ndarray, w: np.ndarray, w_star: float, settle: float = 0.02) -> int:
    """Index of the first sample after which ``|w - w*| <= settle w*`` for good."""
    bad = np.nonzero(np.abs(w - w_star) > settle * w_star)[0]
    return 0 if bad.size == 0 else int(bad[-1]) + 1


def crossing_time(t: np.ndarray, s: np.ndarray, level: float) -> float:
    """First time the sampled (unwrapped) trajectory ``s`` passes ``level``, linearly interpolated."""
    d = np.asarray(s) - level
    hit = np.nonzero(np.sign(d[1:]) != np.sign(d[:-1]))[0]
    if hit.size == 0:
        return math.nan
    i = int(hit[0])
    return float(t[i] + (t[i + 1] - t[i]) * d[i] / (d[i] - d[i + 1]))


def run_and_compare(domain: ConformalDomain, kin: ReactionKinetics, cfg: SurfaceConfig, t_end: float,
                    s0_init: float, w_star: float, sample_dt: float = 5.0, kernel: NonlocalKernel | None = None,
                    progress=None) -> DriftReport:
    """Simulate a pulse from ``s0_init`` and compare its drift to the slow ODE.

    The metastable window starts once the width has settled within 2 % of
    ``w*``. The fitted speed is the least-squares slope of ``s0(t)`` there and
    the predicted speed the slow right-hand side averaged over the same
    samples. ``speed_ratio`` regresses the sampled PDE displacements on the
    displacements predicted by the slow law at the same positions, so it stays
    meaningful once the pulse settles. The ODE trajectory starts from the PDE
    centre at the window start.
    """
    from .reduced import ReducedConfig, PulseState, integrate, slow_rhs

    if cfg.eps**2 > 0.01:
        raise ResolutionError(f"eps^2 = {cfg.eps**2:.4g} too large for the leading-order comparison (need <= 0.01)")
    if cfg.N < 512:
        raise ResolutionError(f"N = {cfg.N} too small for the drift comparison (need >= 512)")
    kernel = build_kernel(domain, cfg.N) if kernel is None else kernel
    rel = MassRelation.with_w_star(kin, domain, w_star)
    rcfg = ReducedConfig(cfg.eps, cfg.D, kin, rel, domain)
    state = initial_state(kernel, kin, cfg, rel.M, s0_init, w_star)
    result = run(state, kernel, kin, t_end, sample_dt, rcfg.potential, progress)
    L = domain.perimeter
    t = result.column("t")
    s0 = result.column("s0")
    w = result.column("w")
    i0 = metastable_window(t, w, w_star)
    if i0 >= t.size - 2:
        i0 = max(0, t.size - 3)
    tw, sw = t[i0:], _unwrap(s0[i0:], L)
    slope = float(np.polyfit(tw, sw, 1)[0])
    rhs = np.array([slow_rhs(PulseState(x, w_star), rcfg) for x in s0[i0:]])
    predicted = float(rhs.mean())
    # per-sample displacements against those predicted by the slow law
    ds = np.diff(sw)
    pred = 0.5 * (rhs[1:] + rhs[:-1]) * np.diff(tw)
    denom = float(np.dot(pred, pred))
    ratio = float(np.dot(ds, pred)) / denom if denom > 0.0 else math.nan
    significant = np.abs(pred) > 1e-9
    sign_ok = bool(np.all(np.sign(ds[significant]) == np.sign(pred[significant])))
    # reduced trajectory from the window start, sampled at the PDE times
    ode = integrate(PulseState(float(s0[i0]), w_star, float(t[i0])), rcfg, float(t[-1] - t[i0]) or 1.0, mode="slow")
    s_ode_window = np.interp(tw, ode.t, _unwrap(ode.s0, L)) % L
    s_ode = np.concatenate([np.full(i0, np.nan), s_ode_window])
    return DriftReport(result, t, s0, s_ode, (float(t[i0]), float(t[-1])), slope, predicted, ratio, sign_ok,
                       float(w[-1]), float(w_star))
