"""Explicit second-order stepper for the exterior wave equation.

Leapfrog in time, 7-point Laplacian in space, Dirichlet obstacle by masking,
and a polynomial-ramp sponge layer damping the outer shell of the simulation
box (or none at all in "exact mode", where the box is sized so that wall
reflections cannot reach the observation region before the final time).

Recorders stream over the run: they see every sampled state once and never
force snapshots to be kept. ``run`` drives the loop; ``step`` exposes a single
update for small-scale use with identical numerics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import (
    CflViolation,
    NonPositiveEnergy,
    NumericalBlowup,
    SupportViolation,
    ValidationError,
    WindowTooShort,
)
from .geometry import DomainSpec

CFL_LIMIT = 1.0 / math.sqrt(3.0)
_CFL_GRACE = 1.05  # mild violations are allowed through to the blowup detector


# ---------------------------------------------------------------------------
# speed and data containers


@dataclass(frozen=True)
class SpeedField:
    """Wave speed on the grid; 1 outside the ball of radius rho0.

    ``values`` is either a scalar (uniform speed) or a full-grid array.
    """

    values: object
    c0: float
    c1: float
    rho0: float

    @property
    def is_uniform(self) -> bool:
        return np.isscalar(self.values)

    @property
    def max_speed(self) -> float:
        return self.c1

    def squared(self):
        if self.is_uniform:
            return float(self.values) ** 2
        return self.values**2


def uniform_speed() -> SpeedField:
    return SpeedField(values=1.0, c0=1.0, c1=1.0, rho0=0.0)


def speed_from_values(domain: DomainSpec, values: np.ndarray, rho0: float,
                      c0: Optional[float] = None, c1: Optional[float] = None) -> SpeedField:
    """Validate a sampled speed: bounded, positive, and exactly 1 outside
    the ball of radius rho0 about the origin."""
    values = np.asarray(values, dtype=float)
    if values.shape != domain.grid.dims:
        raise ValidationError("speed array must cover the whole grid")
    vmin, vmax = float(values.min()), float(values.max())
    if vmin <= 0:
        raise ValidationError("speed must be positive")
    c0 = vmin if c0 is None else c0
    c1 = vmax if c1 is None else c1
    if not (c0 <= vmin and vmax <= c1):
        raise ValidationError(f"speed exceeds declared bounds [{c0}, {c1}]")
    X, Y, Z = domain.grid.meshgrid()
    outside = (X**2 + Y**2 + Z**2) > rho0**2
    if not np.allclose(values[outside], 1.0, atol=1e-12):
        raise ValidationError("speed must equal 1 outside the background ball")
    arr = values.copy()
    arr.flags.writeable = False
    return SpeedField(values=arr, c0=c0, c1=c1, rho0=rho0)


@dataclass(frozen=True)
class InitialData:
    """Displacement/velocity pair supported in the source box.

    ``theta`` is the recorded composite size (discrete H2 norm of the
    displacement plus H1 norm of the velocity); it is measured, not enforced.
    """

    f: np.ndarray
    g: np.ndarray
    theta: float

    def __post_init__(self):
        self.f.flags.writeable = False
        self.g.flags.writeable = False


def make_initial_data(domain: DomainSpec, f=None, g=None) -> InitialData:
    g_ = np.zeros(domain.grid.dims) if g is None else np.asarray(g, dtype=float).copy()
    f_ = np.zeros(domain.grid.dims) if f is None else np.asarray(f, dtype=float).copy()
    for name, arr in (("displacement", f_), ("velocity", g_)):
        if arr.shape != domain.grid.dims:
            raise ValidationError(f"{name} array must cover the whole grid")
        outside = ~domain.mask_q0
        if np.any(arr[outside] != 0.0):
            raise SupportViolation(f"{name} data is nonzero outside the source box")
    theta = discrete_h2_norm(f_, domain.grid.h) + discrete_h1_norm(g_, domain.grid.h)
    return InitialData(f=f_, g=g_, theta=theta)


def discrete_h1_norm(u: np.ndarray, h: float) -> float:
    gx, gy, gz = np.gradient(u, h)
    return math.sqrt(float(np.sum(u**2 + gx**2 + gy**2 + gz**2)) * h**3)


def discrete_h2_norm(u: np.ndarray, h: float) -> float:
    grads = np.gradient(u, h)
    total = float(np.sum(u**2))
    for gcomp in grads:
        total += float(np.sum(gcomp**2))
        for g2 in np.gradient(gcomp, h):
            total += float(np.sum(g2**2))
    return math.sqrt(total * h**3)


# ---------------------------------------------------------------------------
# stepping


@dataclass
class SimSettings:
    """Time stepping and truncation controls.

    ``dt_factor`` scales the stability limit h/(c1*sqrt(3)); ``dt`` overrides
    it outright. ``t_final`` may be shortened by a stop rule.

    Sponge strength defaults to min(8, 0.45/dt): an absolute rate (so the
    layer behaves the same across grid refinements) under the hard stability
    cap smax*dt <= 0.5. Strong damping is not free: after the waves are
    absorbed the layer relaxes leftover content diffusively on a time scale
    around smax*width^2, so more damping means a longer afterglow.
    """

    t_final: float
    dt_factor: float = 0.9
    dt: Optional[float] = None
    use_sponge: Optional[bool] = None  # default: sponge iff domain declares a width
    sponge_strength: Optional[float] = None
    sponge_power: int = 3
    blowup_factor: float = 1e6
    blowup_check_every: int = 20

    def resolve_dt(self, domain: DomainSpec, speed: SpeedField) -> float:
        if self.dt is not None:
            return float(self.dt)
        return self.dt_factor * domain.grid.h * CFL_LIMIT / speed.max_speed


@dataclass
class WaveState:
    """Two consecutive field snapshots plus the precomputed step operators."""

    u_prev: np.ndarray           # field at t - dt
    u_curr: np.ndarray           # field at t
    step_index: int
    t: float
    dt: float
    coef: object                 # (c dt / h)^2, scalar or array
    damp_a: Optional[np.ndarray]  # s dt/2 on the grid, or None
    dirichlet_flat: np.ndarray
    scratch: np.ndarray = field(repr=False, default=None)
    initial_max: float = 0.0


def sponge_profile(domain: DomainSpec, power: int = 3) -> np.ndarray:
    """Normalized damping ramp: 0 inside, rising to 1 at the outer faces."""
    g = domain.grid
    W = domain.sponge_width
    if W <= 0:
        return np.zeros(g.dims)
    X, Y, Z = g.meshgrid()
    depth = np.zeros(g.dims)
    for j, c in enumerate((X, Y, Z)):
        lo = domain.sim_box.lo[j] + W
        hi = domain.sim_box.hi[j] - W
        d = np.maximum(lo - c, c - hi)
        depth = np.maximum(depth, d)
    ramp = np.clip(depth / W, 0.0, 1.0) ** power
    return ramp


def init_state(domain: DomainSpec, speed: SpeedField, data: InitialData,
               settings: SimSettings) -> WaveState:
    """Second-order Taylor start: u(dt) = f + dt g + dt^2/2 c^2 lap f."""
    g = domain.grid
    dt = settings.resolve_dt(domain, speed)
    limit = g.h * CFL_LIMIT / speed.max_speed
    if dt > limit * _CFL_GRACE:
        raise CflViolation(
            f"dt={dt:.3e} exceeds the stability limit {limit:.3e} by more than 5%"
        )

    c2 = speed.squared()
    coef = c2 * (dt / g.h) ** 2 if not np.isscalar(c2) else float(c2) * (dt / g.h) ** 2

    use_sponge = settings.use_sponge
    if use_sponge is None:
        use_sponge = domain.sponge_width > 0
    damp_a = None
    if use_sponge:
        if domain.sponge_width <= 0:
            raise ValidationError("sponge requested but domain has zero sponge width")
        smax = settings.sponge_strength
        if smax is None:
            smax = min(8.0, 0.45 / dt)
        if smax * dt > 0.5 + 1e-12:
            raise ValidationError("sponge strength violates smax*dt <= 0.5")
        damp_a = sponge_profile(domain, settings.sponge_power) * (smax * dt / 2.0)

    dirichlet_flat = np.flatnonzero(domain.mask_k.ravel()).astype(np.int64)

    u0 = data.f.copy()
    lap = _kernels.laplacian(data.f, g.h)
    u1 = data.f + dt * data.g + 0.5 * dt * dt * c2 * lap
    for u in (u0, u1):
        _kernels.zero_at(u, dirichlet_flat)
        _zero_shell(u)

    state = WaveState(
        u_prev=u0, u_curr=u1, step_index=1, t=dt, dt=dt, coef=coef,
        damp_a=damp_a, dirichlet_flat=dirichlet_flat,
        scratch=np.zeros_like(u0),
        initial_max=max(float(np.abs(u0).max()), float(np.abs(u1).max()), 1e-300),
    )
    return state


def _zero_shell(u):
    u[0, :, :] = u[-1, :, :] = 0.0
    u[:, 0, :] = u[:, -1, :] = 0.0
    u[:, :, 0] = u[:, :, -1] = 0.0


def step(state: WaveState) -> WaveState:
    """Advance one leapfrog step in place (buffers rotate; state is returned)."""
    _kernels.advance(state.u_prev, state.u_curr, state.scratch, state.coef, state.damp_a)
    _kernels.zero_at(state.scratch, state.dirichlet_flat)
    state.u_prev, state.u_curr, state.scratch = state.u_curr, state.scratch, state.u_prev
    state.step_index += 1
    state.t = state.step_index * state.dt
    return state


# ---------------------------------------------------------------------------
# recorders


class StepRecorder:
    """Streaming observer; override any subset of the hooks."""

    def on_start(self, domain: DomainSpec, state: WaveState) -> None:
        pass

    def on_sample(self, m: int, t: float, u: np.ndarray) -> None:
        """Called for every time level 0..M in order (u at time t = m dt)."""

    def on_pair(self, m: int, state: WaveState) -> None:
        """Called after each step with the (t-dt, t) snapshot pair."""

    def finalize(self, t_final: float, dt: float) -> None:
        pass


@dataclass
class RunResult:
    n_steps: int
    t_final: float
    dt: float
    stopped_early: bool


def run(
    domain: DomainSpec,
    speed: SpeedField,
    data: InitialData,
    settings: SimSettings,
    recorders: Sequence[StepRecorder] = (),
    stop: Optional[Callable[[float], bool]] = None,
) -> RunResult:
    """Drive the stepper to t_final (or until the stop rule fires), feeding
    every recorder each time level. Deterministic for a fixed configuration."""
    state = init_state(domain, speed, data, settings)
    dt = state.dt
    n_steps = int(math.ceil(settings.t_final / dt - 1e-9))
    for r in recorders:
        r.on_start(domain, state)
        r.on_sample(0, 0.0, state.u_prev)
        r.on_pair(1, state)
        r.on_sample(1, dt, state.u_curr)

    stopped = False
    m = 1
    while m < n_steps:
        step(state)
        m = state.step_index
        for r in recorders:
            r.on_pair(m, state)
            r.on_sample(m, state.t, state.u_curr)
        if m % settings.blowup_check_every == 0:
            peak = float(np.abs(state.u_curr).max())
            if not np.isfinite(peak) or peak > settings.blowup_factor * state.initial_max:
                raise NumericalBlowup(
                    f"|u| reached {peak:.3e} at t={state.t:.3f} "
                    f"({peak / state.initial_max:.1e} x initial max)"
                )
        if stop is not None and stop(state.t):
            stopped = True
            break
    for r in recorders:
        r.finalize(state.t, dt)
    return RunResult(n_steps=state.step_index, t_final=state.t, dt=dt, stopped_early=stopped)


# ---------------------------------------------------------------------------
# energies


class QuadWeights:
    """Volume quadrature block over the observation region, kernel-ready."""

    def __init__(self, domain: DomainSpec):
        full = domain.q_quad_weights()
        sl = domain.sigma_slices
        self.block = np.ascontiguousarray(full[sl])
        self.offsets = (sl[0].start, sl[1].start, sl[2].start)
        self.volume = float(self.block.sum())


def local_energy(u_prev: np.ndarray, u_curr: np.ndarray, dt: float,
                 domain: DomainSpec, weights: Optional[QuadWeights] = None) -> float:
    """Quadratic energy over the observation region at the half step:
    |grad of the snapshot average|^2 + |difference quotient|^2, node weights."""
    w = weights if weights is not None else QuadWeights(domain)
    return _kernels.energy_pair(u_prev, u_curr, w.block, dt, domain.grid.h, w.offsets)


def scheme_energy(u_prev: np.ndarray, u_curr: np.ndarray, dt: float, h: float,
                  inv_c2=1.0) -> float:
    """The leapfrog invariant: kinetic term plus the mixed-level stiffness
    form. Conserved to rounding by the free scheme; used as the conservation
    oracle in tests."""
    ut = (u_curr - u_prev) / dt
    kin = 0.5 * float(np.sum(inv_c2 * ut * ut)) * h**3
    stiff = 0.0
    for ax in range(3):
        d1 = np.diff(u_curr, axis=ax)
        d0 = np.diff(u_prev, axis=ax)
        stiff += 0.5 * float(np.sum(d1 * d0)) / (h * h) * h**3
    return kin + stiff


class EnergyRecorder(StepRecorder):
    """Observation-region energy at every half step."""

    def __init__(self, domain: DomainSpec):
        self.weights = QuadWeights(domain)
        self.h = domain.grid.h
        self.times: list[float] = []
        self.values: list[float] = []

    def on_pair(self, m: int, state: WaveState) -> None:
        e = _kernels.energy_pair(
            state.u_prev, state.u_curr, self.weights.block, state.dt, self.h,
            self.weights.offsets,
        )
        self.times.append(state.t - 0.5 * state.dt)
        self.values.append(e)

    def series(self) -> "EnergySeries":
        return EnergySeries(times=np.asarray(self.times), values=np.asarray(self.values))


@dataclass(frozen=True)
class EnergySeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if np.any(self.values < -1e-30):
            raise NonPositiveEnergy("negative energy value recorded")


@dataclass(frozen=True)
class DecayFit:
    """Log-linear fit  E ~ kappa * exp(-delta t)  over [t_a, t_b]."""

    kappa: float
    delta: float
    window: tuple[float, float]
    r_squared: float
    n_points: int


def fit_decay(series: EnergySeries, window: Optional[tuple[float, float]] = None,
              floor_rel: float = 1e-14) -> DecayFit:
    """Least-squares line on (t, log E); points below floor_rel * E(0) are
    excluded before fitting."""
    t = np.asarray(series.times, dtype=float)
    e = np.asarray(series.values, dtype=float)
    if t.size == 0:
        raise WindowTooShort("empty energy series")
    e0 = e[0] if e[0] > 0 else float(np.max(e))
    if e0 <= 0:
        raise NonPositiveEnergy("energy series is identically nonpositive")
    keep = e > floor_rel * e0
    if window is not None:
        keep &= (t >= window[0]) & (t <= window[1])
    t, e = t[keep], e[keep]
    if t.size < 10:
        raise WindowTooShort(f"only {t.size} usable samples in the fit window")
    if np.any(e <= 0):
        raise NonPositiveEnergy("nonpositive energy inside the fit window")
    y = np.log(e)
    A = np.stack([t, np.ones_like(t)], axis=1)
    (slope, intercept), res, *_ = np.linalg.lstsq(A, y, rcond=None)
    yhat = A @ np.array([slope, intercept])
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(
        kappa=float(np.exp(intercept)),
        delta=float(-slope),
        window=(float(t[0]), float(t[-1])),
        r_squared=float(r2),
        n_points=int(t.size),
    )


# ---------------------------------------------------------------------------
# misc recorders


class PointProbeRecorder(StepRecorder):
    """Full time series of u at a few points (trilinear sampling)."""

    def __init__(self, domain: DomainSpec, points: np.ndarray):
        from .sampling import point_value_table

        self.table = point_value_table(domain, points)
        self.points = np.atleast_2d(np.asarray(points, float))
        self.times: list[float] = []
        self.series: list[np.ndarray] = []

    def on_sample(self, m: int, t: float, u: np.ndarray) -> None:
        self.times.append(t)
        self.series.append(self.table(u))

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.times), np.stack(self.series, axis=0)


class SnapshotRecorder(StepRecorder):
    """Keep field copies at (approximately) the requested times."""

    def __init__(self, times: Sequence[float]):
        self.wanted = sorted(float(t) for t in times)
        self.taken: list[tuple[float, np.ndarray]] = []
        self._dt = None

    def on_start(self, domain, state) -> None:
        self._dt = state.dt

    def on_sample(self, m: int, t: float, u: np.ndarray) -> None:
        while self.wanted and t >= self.wanted[0] - 0.5 * self._dt:
            self.taken.append((t, u.copy()))
            self.wanted.pop(0)


class NormTripleRecorder(StepRecorder):
    """Composite discrete norm (H2 of u, H1 of du/dt, L2 of d2u/dt2) over the
    observation region, sampled every ``every`` steps. The second time
    derivative is read off the scheme: c^2 lap u at the current level."""

    def __init__(self, domain: DomainSpec, speed: SpeedField, every: int = 10):
        self.domain = domain
        self.c2 = speed.squared()
        self.every = max(int(every), 1)
        self.sl = domain.sigma_slices
        self.mask = np.ascontiguousarray(domain.mask_q[self.sl])
        self.times: list[float] = []
        self.values: list[float] = []

    def on_pair(self, m: int, state: WaveState) -> None:
        if m % self.every:
            return
        h = self.domain.grid.h
        u = state.u_curr
        utt = self.c2 * _kernels.laplacian(u, h)
        ut = (state.u_curr - state.u_prev) / state.dt
        sl = self.sl
        m3 = self.mask
        h3 = h**3
        u_h2 = discrete_h2_norm(np.where(m3, u[sl], 0.0), h)
        ut_h1 = discrete_h1_norm(np.where(m3, ut[sl], 0.0), h)
        utt_l2 = math.sqrt(float(np.sum((utt[sl][m3]) ** 2)) * h3)
        self.times.append(state.t)
        self.values.append(u_h2 + ut_h1 + utt_l2)


class MaxAmplitudeRecorder(StepRecorder):
    """Running max of |u| over a node mask: the all-time peak and the peak
    after a given time (the clearing diagnostic)."""

    def __init__(self, domain: DomainSpec, after: float, mask: Optional[np.ndarray] = None):
        mask = domain.mask_q if mask is None else mask
        self.flat = np.flatnonzero(mask.ravel())
        self.after = float(after)
        self.peak = 0.0
        self.peak_after = 0.0

    def on_sample(self, m: int, t: float, u: np.ndarray) -> None:
        v = float(np.abs(u.ravel()[self.flat]).max())
        self.peak = max(self.peak, v)
        if t >= self.after:
            self.peak_after = max(self.peak_after, v)


class EnergyStopRule:
    """Adaptive truncation: fire when E(t) * (1+t)^2 falls below rel * E(0)."""

    def __init__(self, energy: EnergyRecorder, rel: float = 1e-8):
        self.energy = energy
        self.rel = rel

    def __call__(self, t: float) -> bool:
        vals = self.energy.values
        if len(vals) < 2 or vals[0] <= 0:
            return False
        return vals[-1] * (1.0 + t) ** 2 < self.rel * vals[0]
