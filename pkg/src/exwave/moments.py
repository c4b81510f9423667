"""Streaming time moments of the wave field and their consistency checks.

The k-th moment is the trapezoid sum of ``(-1)^k/k! * t^k * u(t,.)`` up to the
truncation time, with a smooth taper window closing the quadrature (a hard cut
leaves endpoint terms that the t^k weights amplify; the taper trades them for
a tail-sized bias that the recorded tail estimate covers).

Moments of boundary traces equal traces of the volume moments because both
are linear in the samples; traces are therefore materialized from the volume
block on demand, and the equality is asserted numerically in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigMismatch, ValidationError
from .fields import smooth_step
from .geometry import DomainSpec
from .sampling import MeshSampler
from .wavesim import QuadWeights, SpeedField, StepRecorder

_FACT = (1.0, 1.0, 2.0, 6.0)


def moment_scale(order: int, t: float) -> float:
    """Weight (-1)^k t^k / k! applied to each sample."""
    return ((-1.0) ** order) * t**order / _FACT[order]


def taper_factor(t: float, t_final: float, width: float) -> float:
    """1 until t_final - width, then a smooth descent to 0 at t_final."""
    if width <= 0.0 or t <= t_final - width:
        return 1.0
    if t >= t_final:
        return 0.0
    s = (t - (t_final - width)) / width
    return float(1.0 - smooth_step(np.asarray([s]))[0])


@dataclass(frozen=True)
class TraceMoments:
    """Moment of the boundary trace and of its normal flux at mesh points."""

    values: np.ndarray
    fluxes: np.ndarray


@dataclass(frozen=True)
class SbpRing:
    """Boundary edge structure of the discrete Green pairing.

    Edges couple an interior node x of the observation region to its grid
    neighbor y just outside it (on the measurement-box surface, or inside the
    obstacle where the field is pinned to zero). Indices are relative to the
    moment volume block; ``slot`` arrays map edge endpoints into the ring node
    list used for measurement-noise injection.
    """

    x_flat: np.ndarray
    y_flat: np.ndarray
    x_pts: np.ndarray
    y_pts: np.ndarray
    ring_flat: np.ndarray          # unique node list (block-relative flat)
    ring_pts: np.ndarray
    x_slot: np.ndarray
    y_slot: np.ndarray             # -1 where y is an obstacle node (pinned, unmeasured)


def build_sbp_ring(domain: DomainSpec) -> SbpRing:
    g = domain.grid
    sl = domain.sigma_slices
    shape = tuple(s.stop - s.start for s in sl)
    inside = np.zeros(shape, dtype=bool)
    inside[1:-1, 1:-1, 1:-1] = True
    inside &= ~domain.mask_k[sl]
    kmask = domain.mask_k[sl]

    xs = []
    ys = []
    for ax in range(3):
        for d in (-1, +1):
            shifted = np.roll(inside, -d, axis=ax)
            edge_sel = inside & ~shifted
            # drop rolls that wrapped around
            lim = [slice(None)] * 3
            lim[ax] = slice(-1, None) if d > 0 else slice(0, 1)
            wrap = np.zeros(shape, dtype=bool)
            wrap[tuple(lim)] = True
            edge_sel &= ~wrap
            xi = np.argwhere(edge_sel)
            if xi.size == 0:
                continue
            yi = xi.copy()
            yi[:, ax] += d
            xs.append(xi)
            ys.append(yi)
    xi = np.concatenate(xs)
    yi = np.concatenate(ys)
    x_flat = np.ravel_multi_index(tuple(xi.T), shape)
    y_flat = np.ravel_multi_index(tuple(yi.T), shape)
    origin = np.array([g.origin[j] + g.h * sl[j].start for j in range(3)])
    x_pts = origin + g.h * xi
    y_pts = origin + g.h * yi

    y_is_obstacle = kmask.ravel()[y_flat]
    measured = np.concatenate([x_flat, y_flat[~y_is_obstacle]])
    ring_flat, inverse = np.unique(measured, return_inverse=True)
    x_slot = inverse[: x_flat.size]
    y_slot = np.full(y_flat.size, -1, dtype=np.int64)
    y_slot[~y_is_obstacle] = inverse[x_flat.size :]
    ring_idx = np.array(np.unravel_index(ring_flat, shape)).T
    ring_pts = origin + g.h * ring_idx
    return SbpRing(
        x_flat=x_flat, y_flat=y_flat, x_pts=x_pts, y_pts=y_pts,
        ring_flat=ring_flat, ring_pts=ring_pts, x_slot=x_slot, y_slot=y_slot,
    )


@dataclass(frozen=True)
class MomentData:
    """One time moment: volume block over the measurement box plus metadata.

    ``noise_unit`` holds the same moment accumulated from unit-variance
    per-sample noise on the ring nodes; scaled by eps * noise_scale it
    realizes the additive measurement-noise model.
    """

    order: int
    volume: np.ndarray
    block_slices: tuple[slice, slice, slice]
    h: float
    dt: float
    t_max: float
    taper_width: float
    tail_estimate: float
    ring: Optional[SbpRing] = None
    noise_unit: Optional[np.ndarray] = None
    noise_scale: float = 0.0

    def to_full_grid(self, dims: tuple[int, int, int]) -> np.ndarray:
        full = np.zeros(dims)
        full[self.block_slices] = self.volume
        return full


class MomentAccumulator(StepRecorder):
    """Streams volume moments (orders 0..3 by default) over the measurement
    box; optionally accumulates matched unit-noise moments on the boundary
    ring for the measurement-noise model."""

    def __init__(
        self,
        domain: DomainSpec,
        t_final: float,
        orders: Sequence[int] = (0, 1, 2, 3),
        taper_width: Optional[float] = None,
        noise_seed: Optional[int] = None,
        tail_window: float = 5.0,
    ):
        if any(k < 0 or k > 3 for k in orders):
            raise ValidationError("moment orders must lie in 0..3")
        self.domain = domain
        self.orders = tuple(orders)
        self.t_final = float(t_final)
        self.taper_width = (
            min(1.2, 0.3 * t_final) if taper_width is None else float(taper_width)
        )
        self.sl = domain.sigma_slices
        shape = tuple(s.stop - s.start for s in self.sl)
        self.offsets = (self.sl[0].start, self.sl[1].start, self.sl[2].start)
        self.blocks = {k: np.zeros(shape) for k in self.orders}
        self.qw = QuadWeights(domain)
        self.tail_window = tail_window
        self._l2_track: list[tuple[float, float]] = []
        self._dt = None
        self._last_sample = None
        self._last_t = 0.0
        self.ring = build_sbp_ring(domain)
        if noise_seed is not None:
            self._rng = np.random.default_rng(noise_seed)
            self.noise_units = {k: np.zeros(self.ring.ring_flat.size) for k in self.orders}
            self._noise_max = 0.0
            self._last_noise = None
        else:
            self.noise_units = None

    def on_start(self, domain, state) -> None:
        self._dt = state.dt

    def on_sample(self, m: int, t: float, u: np.ndarray) -> None:
        dt = self._dt
        wq = dt * taper_factor(t, self.t_final, self.taper_width)
        if m == 0:
            wq *= 0.5
        block_view = u[self.sl]
        if wq != 0.0:
            for k in self.orders:
                _kernels.accumulate(self.blocks[k], u, wq * moment_scale(k, t), self.offsets)
        l2 = math.sqrt(max(_kernels.weighted_sumsq(u, self.qw.block, self.qw.offsets), 0.0))
        self._l2_track.append((t, l2))
        self._last_t = t
        self._last_sample = np.ascontiguousarray(block_view)
        if self.noise_units is not None:
            draw = self._rng.standard_normal(self.ring.ring_flat.size)
            if wq != 0.0:
                for k in self.orders:
                    self.noise_units[k] += (wq * moment_scale(k, t)) * draw
            self._noise_max = max(
                self._noise_max,
                float(np.abs(block_view.ravel()[self.ring.ring_flat]).max()),
            )
            self._last_noise = draw

    def finalize(self, t_final: float, dt: float) -> None:
        # close the trapezoid: the final sample carries half weight
        t = self._last_t
        wq = 0.5 * dt * taper_factor(t, self.t_final, self.taper_width)
        if wq != 0.0 and self._last_sample is not None:
            for k in self.orders:
                self.blocks[k] -= (wq * moment_scale(k, t)) * self._last_sample
            if self.noise_units is not None:
                for k in self.orders:
                    self.noise_units[k] -= (wq * moment_scale(k, t)) * self._last_noise

    def results(self) -> dict[int, MomentData]:
        t_end = self._last_t
        w = min(self.tail_window, 0.5 * t_end) if t_end > 0 else 0.0
        tail_samples = [(t, l2) for (t, l2) in self._l2_track if t >= t_end - w]
        out = {}
        for k in self.orders:
            if tail_samples:
                peak = max((t**k / _FACT[k]) * l2 for (t, l2) in tail_samples)
            else:
                peak = 0.0
            tail = 2.0 * max(w, 1.0) * peak
            out[k] = MomentData(
                order=k,
                volume=self.blocks[k],
                block_slices=self.sl,
                h=self.domain.grid.h,
                dt=self._dt,
                t_max=t_end,
                taper_width=self.taper_width,
                tail_estimate=tail,
                ring=self.ring,
                noise_unit=None if self.noise_units is None else self.noise_units[k],
                noise_scale=0.0 if self.noise_units is None else self._noise_max,
            )
        return out


def moment_of_series(
    order: int,
    times: np.ndarray,
    values: np.ndarray,
    taper_width: float = 0.0,
    t_end: Optional[float] = None,
) -> np.ndarray:
    """Moment of an explicitly sampled time series (trapezoid, uniform dt).

    ``values`` has time on axis 0; returns the accumulated moment with the
    same trailing shape. ``t_end`` anchors the taper window (defaults to the
    last sample). This is the reference path the streaming recorder is tested
    against and the tool for synthetic traces.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or values.shape[0] != times.size:
        raise ValidationError("times and values disagree on the sample count")
    if times.size < 2:
        raise ValidationError("need at least two samples")
    dt = times[1] - times[0]
    if not np.allclose(np.diff(times), dt, rtol=0, atol=1e-9 * max(dt, 1.0)):
        raise ValidationError("samples must be uniform in time")
    t_final = times[-1] if t_end is None else float(t_end)
    w = np.full(times.size, dt)
    w[0] = w[-1] = dt / 2.0
    for i, t in enumerate(times):
        w[i] *= taper_factor(t, t_final, taper_width) * moment_scale(order, t)
    return np.tensordot(w, values, axes=(0, 0))


def boundary_traces(moment: MomentData, domain: DomainSpec, surface: str) -> TraceMoments:
    """Trace and normal flux of a volume moment on a surface mesh.

    Equals the streamed moment of the per-step traces (linearity); sampled
    from the volume block through the standard mesh stencils.
    """
    mesh = domain.boundary_mesh(surface)
    sampler = MeshSampler(domain, mesh)
    full = moment.to_full_grid(domain.grid.dims)
    return TraceMoments(values=sampler.values(full), fluxes=sampler.flux(full))


def with_noise(moment: MomentData, eps: float) -> MomentData:
    """Additive measurement noise: perturb the ring nodes of the volume block
    by eps * max|trace| times the accumulated unit-noise moment."""
    if eps == 0.0:
        return moment
    if moment.noise_unit is None or moment.ring is None:
        raise ValidationError("moment was accumulated without a noise stream")
    vol = moment.volume.copy()
    vol.ravel()[moment.ring.ring_flat] += eps * moment.noise_scale * moment.noise_unit
    return replace(moment, volume=vol)


# ---------------------------------------------------------------------------
# consistency checks


@dataclass(frozen=True)
class PoissonResidualReport:
    """Relative residuals of the moment chain on an eroded evaluation region."""

    residuals: dict[int, float]
    absolute: dict[int, float]
    region: str
    h: float
    n_region: int


def poisson_residual(
    moments: dict[int, MomentData],
    f: Optional[np.ndarray],
    g: Optional[np.ndarray],
    speed: SpeedField,
    domain: DomainSpec,
    region: str = "q",
    erode: int = 2,
) -> PoissonResidualReport:
    """Check the chain: lap m0 = -c^-2 g, lap m1 = -c^-2 f, lap mk = c^-2 m_{k-2}.

    The residual operator is a 4th-order Laplacian, so the numbers measure
    consistency with the continuum equations (the stepper's own operator would
    satisfy them identically by construction). Evaluation on the region mask
    eroded by ``erode`` cells; relative to the L2 size of the right-hand side,
    absolute where the right-hand side vanishes.
    """
    from scipy import ndimage

    sl = domain.sigma_slices
    if region == "q":
        base = domain.mask_q[sl]
    elif region == "q0":
        base = domain.mask_q0[sl] & ~domain.mask_k[sl]
    else:
        raise ValidationError(f"unknown residual region {region!r}")
    structure = ndimage.generate_binary_structure(3, 1)
    mask = ndimage.binary_erosion(base, structure=structure, iterations=erode, border_value=0)
    # keep the wide stencil inside the block
    guard = np.zeros_like(mask)
    guard[erode:-erode, erode:-erode, erode:-erode] = True
    mask &= guard
    n_region = int(mask.sum())
    if n_region == 0:
        raise ValidationError("residual region is empty after erosion")

    c2 = speed.squared()
    inv_c2 = (1.0 / c2) if np.isscalar(c2) else 1.0 / c2[sl]

    rel: dict[int, float] = {}
    absres: dict[int, float] = {}
    for k, mom in sorted(moments.items()):
        lap = _kernels.laplacian_4th(mom.volume, mom.h)
        if k == 0:
            if g is None:
                raise ValidationError("order-0 residual needs the velocity data")
            rhs = inv_c2 * g[sl]
        elif k == 1:
            if f is None:
                raise ValidationError("order-1 residual needs the displacement data")
            rhs = inv_c2 * f[sl]
        else:
            prev = moments.get(k - 2)
            if prev is None:
                continue
            rhs = -(inv_c2 * prev.volume)
        res = lap[mask] + rhs[mask]
        a = float(np.linalg.norm(res))
        d = float(np.linalg.norm(rhs[mask]))
        absres[k] = a
        if d == 0.0:
            rel[k] = float("nan")
        else:
            rel[k] = a / d
    return PoissonResidualReport(
        residuals=rel, absolute=absres, region=region, h=domain.grid.h, n_region=n_region
    )


def laplace_consistency(
    moment_values: np.ndarray,
    times: np.ndarray,
    series: np.ndarray,
    z: float,
) -> float:
    """Compare the truncated power series sum_k m_k z^k against the direct
    exponential-weighted quadrature of the recorded series at the same points.
    Returns the worst relative mismatch; expected O(z^{K+1})."""
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    mv = np.atleast_2d(np.asarray(moment_values, dtype=float))
    dt = times[1] - times[0]
    w = np.full(times.size, dt)
    w[0] = w[-1] = dt / 2.0
    direct = np.tensordot(w * np.exp(-z * times), series, axes=(0, 0))
    partial = np.zeros_like(direct)
    for k in range(mv.shape[0]):
        partial += mv[k] * z**k
    scale = np.maximum(np.abs(direct), 1e-300)
    return float(np.max(np.abs(direct - partial) / scale))


def difference_moments(
    a: dict[int, MomentData], b: dict[int, MomentData]
) -> dict[int, MomentData]:
    """Per-order subtraction of two runs' moments (same grid, dt, truncation)."""
    if set(a) != set(b):
        raise ConfigMismatch("runs accumulated different moment orders")
    out = {}
    for k in a:
        ma, mb = a[k], b[k]
        if ma.volume.shape != mb.volume.shape or ma.block_slices != mb.block_slices:
            raise ConfigMismatch("runs use different grids")
        if abs(ma.dt - mb.dt) > 1e-15 or abs(ma.t_max - mb.t_max) > 1e-12:
            raise ConfigMismatch("runs use different time stepping or truncation")
        out[k] = replace(
            ma,
            volume=ma.volume - mb.volume,
            tail_estimate=ma.tail_estimate + mb.tail_estimate,
            noise_unit=ma.noise_unit,
            noise_scale=max(ma.noise_scale, mb.noise_scale),
        )
    return out
