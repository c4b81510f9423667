"""Nested exterior geometry: boxes, obstacle, grid masks, boundary quadrature.

The simulation lives on a uniform node grid covering ``sim_box``. Inside it sit,
strictly nested, the source box (TOML section ``[q0]``), the buffer box
(``[q1]``) and the measurement box (``[sigma]``); the obstacle is disjoint from
the buffer box and strictly inside the measurement box. The observation region
is the measurement box minus the obstacle.

Arrays use shape ``(nx, ny, nz)`` indexed ``[ix, iy, iz]`` with node
coordinates ``origin + h * (ix, iy, iz)``; the third axis is the distinguished
axis of the separated-data machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .errors import (
    DisconnectedAnnulus,
    EmptyPatch,
    NestingViolation,
    ObstacleTouchesQ0,
    UnresolvedSurface,
    ValidationError,
)

FACES = ("x-", "x+", "y-", "y+", "z-", "z+")

_SNAP_TOL = 1e-9


# ---------------------------------------------------------------------------
# basic types


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``prod_j [lo_j, hi_j]``."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ValidationError("Box needs 3 lo and 3 hi values")
        if not all(np.isfinite(lo)) or not all(np.isfinite(hi)):
            raise ValidationError("Box bounds must be finite")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValidationError(f"Box has lo >= hi: {lo} vs {hi}")

    @property
    def sides(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def surface_area(self) -> float:
        a, b, c = self.sides
        return 2.0 * float(a * b + b * c + c * a)

    def pad(self, margin: float) -> "Box":
        return Box(
            tuple(v - margin for v in self.lo),
            tuple(v + margin for v in self.hi),
        )

    def contains_box(self, inner: "Box", margin: float = 0.0) -> bool:
        lo_ok = all(i >= o + margin - _SNAP_TOL for i, o in zip(inner.lo, self.lo))
        hi_ok = all(i <= o - margin + _SNAP_TOL for i, o in zip(inner.hi, self.hi))
        return lo_ok and hi_ok

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo - _SNAP_TOL) & (pts <= hi + _SNAP_TOL), axis=-1)


@dataclass(frozen=True)
class GridSpec:
    """Uniform node grid: node ``(i,j,k)`` sits at ``origin + h*(i,j,k)``."""

    origin: tuple[float, float, float]
    h: float
    dims: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))
        if self.h <= 0:
            raise ValidationError("grid spacing must be positive")
        if any(d < 16 for d in self.dims):
            raise ValidationError(f"grid dims must be >= 16 per axis, got {self.dims}")

    def axis(self, j: int) -> np.ndarray:
        return self.origin[j] + self.h * np.arange(self.dims[j])

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.axis(0), self.axis(1), self.axis(2)

    @property
    def extent(self) -> Box:
        hi = tuple(o + self.h * (d - 1) for o, d in zip(self.origin, self.dims))
        return Box(self.origin, hi)

    def index_of(self, x: float, j: int) -> int:
        """Nearest grid plane index along axis j (must be within snap tolerance)."""
        r = (x - self.origin[j]) / self.h
        i = int(round(r))
        if i < 0 or i >= self.dims[j]:
            raise ValidationError(f"coordinate {x} outside grid along axis {j}")
        return i

    def snap(self, x: float, j: int) -> float:
        return self.origin[j] + self.h * round((x - self.origin[j]) / self.h)

    def snap_box(self, box: Box) -> Box:
        lo = tuple(self.snap(v, j) for j, v in enumerate(box.lo))
        hi = tuple(self.snap(v, j) for j, v in enumerate(box.hi))
        return Box(lo, hi)

    def meshgrid(self, slices: Optional[tuple] = None):
        xs, ys, zs = self.axes()
        if slices is not None:
            xs, ys, zs = xs[slices[0]], ys[slices[1]], zs[slices[2]]
        return np.meshgrid(xs, ys, zs, indexing="ij", sparse=True)

    def box_slices(self, box: Box) -> tuple[slice, slice, slice]:
        """Index slices of the nodes inside a grid-snapped box (inclusive)."""
        idx = []
        for j in range(3):
            a = self.index_of(box.lo[j], j)
            b = self.index_of(box.hi[j], j)
            idx.append(slice(a, b + 1))
        return tuple(idx)


# ---------------------------------------------------------------------------
# obstacles


@dataclass(frozen=True)
class NoObstacle:
    """Obstacle-free exterior; every check is vacuous."""

    @property
    def is_empty(self) -> bool:
        return True

    def contains(self, x, y, z):
        return np.zeros(np.broadcast(x, y, z).shape, dtype=bool)


@dataclass(frozen=True)
class SphereObstacle:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.radius <= 0:
            raise ValidationError("sphere radius must be positive")

    @property
    def is_empty(self) -> bool:
        return False

    @property
    def bounding_box(self) -> Box:
        c, r = np.asarray(self.center), self.radius
        return Box(tuple(c - r), tuple(c + r))

    def contains(self, x, y, z):
        cx, cy, cz = self.center
        return (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2 <= self.radius**2

    def surface_samples(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Fibonacci lattice: points, equal area weights, outward normals."""
        d = fibonacci_directions(n)
        pts = np.asarray(self.center) + self.radius * d
        area = 4.0 * np.pi * self.radius**2
        w = np.full(n, area / n)
        return pts, w, d


@dataclass(frozen=True)
class BoxObstacle:
    box: Box

    @property
    def is_empty(self) -> bool:
        return False

    @property
    def bounding_box(self) -> Box:
        return self.box

    def contains(self, x, y, z):
        lo, hi = self.box.lo, self.box.hi
        return (
            (x >= lo[0] - _SNAP_TOL) & (x <= hi[0] + _SNAP_TOL)
            & (y >= lo[1] - _SNAP_TOL) & (y <= hi[1] + _SNAP_TOL)
            & (z >= lo[2] - _SNAP_TOL) & (z <= hi[2] + _SNAP_TOL)
        )


@dataclass(frozen=True)
class RadialObstacle:
    """Boundary given by a radius table over directions about ``center``.

    ``radii[i, j]`` is the boundary distance along direction
    ``(sin t_i cos p_j, sin t_i sin p_j, cos t_i)`` with ``t_i`` uniform in
    ``(0, pi)`` (cell centers) and ``p_j`` uniform in ``[0, 2 pi)``.
    """

    center: tuple[float, float, float]
    radii: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        r = np.asarray(self.radii, dtype=float)
        if r.ndim != 2 or r.shape[0] < 4 or r.shape[1] < 8:
            raise ValidationError("radius table needs shape (>=4, >=8)")
        if np.any(r <= 0):
            raise ValidationError("radius table must be positive")
        r = r.copy()
        r.flags.writeable = False
        object.__setattr__(self, "radii", r)

    @property
    def is_empty(self) -> bool:
        return False

    @property
    def bounding_box(self) -> Box:
        c = np.asarray(self.center)
        r = float(self.radii.max())
        return Box(tuple(c - r), tuple(c + r))

    def _angles(self):
        nt, np_ = self.radii.shape
        thetas = (np.arange(nt) + 0.5) * np.pi / nt
        phis = np.arange(np_) * 2.0 * np.pi / np_
        return thetas, phis

    def radius_at(self, theta, phi):
        """Bilinear interpolation of the table, periodic in phi."""
        nt, np_ = self.radii.shape
        ti = np.asarray(theta) / (np.pi / nt) - 0.5
        pj = np.asarray(phi) % (2.0 * np.pi) / (2.0 * np.pi / np_)
        i0 = np.clip(np.floor(ti).astype(int), 0, nt - 1)
        i1 = np.clip(i0 + 1, 0, nt - 1)
        ft = np.clip(ti - i0, 0.0, 1.0)
        j0 = np.floor(pj).astype(int) % np_
        j1 = (j0 + 1) % np_
        fp = pj - np.floor(pj)
        r = (
            self.radii[i0, j0] * (1 - ft) * (1 - fp)
            + self.radii[i1, j0] * ft * (1 - fp)
            + self.radii[i0, j1] * (1 - ft) * fp
            + self.radii[i1, j1] * ft * fp
        )
        return r

    def contains(self, x, y, z):
        cx, cy, cz = self.center
        dx, dy, dz = np.broadcast_arrays(x - cx, y - cy, z - cz)
        rho = np.sqrt(dx**2 + dy**2 + dz**2)
        cos_t = np.divide(dz, rho, out=np.ones_like(rho), where=rho > 0)
        theta = np.arccos(np.clip(cos_t, -1.0, 1.0))
        phi = np.arctan2(dy, dx)
        return rho <= self.radius_at(theta, phi)

    def surface_samples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Parametric surface nodes, cell-area weights, outward normals."""
        thetas, phis = self._angles()
        nt, np_ = self.radii.shape
        T, P = np.meshgrid(thetas, phis, indexing="ij")
        R = self.radii
        st, ct = np.sin(T), np.cos(T)
        sp, cp = np.sin(P), np.cos(P)
        d = np.stack([st * cp, st * sp, ct], axis=-1)
        pts = np.asarray(self.center) + R[..., None] * d
        # tangents from parametrization x = c + r(t,p) d(t,p)
        dT = np.stack([ct * cp, ct * sp, -st], axis=-1)
        dP = np.stack([-st * sp, st * cp, np.zeros_like(st)], axis=-1)
        Rt = np.gradient(R, thetas, axis=0)
        Rp = _periodic_gradient(R, phis, axis=1)
        xt = Rt[..., None] * d + R[..., None] * dT
        xp = Rp[..., None] * d + R[..., None] * dP
        n = np.cross(xt, xp)
        nn = np.linalg.norm(n, axis=-1, keepdims=True)
        nrm = n / np.where(nn > 0, nn, 1.0)
        # orient outward (away from center)
        flip = np.sum(nrm * d, axis=-1) < 0
        nrm[flip] *= -1.0
        w = nn[..., 0] * (np.pi / nt) * (2.0 * np.pi / np_)
        return pts.reshape(-1, 3), w.ravel(), nrm.reshape(-1, 3)


ObstacleSpec = Union[NoObstacle, SphereObstacle, BoxObstacle, RadialObstacle]


def fibonacci_directions(n: int) -> np.ndarray:
    """Near-uniform unit directions (golden-angle lattice)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def _periodic_gradient(R, phis, axis):
    dphi = phis[1] - phis[0]
    return (np.roll(R, -1, axis=axis) - np.roll(R, 1, axis=axis)) / (2.0 * dphi)


# ---------------------------------------------------------------------------
# patches and meshes


@dataclass(frozen=True)
class PatchSpec:
    """A rectangle on one face of the measurement box.

    ``lo``/``hi`` bound the two in-plane coordinates (remaining axes in
    ascending order); ``None`` means the full face.
    """

    face: str
    lo: Optional[tuple[float, float]] = None
    hi: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.face not in FACES:
            raise ValidationError(f"patch face must be one of {FACES}, got {self.face!r}")


@dataclass(frozen=True)
class BoundaryMesh:
    """Quadrature nodes with areas and unit normals on one surface.

    Normals point outward from the observation region: into the obstacle on
    its boundary, out of the measurement box on that boundary. For grid-aligned
    meshes ``grid_idx`` holds the node indices and ``face_axis``/``face_dir``
    the one-sided-stencil direction (into the interior of the region).
    """

    tag: str
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    grid_idx: Optional[np.ndarray] = None
    face_axis: Optional[np.ndarray] = None
    face_dir: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("points", "weights", "normals"):
            a = np.asarray(getattr(self, name), dtype=float)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if np.any(self.weights <= 0):
            raise ValidationError("mesh weights must be positive")

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return self.points.shape[0]


def composite_weights_1d(n_nodes: int, h: float) -> np.ndarray:
    """Quadrature weights on n uniformly spaced nodes spanning (n-1)*h.

    Composite Simpson where the interval count is even; otherwise Simpson plus
    a closing 3/8 rule (or trapezoid for very short runs). Weights always sum
    to the exact interval length.
    """
    m = n_nodes - 1
    if m < 1:
        raise ValidationError("need at least 2 nodes for 1-D weights")
    w = np.zeros(n_nodes)
    if m == 1:
        w[:] = h / 2.0
    elif m == 2:
        w[:] = np.array([1.0, 4.0, 1.0]) * h / 3.0
    elif m % 2 == 0:
        w[0] = w[-1] = 1.0
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= h / 3.0
    elif m == 3:
        w[:] = np.array([3.0, 9.0, 9.0, 3.0]) * h / 8.0
    else:
        w[: n_nodes - 3] = composite_weights_1d(n_nodes - 3, h)
        w[n_nodes - 4 :] += np.array([3.0, 9.0, 9.0, 3.0]) * h / 8.0
    return w


_FACE_AXIS = {"x": 0, "y": 1, "z": 2}


def _face_parts(face: str) -> tuple[int, int]:
    axis = _FACE_AXIS[face[0]]
    side = +1 if face[1] == "+" else -1
    return axis, side


def _face_mesh(grid: GridSpec, box: Box, face: str, normal_sign: float,
               rect_lo=None, rect_hi=None, tag: str = "sigma") -> dict:
    """Grid-node quadrature on one (sub-)rectangle of a box face."""
    axis, side = _face_parts(face)
    t1, t2 = [a for a in range(3) if a != axis]
    plane = box.hi[axis] if side > 0 else box.lo[axis]
    iplane = grid.index_of(grid.snap(plane, axis), axis)
    lo1, hi1 = box.lo[t1], box.hi[t1]
    lo2, hi2 = box.lo[t2], box.hi[t2]
    if rect_lo is not None:
        lo1, lo2 = max(lo1, rect_lo[0]), max(lo2, rect_lo[1])
    if rect_hi is not None:
        hi1, hi2 = min(hi1, rect_hi[0]), min(hi2, rect_hi[1])
    if lo1 >= hi1 or lo2 >= hi2:
        raise EmptyPatch(f"patch rectangle on {face} is empty")
    i1a, i1b = grid.index_of(grid.snap(lo1, t1), t1), grid.index_of(grid.snap(hi1, t1), t1)
    i2a, i2b = grid.index_of(grid.snap(lo2, t2), t2), grid.index_of(grid.snap(hi2, t2), t2)
    n1, n2 = i1b - i1a + 1, i2b - i2a + 1
    if n1 * n2 < 8:
        raise UnresolvedSurface(f"face {face}: only {n1 * n2} nodes")
    w1 = composite_weights_1d(n1, grid.h)
    w2 = composite_weights_1d(n2, grid.h)
    W = np.outer(w1, w2).ravel()
    I1, I2 = np.meshgrid(np.arange(i1a, i1b + 1), np.arange(i2a, i2b + 1), indexing="ij")
    idx = np.zeros((I1.size, 3), dtype=np.intp)
    idx[:, axis] = iplane
    idx[:, t1] = I1.ravel()
    idx[:, t2] = I2.ravel()
    pts = grid.origin + grid.h * idx.astype(float)
    normals = np.zeros((len(W), 3))
    normals[:, axis] = normal_sign * side
    return dict(
        tag=tag, points=pts, weights=W, normals=normals, grid_idx=idx,
        face_axis=np.full(len(W), axis, dtype=np.intp),
        face_dir=np.full(len(W), -side, dtype=np.intp),  # step direction toward region interior
    )


def _concat_meshes(parts: Sequence[dict], tag: str) -> BoundaryMesh:
    def cat(key):
        vals = [p[key] for p in parts]
        return np.concatenate(vals, axis=0)

    return BoundaryMesh(
        tag=tag,
        points=cat("points"),
        weights=cat("weights"),
        normals=cat("normals"),
        grid_idx=cat("grid_idx") if all(p.get("grid_idx") is not None for p in parts) else None,
        face_axis=cat("face_axis") if all(p.get("face_axis") is not None for p in parts) else None,
        face_dir=cat("face_dir") if all(p.get("face_dir") is not None for p in parts) else None,
    )


# ---------------------------------------------------------------------------
# the assembled domain


@dataclass(frozen=True)
class StabilityConstants:
    """Geometric constants entering the frequency-growth bounds.

    ``tau`` is the largest |x3| over the source box's axial interval, ``gamma``
    the largest |x3| over the observation region; ``sigma_c = 1 + tau + gamma``
    and ``alpha = sigma_c + 1/2``.
    """

    tau: float
    gamma: float
    sigma_c: float
    alpha: float


@dataclass(frozen=True)
class DomainSpec:
    """Validated geometry with precomputed node masks (immutable after build)."""

    grid: GridSpec
    obstacle: ObstacleSpec
    sigma: Box
    q0: Box
    q1: Box
    patches: tuple[PatchSpec, ...]
    sim_box: Box
    sponge_width: float

    mask_k: np.ndarray = field(repr=False)
    mask_sigma: np.ndarray = field(repr=False)      # inside measurement box, incl boundary
    mask_q: np.ndarray = field(repr=False)          # mask_sigma minus obstacle
    mask_q0: np.ndarray = field(repr=False)
    mask_q1: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("mask_k", "mask_sigma", "mask_q", "mask_q0", "mask_q1"):
            a = getattr(self, name)
            a.flags.writeable = False

    # -- derived index helpers -------------------------------------------------

    @property
    def sigma_slices(self) -> tuple[slice, slice, slice]:
        return self.grid.box_slices(self.sigma)

    def sigma_halo_slices(self, halo: int = 2) -> tuple[slice, slice, slice]:
        out = []
        for s, d in zip(self.sigma_slices, self.grid.dims):
            out.append(slice(max(s.start - halo, 0), min(s.stop + halo, d)))
        return tuple(out)

    def q_quad_weights(self) -> np.ndarray:
        """Node quadrature weights for volume integrals over the observation
        region (half weight on the measurement-box boundary planes, zero on
        obstacle nodes). Full-grid array."""
        g = self.grid
        w = np.zeros(g.dims)
        sl = self.sigma_slices
        w[sl] = g.h**3
        for j, s in enumerate(sl):
            idx_lo = [slice(None)] * 3
            idx_hi = [slice(None)] * 3
            idx_lo[j] = s.start
            idx_hi[j] = s.stop - 1
            for idx in (idx_lo, idx_hi):
                view = [slice(None)] * 3
                for a in range(3):
                    view[a] = sl[a] if a != j else idx[a]
                w[tuple(view)] *= 0.5
        w[self.mask_k] = 0.0
        return w

    def region_labels(self) -> np.ndarray:
        """Partition of the node set: 0 obstacle, 1 outer annulus of the
        observation region, 2 buffer minus source, 3 source box, 4 exterior,
        5 sponge layer."""
        g = self.grid
        X, Y, Z = g.meshgrid()
        lab = np.full(g.dims, 4, dtype=np.int8)
        in_sponge = np.zeros(g.dims, dtype=bool)
        if self.sponge_width > 0:
            for j, c in enumerate((X, Y, Z)):
                lo = self.sim_box.lo[j] + self.sponge_width
                hi = self.sim_box.hi[j] - self.sponge_width
                in_sponge |= (c < lo - _SNAP_TOL) | (c > hi + _SNAP_TOL)
        lab[in_sponge] = 5
        lab[self.mask_q & ~self.mask_q1] = 1
        lab[self.mask_q1 & ~self.mask_q0 & ~self.mask_k] = 2
        lab[self.mask_q0 & ~self.mask_k] = 3
        lab[self.mask_k] = 0
        return lab

    # -- meshes ------------------------------------------------------------------

    def boundary_mesh(self, surface: str) -> BoundaryMesh:
        return boundary_mesh(self, surface)


def build_domain(
    *,
    obstacle: ObstacleSpec,
    sigma: Box,
    q0: Box,
    q1: Box,
    patches: Sequence[PatchSpec],
    sim_box: Box,
    h: float,
    sponge_width: float = 0.0,
) -> DomainSpec:
    """Snap the boxes to grid planes, validate the nesting, build node masks.

    Raises NestingViolation / ObstacleTouchesQ0 / DisconnectedAnnulus /
    EmptyPatch when the configuration is unusable.
    """
    if h <= 0:
        raise ValidationError("grid spacing must be positive")
    dims = tuple(int(round(s / h)) + 1 for s in sim_box.sides)
    snapped_hi = tuple(lo + h * (d - 1) for lo, d in zip(sim_box.lo, dims))
    sim_box = Box(sim_box.lo, snapped_hi)
    grid = GridSpec(origin=sim_box.lo, h=h, dims=dims)

    sigma = grid.snap_box(sigma)
    q0 = grid.snap_box(q0)
    q1 = grid.snap_box(q1)

    margin = 2.0 * h
    if not q1.contains_box(q0, margin):
        raise NestingViolation("source box not strictly inside buffer box (margin 2h)")
    if not sigma.contains_box(q1, 0.0):
        raise NestingViolation("buffer box not contained in the measurement box")
    outer_margin = max(sponge_width, margin)
    if not sim_box.contains_box(sigma, outer_margin):
        raise NestingViolation(
            "measurement box too close to the simulation box for the sponge layer"
        )

    X, Y, Z = grid.meshgrid()
    mask_k = np.asarray(obstacle.contains(X, Y, Z))
    if mask_k.shape != grid.dims:
        mask_k = np.broadcast_to(mask_k, grid.dims).copy()
    mask_sigma = np.zeros(grid.dims, dtype=bool)
    mask_sigma[grid.box_slices(sigma)] = True
    mask_q = mask_sigma & ~mask_k
    mask_q0 = np.zeros(grid.dims, dtype=bool)
    mask_q0[grid.box_slices(q0)] = True
    mask_q1 = np.zeros(grid.dims, dtype=bool)
    mask_q1[grid.box_slices(q1)] = True

    if not obstacle.is_empty:
        bb = obstacle.bounding_box
        if not sigma.contains_box(bb, margin):
            raise NestingViolation("obstacle not strictly inside the measurement box")
        # tangency is fine (the open sets are disjoint); only obstacle nodes
        # strictly inside the buffer box are a violation
        q1_interior = np.zeros(grid.dims, dtype=bool)
        sl1 = grid.box_slices(q1)
        q1_interior[tuple(slice(s.start + 1, s.stop - 1) for s in sl1)] = True
        if np.any(mask_k & q1_interior):
            raise ObstacleTouchesQ0("obstacle reaches inside the buffer (or source) box")

    # connectivity first: a buffer box spanning the measurement box is a
    # disconnection, the more specific diagnosis than its grazing margins
    annulus = mask_q & ~mask_q1
    if not annulus.any():
        raise DisconnectedAnnulus("no nodes between buffer box and outer boundary")
    structure = ndimage.generate_binary_structure(3, 1)  # 6-neighbor
    _, n_comp = ndimage.label(annulus, structure=structure)
    if n_comp != 1:
        raise DisconnectedAnnulus(
            f"region between buffer box and outer boundary splits into {n_comp} components"
        )
    if not sigma.contains_box(q1, margin):
        raise NestingViolation("buffer box not strictly inside measurement box (margin 2h)")

    patches = tuple(patches)
    if not patches:
        raise EmptyPatch("at least one measurement patch is required")

    dom = DomainSpec(
        grid=grid,
        obstacle=obstacle,
        sigma=sigma,
        q0=q0,
        q1=q1,
        patches=patches,
        sim_box=sim_box,
        sponge_width=float(sponge_width),
        mask_k=mask_k,
        mask_sigma=mask_sigma,
        mask_q=mask_q,
        mask_q0=mask_q0,
        mask_q1=mask_q1,
    )
    boundary_mesh(dom, "patch")  # validates patch resolution
    return dom


def boundary_mesh(domain: DomainSpec, surface: str) -> BoundaryMesh:
    """Quadrature mesh for 'sigma', 'obstacle' or 'patch'.

    Normals are outward from the observation region; weights sum to the
    surface area (exactly for boxes, by construction for the sphere lattice).
    """
    grid = domain.grid
    if surface == "sigma":
        parts = [_face_mesh(grid, domain.sigma, f, normal_sign=+1.0, tag="sigma") for f in FACES]
        return _concat_meshes(parts, "sigma")
    if surface == "patch":
        parts = []
        for p in domain.patches:
            parts.append(
                _face_mesh(grid, domain.sigma, p.face, normal_sign=+1.0,
                           rect_lo=p.lo, rect_hi=p.hi, tag="patch")
            )
        mesh = _concat_meshes(parts, "patch")
        if len(mesh) < 8:
            raise UnresolvedSurface("patch resolves fewer than 8 nodes")
        return mesh
    if surface == "obstacle":
        obs = domain.obstacle
        if obs.is_empty:
            raise ValidationError("no obstacle surface in an obstacle-free domain")
        if isinstance(obs, BoxObstacle):
            parts = [_face_mesh(grid, obs.box, f, normal_sign=-1.0, tag="obstacle") for f in FACES]
            # one-sided samples step away from the obstacle, i.e. outward
            for p in parts:
                p["face_dir"] = -p["face_dir"]
            return _concat_meshes(parts, "obstacle")
        if isinstance(obs, SphereObstacle):
            n = max(int(np.ceil(4.0 * np.pi * obs.radius**2 / grid.h**2)), 64)
            pts, w, outward = obs.surface_samples(n)
            return BoundaryMesh(tag="obstacle", points=pts, weights=w, normals=-outward)
        if isinstance(obs, RadialObstacle):
            pts, w, outward = obs.surface_samples()
            return BoundaryMesh(tag="obstacle", points=pts, weights=w, normals=-outward)
        raise ValidationError(f"unknown obstacle type {type(obs).__name__}")
    raise ValidationError(f"unknown surface {surface!r}")


def star_shaped_check(obstacle: ObstacleSpec, n_samples: int = 4096) -> tuple[bool, float]:
    """Is the obstacle star-shaped about the origin?

    Returns ``(ok, min(x . n(x)))`` where ``n`` is the obstacle's outward
    normal at boundary samples ``x``; positive everywhere means every ray from
    the origin crosses the boundary once. The empty obstacle passes vacuously.
    """
    if obstacle.is_empty:
        return True, float("inf")
    if isinstance(obstacle, SphereObstacle):
        pts, _, nrm = obstacle.surface_samples(n_samples)
    elif isinstance(obstacle, BoxObstacle):
        pts, nrm = _box_surface_samples(obstacle.box, n_samples)
    elif isinstance(obstacle, RadialObstacle):
        pts, _, nrm = obstacle.surface_samples()
    else:
        raise ValidationError(f"unknown obstacle type {type(obstacle).__name__}")
    support = np.einsum("ij,ij->i", pts, nrm)
    m = float(support.min())
    return m > 0.0, m


def _box_surface_samples(box: Box, n_total: int) -> tuple[np.ndarray, np.ndarray]:
    pts_all, nrm_all = [], []
    per_face = max(int(np.sqrt(n_total / 6.0)), 3)
    for face in FACES:
        axis, side = _face_parts(face)
        t1, t2 = [a for a in range(3) if a != axis]
        u = np.linspace(box.lo[t1], box.hi[t1], per_face)
        v = np.linspace(box.lo[t2], box.hi[t2], per_face)
        U, V = np.meshgrid(u, v, indexing="ij")
        pts = np.zeros((U.size, 3))
        pts[:, axis] = box.hi[axis] if side > 0 else box.lo[axis]
        pts[:, t1] = U.ravel()
        pts[:, t2] = V.ravel()
        nrm = np.zeros((U.size, 3))
        nrm[:, axis] = side
        pts_all.append(pts)
        nrm_all.append(nrm)
    return np.concatenate(pts_all), np.concatenate(nrm_all)


def stability_constants(domain: DomainSpec) -> StabilityConstants:
    """Constants read off the validated geometry (see StabilityConstants)."""
    tau = max(abs(domain.q0.lo[2]), abs(domain.q0.hi[2]))
    gamma = max(abs(domain.sigma.lo[2]), abs(domain.sigma.hi[2]))
    sigma_c = 1.0 + tau + gamma
    return StabilityConstants(tau=tau, gamma=gamma, sigma_c=sigma_c, alpha=sigma_c + 0.5)


def validation_report(domain: DomainSpec) -> dict:
    """JSON-ready summary used by the check-domain CLI subcommand."""
    c = stability_constants(domain)
    star_ok, star_min = star_shaped_check(domain.obstacle)
    labels = domain.region_labels()
    counts = {
        "obstacle": int((labels == 0).sum()),
        "annulus": int((labels == 1).sum()),
        "buffer": int((labels == 2).sum()),
        "source": int((labels == 3).sum()),
        "exterior": int((labels == 4).sum()),
        "sponge": int((labels == 5).sum()),
    }
    meshes = {}
    for surf in ("sigma", "patch") + (() if domain.obstacle.is_empty else ("obstacle",)):
        m = boundary_mesh(domain, surf)
        meshes[surf] = {"nodes": len(m), "area": m.area}
    return {
        "valid": True,
        "grid": {"h": domain.grid.h, "dims": list(domain.grid.dims),
                 "origin": list(domain.grid.origin)},
        "boxes": {
            "sigma": {"lo": list(domain.sigma.lo), "hi": list(domain.sigma.hi)},
            "q0": {"lo": list(domain.q0.lo), "hi": list(domain.q0.hi)},
            "q1": {"lo": list(domain.q1.lo), "hi": list(domain.q1.hi)},
            "sim": {"lo": list(domain.sim_box.lo), "hi": list(domain.sim_box.hi)},
        },
        "cell_counts": counts,
        "constants": {"tau": c.tau, "gamma": c.gamma, "sigma": c.sigma_c, "alpha": c.alpha},
        "star_shaped": {"ok": bool(star_ok),
                        "min_support": None if star_min == float("inf") else star_min},
        "meshes": meshes,
        "sponge_width": domain.sponge_width,
    }
