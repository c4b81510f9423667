"""Hot loops for the stepper and per-step reductions.

Numba-jitted when available (the default; no fastmath, so results are
bit-reproducible and linear to rounding), with pure-numpy fallbacks kept for
environments without a JIT and for equivalence tests. Arrays are (nx, ny, nz)
C-contiguous float64 throughout.
"""

from __future__ import annotations

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# pure numpy reference implementations


def _step_free_numpy(u_prev, u, out, coef):
    c = out[1:-1, 1:-1, 1:-1]
    np.add(u[2:, 1:-1, 1:-1], u[:-2, 1:-1, 1:-1], out=c)
    c += u[1:-1, 2:, 1:-1]
    c += u[1:-1, :-2, 1:-1]
    c += u[1:-1, 1:-1, 2:]
    c += u[1:-1, 1:-1, :-2]
    uc = u[1:-1, 1:-1, 1:-1]
    c -= 6.0 * uc
    if np.isscalar(coef):
        c *= coef
    else:
        c *= coef[1:-1, 1:-1, 1:-1]
    c += uc
    c += uc
    c -= u_prev[1:-1, 1:-1, 1:-1]


def _step_damped_numpy(u_prev, u, out, coef, damp_a):
    # (1 + a) u_next = 2u - (1 - a) u_prev + coef*lap(u),  a = s*dt/2
    _step_free_numpy(u_prev, u, out, coef)
    c = out[1:-1, 1:-1, 1:-1]
    a = damp_a[1:-1, 1:-1, 1:-1]
    c += a * u_prev[1:-1, 1:-1, 1:-1]
    c /= 1.0 + a


def _laplacian_numpy(u, out, inv_h2):
    c = out[1:-1, 1:-1, 1:-1]
    np.add(u[2:, 1:-1, 1:-1], u[:-2, 1:-1, 1:-1], out=c)
    c += u[1:-1, 2:, 1:-1]
    c += u[1:-1, :-2, 1:-1]
    c += u[1:-1, 1:-1, 2:]
    c += u[1:-1, 1:-1, :-2]
    c -= 6.0 * u[1:-1, 1:-1, 1:-1]
    c *= inv_h2
    out[0, :, :] = out[-1, :, :] = 0.0
    out[:, 0, :] = out[:, -1, :] = 0.0
    out[:, :, 0] = out[:, :, -1] = 0.0


def _energy_pair_numpy(u_prev, u, weights, inv_dt, inv_2h, i0, j0, k0):
    """Quadratic energy of the pair on a weighted subregion.

    Gradient of the half-step average by centered differences, time derivative
    by the difference quotient; weights carry the cell volumes (zero outside
    the region). Offsets locate the weight block inside the full arrays.
    """
    ni, nj, nk = weights.shape
    up = u_prev[i0 : i0 + ni + 2, j0 : j0 + nj + 2, k0 : k0 + nk + 2]
    uc = u[i0 : i0 + ni + 2, j0 : j0 + nj + 2, k0 : k0 + nk + 2]
    avg = 0.5 * (up + uc)
    gx = (avg[2:, 1:-1, 1:-1] - avg[:-2, 1:-1, 1:-1]) * inv_2h
    gy = (avg[1:-1, 2:, 1:-1] - avg[1:-1, :-2, 1:-1]) * inv_2h
    gz = (avg[1:-1, 1:-1, 2:] - avg[1:-1, 1:-1, :-2]) * inv_2h
    ut = (uc[1:-1, 1:-1, 1:-1] - up[1:-1, 1:-1, 1:-1]) * inv_dt
    return float(np.sum(weights * (gx * gx + gy * gy + gz * gz + ut * ut)))


def _accumulate_numpy(acc, u, scale, i0, j0, k0):
    ni, nj, nk = acc.shape
    acc += scale * u[i0 : i0 + ni, j0 : j0 + nj, k0 : k0 + nk]


def _weighted_sumsq_numpy(u, weights, i0, j0, k0):
    ni, nj, nk = weights.shape
    v = u[i0 : i0 + ni, j0 : j0 + nj, k0 : k0 + nk]
    return float(np.sum(weights * v * v))


if HAVE_NUMBA:
    _njit = numba.njit(cache=True)

    @_njit
    def _step_free_scalar(u_prev, u, out, coef):
        nx, ny, nz = u.shape
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                for k in range(1, nz - 1):
                    lap = (
                        u[i + 1, j, k] + u[i - 1, j, k]
                        + u[i, j + 1, k] + u[i, j - 1, k]
                        + u[i, j, k + 1] + u[i, j, k - 1]
                        - 6.0 * u[i, j, k]
                    )
                    out[i, j, k] = 2.0 * u[i, j, k] - u_prev[i, j, k] + coef * lap

    @_njit
    def _step_free_var(u_prev, u, out, coef):
        nx, ny, nz = u.shape
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                for k in range(1, nz - 1):
                    lap = (
                        u[i + 1, j, k] + u[i - 1, j, k]
                        + u[i, j + 1, k] + u[i, j - 1, k]
                        + u[i, j, k + 1] + u[i, j, k - 1]
                        - 6.0 * u[i, j, k]
                    )
                    out[i, j, k] = 2.0 * u[i, j, k] - u_prev[i, j, k] + coef[i, j, k] * lap

    @_njit
    def _step_damped_scalar(u_prev, u, out, coef, damp_a):
        nx, ny, nz = u.shape
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                for k in range(1, nz - 1):
                    lap = (
                        u[i + 1, j, k] + u[i - 1, j, k]
                        + u[i, j + 1, k] + u[i, j - 1, k]
                        + u[i, j, k + 1] + u[i, j, k - 1]
                        - 6.0 * u[i, j, k]
                    )
                    a = damp_a[i, j, k]
                    out[i, j, k] = (
                        2.0 * u[i, j, k] - (1.0 - a) * u_prev[i, j, k] + coef * lap
                    ) / (1.0 + a)

    @_njit
    def _step_damped_var(u_prev, u, out, coef, damp_a):
        nx, ny, nz = u.shape
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                for k in range(1, nz - 1):
                    lap = (
                        u[i + 1, j, k] + u[i - 1, j, k]
                        + u[i, j + 1, k] + u[i, j - 1, k]
                        + u[i, j, k + 1] + u[i, j, k - 1]
                        - 6.0 * u[i, j, k]
                    )
                    a = damp_a[i, j, k]
                    out[i, j, k] = (
                        2.0 * u[i, j, k] - (1.0 - a) * u_prev[i, j, k] + coef[i, j, k] * lap
                    ) / (1.0 + a)

    @_njit
    def _zero_at(u, flat_idx):
        r = u.ravel()
        for n in range(flat_idx.size):
            r[flat_idx[n]] = 0.0

    @_njit
    def _energy_pair(u_prev, u, weights, inv_dt, inv_2h, i0, j0, k0):
        ni, nj, nk = weights.shape
        total = 0.0
        for i in range(ni):
            for j in range(nj):
                for k in range(nk):
                    w = weights[i, j, k]
                    if w == 0.0:
                        continue
                    ii, jj, kk = i0 + i, j0 + j, k0 + k
                    ax0 = 0.5 * (u_prev[ii + 1, jj, kk] + u[ii + 1, jj, kk])
                    ax1 = 0.5 * (u_prev[ii - 1, jj, kk] + u[ii - 1, jj, kk])
                    ay0 = 0.5 * (u_prev[ii, jj + 1, kk] + u[ii, jj + 1, kk])
                    ay1 = 0.5 * (u_prev[ii, jj - 1, kk] + u[ii, jj - 1, kk])
                    az0 = 0.5 * (u_prev[ii, jj, kk + 1] + u[ii, jj, kk + 1])
                    az1 = 0.5 * (u_prev[ii, jj, kk - 1] + u[ii, jj, kk - 1])
                    gx = (ax0 - ax1) * inv_2h
                    gy = (ay0 - ay1) * inv_2h
                    gz = (az0 - az1) * inv_2h
                    ut = (u[ii, jj, kk] - u_prev[ii, jj, kk]) * inv_dt
                    total += w * (gx * gx + gy * gy + gz * gz + ut * ut)
        return total

    @_njit
    def _accumulate(acc, u, scale, i0, j0, k0):
        ni, nj, nk = acc.shape
        for i in range(ni):
            for j in range(nj):
                for k in range(nk):
                    acc[i, j, k] += scale * u[i0 + i, j0 + j, k0 + k]

    @_njit
    def _weighted_sumsq(u, weights, i0, j0, k0):
        ni, nj, nk = weights.shape
        total = 0.0
        for i in range(ni):
            for j in range(nj):
                for k in range(nk):
                    w = weights[i, j, k]
                    if w != 0.0:
                        v = u[i0 + i, j0 + j, k0 + k]
                        total += w * v * v
        return total

else:  # pragma: no cover - exercised only without numba
    _step_free_scalar = _step_free_numpy
    _step_free_var = _step_free_numpy
    _energy_pair = _energy_pair_numpy
    _accumulate = _accumulate_numpy
    _weighted_sumsq = _weighted_sumsq_numpy

    def _step_damped_scalar(u_prev, u, out, coef, damp_a):
        _step_damped_numpy(u_prev, u, out, coef, damp_a)

    _step_damped_var = _step_damped_scalar

    def _zero_at(u, flat_idx):
        u.ravel()[flat_idx] = 0.0


def advance(u_prev, u, out, coef, damp_a=None):
    """One leapfrog update into ``out``; ``coef`` is (c*dt/h)^2 (scalar or array),
    ``damp_a`` the sponge half-coefficient s*dt/2 (array) or None."""
    coef_is_arr = isinstance(coef, np.ndarray)
    if damp_a is None:
        if coef_is_arr:
            _step_free_var(u_prev, u, out, coef)
        else:
            _step_free_scalar(u_prev, u, out, float(coef))
    else:
        if coef_is_arr:
            _step_damped_var(u_prev, u, out, coef, damp_a)
        else:
            _step_damped_scalar(u_prev, u, out, float(coef), damp_a)


def zero_at(u, flat_idx):
    """In-place Dirichlet enforcement at precomputed flat indices."""
    if flat_idx.size:
        _zero_at(u, flat_idx)


def energy_pair(u_prev, u, weights, dt, h, offsets):
    """Weighted quadratic energy of a step pair over the region of ``weights``."""
    i0, j0, k0 = offsets
    return float(
        _energy_pair(u_prev, u, weights, 1.0 / dt, 0.5 / h, i0, j0, k0)
    )


def accumulate(acc, u, scale, offsets):
    """acc += scale * u[subblock]; acc shapes the subblock, offsets locate it."""
    i0, j0, k0 = offsets
    _accumulate(acc, u, float(scale), i0, j0, k0)


def weighted_sumsq(u, weights, offsets):
    i0, j0, k0 = offsets
    return float(_weighted_sumsq(u, weights, i0, j0, k0))


def laplacian(u, h, out=None):
    """7-point Laplacian with a zeroed outer ring (numpy; not a hot path)."""
    if out is None:
        out = np.zeros_like(u)
    _laplacian_numpy(u, out, 1.0 / (h * h))
    return out


def laplacian_4th(u, h):
    """4th-order 13-point Laplacian; valid 2 cells from the array edge.

    Used by residual checks: its truncation error is independent of the
    stepper's operator, so residuals measure consistency with the continuum
    equation instead of reproducing the scheme algebra.
    """
    out = np.zeros_like(u)
    c = out[2:-2, 2:-2, 2:-2]
    inv = 1.0 / (12.0 * h * h)

    def sl(axis, o):
        idx = [slice(2, -2)] * 3
        idx[axis] = slice(2 + o, u.shape[axis] - 2 + o)
        return tuple(idx)

    for ax in range(3):
        c += (
            -u[sl(ax, 2)] + 16.0 * u[sl(ax, 1)] - 30.0 * u[sl(ax, 0)]
            + 16.0 * u[sl(ax, -1)] - u[sl(ax, -2)]
        ) * inv
    return out
