"""Analytic building blocks for initial data and speed fields.

Everything here evaluates smooth, compactly supported shapes on the grid:
infinitely differentiable cutoffs, bumps, truncated Gaussians, and the
separated form ``G(x1,x2) * w(x3)`` that the recovery pipeline inverts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError
from .geometry import DomainSpec


def smooth_step(s):
    """C-infinity monotone step: 0 for s<=0, 1 for s>=1."""
    s = np.asarray(s, dtype=float)
    a = np.zeros_like(s)
    b = np.zeros_like(s)
    pos = s > 0
    lt1 = s < 1
    a[pos] = np.exp(-1.0 / s[pos])
    b[lt1] = np.exp(-1.0 / (1.0 - s[lt1]))
    with np.errstate(invalid="ignore"):
        out = a / (a + b)
    out[~pos] = 0.0
    out[~lt1] = 1.0
    return out


def smooth_cutoff(r, r_on: float, r_off: float):
    """1 inside r<=r_on, 0 outside r>=r_off, smooth monotone transition."""
    if not r_off > r_on:
        raise ValidationError("cutoff needs r_off > r_on")
    return 1.0 - smooth_step((np.asarray(r, dtype=float) - r_on) / (r_off - r_on))


def radial_bump(X, Y, Z, center, radius, amplitude=1.0):
    """Classic compactly supported bump, peak value = amplitude at center."""
    cx, cy, cz = center
    s2 = ((X - cx) ** 2 + (Y - cy) ** 2 + (Z - cz) ** 2) / radius**2
    out = np.zeros(s2.shape)
    m = s2 < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s2[m]))
    return amplitude * out


def gaussian_1d(x, sigma, cut_on, cut_off):
    """exp(-x^2/2 sigma^2) truncated to exactly compact support |x|<=cut_off."""
    x = np.asarray(x, dtype=float)
    return np.exp(-(x**2) / (2.0 * sigma**2)) * smooth_cutoff(np.abs(x), cut_on, cut_off)


def gaussian_radial_2d(x1, x2, sigma, cut_on, cut_off, amplitude=1.0):
    r = np.sqrt(np.asarray(x1) ** 2 + np.asarray(x2) ** 2)
    return amplitude * np.exp(-(r**2) / (2.0 * sigma**2)) * smooth_cutoff(r, cut_on, cut_off)


# ---------------------------------------------------------------------------
# axial profiles (the x3 factor of separated data)


@dataclass(frozen=True)
class IndicatorProfile:
    """Indicator of the axial interval; its exponential weight has a closed form."""

    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise ValidationError("profile interval needs b > a")

    def __call__(self, x3):
        x3 = np.asarray(x3, dtype=float)
        return ((x3 >= self.a) & (x3 <= self.b)).astype(float)

    @property
    def support(self) -> tuple[float, float]:
        return (self.a, self.b)


@dataclass(frozen=True)
class BumpProfile:
    """Truncated Gaussian profile on [a, b]; smooth, nonnegative, compact."""

    a: float
    b: float
    sigma: float
    cut_fraction: float = 0.72  # cutoff starts at this fraction of the half-width

    def __post_init__(self):
        if not self.b > self.a:
            raise ValidationError("profile interval needs b > a")
        if self.sigma <= 0:
            raise ValidationError("profile sigma must be positive")

    def __call__(self, x3):
        x3 = np.asarray(x3, dtype=float)
        c = 0.5 * (self.a + self.b)
        half = 0.5 * (self.b - self.a)
        return gaussian_1d(x3 - c, self.sigma, self.cut_fraction * half, half)

    @property
    def support(self) -> tuple[float, float]:
        return (self.a, self.b)


AxialProfile = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# separated data


@dataclass(frozen=True)
class SeparatedData:
    """Separated field ``G(x1,x2) * w(x3)`` with its declared pieces.

    ``plane_values`` samples G on the grid's (x1, x2) nodes restricted to the
    source box cross-section; ``profile`` is the axial factor used later to
    invert the recovery pairing. ``fourier`` optionally gives the analytic
    transform of G for oracle comparisons.
    """

    plane_func: Callable
    profile: AxialProfile
    fourier: Optional[Callable] = None

    def assemble(self, domain: DomainSpec) -> np.ndarray:
        X, Y, Z = domain.grid.meshgrid()
        vals = self.plane_func(X, Y) * self.profile(Z)
        w_samples = self.profile(domain.grid.axis(2))
        if np.any(w_samples < 0):
            raise ValidationError("axial profile must be nonnegative")
        if not np.any(w_samples > 0):
            raise ValidationError("axial profile vanishes identically on the grid")
        return vals

    def plane_truth(self, x1, x2) -> np.ndarray:
        return self.plane_func(x1, x2)


def separated_gaussian(
    sigma: float,
    amplitude: float,
    profile: AxialProfile,
    cut_on: float,
    cut_off: float,
) -> SeparatedData:
    """Radial Gaussian cross-section with smooth truncation.

    The analytic transform of the untruncated Gaussian is attached as the
    oracle; the truncation starts where the Gaussian is already tiny, so the
    discrepancy stays far below the recovery tolerances.
    """

    def plane(x1, x2):
        return gaussian_radial_2d(x1, x2, sigma, cut_on, cut_off, amplitude)

    def fourier(e1, e2):
        return amplitude * 2.0 * np.pi * sigma**2 * np.exp(
            -(sigma**2) * (np.asarray(e1) ** 2 + np.asarray(e2) ** 2) / 2.0
        )

    return SeparatedData(plane_func=plane, profile=profile, fourier=fourier)
