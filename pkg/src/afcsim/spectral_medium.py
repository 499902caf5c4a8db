"""Frequency-resolved absorbing medium and comb-shaped absorption spectra.

All frequencies are detunings in Hz from the laser carrier. Optical depth is
the Beer-Lambert exponent for intensity, so a flat medium of depth ``d``
transmits ``exp(-d)`` of the incoming energy.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import fftconvolve

__all__ = [
    "FrequencyGrid",
    "AbsorptionSpectrum",
    "MaterialParams",
    "CombParams",
    "ToothShape",
    "make_frequency_grid",
    "flat_absorption",
    "synthetic_comb",
    "superpose_spectra",
    "apply_superhyperfine_splitting",
    "lorentzian_broaden",
    "comb_mean_depth",
    "write_spectrum_csv",
]

DEFAULT_D_MAX = 4.0


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform detuning grid symmetric about zero."""

    span: float
    n_points: int
    center_detuning: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.span) and self.span > 0):
            raise ValueError(f"span must be finite and > 0, got {self.span!r}")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points!r}")
        if self.center_detuning != 0.0:
            raise ValueError("frequency grids are centred on the laser carrier (center_detuning = 0)")

    @property
    def spacing(self) -> float:
        return self.span / (self.n_points - 1)

    @property
    def values(self) -> np.ndarray:
        return np.linspace(-self.span / 2, self.span / 2, self.n_points)

    def check_resolves(self, width: float, what: str = "tooth FWHM") -> None:
        """Raise if the grid spacing is coarser than ``width / 8``."""
        if self.spacing > width / 8:
            raise ValueError(
                f"grid spacing {self.spacing:.4g} Hz does not resolve {what} {width:.4g} Hz "
                f"(need spacing <= {width / 8:.4g} Hz; increase n_points)"
            )


@dataclass(frozen=True)
class AbsorptionSpectrum:
    """Optical depth sampled on a :class:`FrequencyGrid`.

    ``periods`` records the comb periods (Hz) that went into the spectrum, so
    propagation can check that the time window holds the expected echoes.
    """

    grid: FrequencyGrid
    d: np.ndarray
    periods: tuple = ()

    def __post_init__(self):
        d = np.array(self.d, dtype=float)
        if d.shape != (self.grid.n_points,):
            raise ValueError(f"depth array has shape {d.shape}, grid has {self.grid.n_points} points")
        if not np.all(np.isfinite(d)):
            raise ValueError("optical depth must be finite")
        if np.any(d < 0):
            raise ValueError("optical depth must be non-negative")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "periods", tuple(float(p) for p in self.periods))

    @property
    def detuning(self) -> np.ndarray:
        return self.grid.values

    @property
    def storage_times(self) -> tuple:
        return tuple(1.0 / p for p in self.periods)

    def transmission(self) -> np.ndarray:
        return np.exp(-self.d)

    def integrated_depth(self) -> float:
        return float(trapezoid(self.d, dx=self.grid.spacing))


@dataclass(frozen=True)
class MaterialParams:
    """Nd:YVO4-like defaults for the three-level system."""

    T1_excited: float = 100e-6
    T2_optical: float = 7e-6
    TZ_spin: float = 6e-3
    inhom_fwhm: float = 2e9
    d_max: float = DEFAULT_D_MAX
    branching_to_aux: float = 0.5
    shf_splitting: float = 0.0
    shf_weight: float = 0.5

    def __post_init__(self):
        for name in ("T1_excited", "T2_optical", "TZ_spin", "inhom_fwhm", "d_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.T2_optical > 2 * self.T1_excited:
            raise ValueError("T2_optical cannot exceed 2*T1_excited")
        if not 0 <= self.branching_to_aux <= 1:
            raise ValueError("branching_to_aux must lie in [0, 1]")
        if self.shf_splitting < 0:
            raise ValueError("shf_splitting must be >= 0")
        if not 0 <= self.shf_weight <= 1:
            raise ValueError("shf_weight must lie in [0, 1]")


class ToothShape(str, Enum):
    LORENTZIAN = "lorentzian"
    GAUSSIAN = "gaussian"
    SQUARE = "square"


@dataclass(frozen=True)
class CombParams:
    period_delta: float
    tooth_fwhm: float
    tooth_shape: ToothShape = ToothShape.LORENTZIAN
    d_peak: float = 1.0
    d_background: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "tooth_shape", ToothShape(self.tooth_shape))
        if not self.period_delta > 0:
            raise ValueError("period_delta must be > 0")
        if not 0 < self.tooth_fwhm < self.period_delta:
            raise ValueError(
                f"tooth_fwhm ({self.tooth_fwhm:.4g} Hz) must satisfy 0 < tooth_fwhm < period_delta "
                f"({self.period_delta:.4g} Hz); finesse must exceed 1"
            )
        if self.d_peak < 0 or self.d_background < 0:
            raise ValueError("d_peak and d_background must be >= 0")

    @property
    def finesse(self) -> float:
        return self.period_delta / self.tooth_fwhm

    @property
    def storage_time(self) -> float:
        return 1.0 / self.period_delta


def make_frequency_grid(span: float, n_points: int) -> FrequencyGrid:
    return FrequencyGrid(span=float(span), n_points=int(n_points))


def _clip(d: np.ndarray, d_max: float | None) -> np.ndarray:
    if d_max is not None and np.any(d > d_max * (1 + 1e-12)):
        warnings.warn(
            f"optical depth {d.max():.3g} exceeds ceiling {d_max:.3g}; clipping",
            RuntimeWarning,
            stacklevel=3,
        )
        d = np.minimum(d, d_max)
    return d


def flat_absorption(grid: FrequencyGrid, d0: float) -> AbsorptionSpectrum:
    if not d0 >= 0:
        raise ValueError(f"d0 must be >= 0, got {d0!r}")
    return AbsorptionSpectrum(grid, np.full(grid.n_points, float(d0)))


def _lorentzian_periodic(x: np.ndarray, eps: float, n_teeth: int = 64) -> np.ndarray:
    # x: detuning in units of the period, folded to [-1/2, 1/2); eps: HWHM / period.
    # Direct sum over 2*n_teeth+1 teeth plus an integral estimate of the far tails.
    k = np.arange(-n_teeth, n_teeth + 1)
    total = np.zeros_like(x)
    for kk in k:
        total += eps**2 / ((x - kk) ** 2 + eps**2)
    # sum_{k>K} eps^2/(k-x)^2 ~ eps^2/(K+1/2-x), same on the negative side
    total += eps**2 / (n_teeth + 0.5 - x) + eps**2 / (n_teeth + 0.5 + x)
    return total


def _gaussian_periodic(x: np.ndarray, sigma: float) -> np.ndarray:
    reach = int(math.ceil(8 * sigma)) + 1
    total = np.zeros_like(x)
    for kk in range(-reach, reach + 1):
        total += np.exp(-0.5 * ((x - kk) / sigma) ** 2)
    return total


def _square_periodic(x: np.ndarray, duty: float) -> np.ndarray:
    # points exactly on a tooth edge get half weight
    dist = np.abs(x) - duty / 2
    edge = np.abs(dist) < 1e-9
    return np.where(edge, 0.5, (dist < 0).astype(float))


def _tooth_profile(f: np.ndarray, params: CombParams) -> np.ndarray:
    """Periodic tooth train evaluated at detunings ``f``, unit height at f = 0."""
    x = f / params.period_delta
    x = x - np.floor(x + 0.5)
    zero = np.zeros(1)
    width = params.tooth_fwhm / params.period_delta
    if params.tooth_shape is ToothShape.LORENTZIAN:
        eps = width / 2
        return _lorentzian_periodic(x, eps) / _lorentzian_periodic(zero, eps)[0]
    if params.tooth_shape is ToothShape.GAUSSIAN:
        sigma = width / (2 * math.sqrt(2 * math.log(2)))
        return _gaussian_periodic(x, sigma) / _gaussian_periodic(zero, sigma)[0]
    return _square_periodic(x, width)


def synthetic_comb(
    grid: FrequencyGrid,
    params: CombParams,
    envelope_fwhm: float | None = None,
    d_max: float | None = DEFAULT_D_MAX,
) -> AbsorptionSpectrum:
    """Build an idealised comb: identical teeth every ``period_delta`` plus a flat background.

    The tooth train is multiplied by a Gaussian envelope of FWHM ``envelope_fwhm``
    (``None`` for no envelope), so the central tooth peaks at
    ``d_peak + d_background``.
    """
    grid.check_resolves(params.tooth_fwhm)
    f = grid.values
    profile = _tooth_profile(f, params)
    if envelope_fwhm is not None:
        if not envelope_fwhm > 0:
            raise ValueError("envelope_fwhm must be > 0")
        profile = profile * np.exp(-4 * math.log(2) * (f / envelope_fwhm) ** 2)
    d = params.d_background + params.d_peak * profile
    return AbsorptionSpectrum(grid, _clip(d, d_max), periods=(params.period_delta,))


def comb_mean_depth(params: CombParams) -> float:
    """Tooth-train depth averaged over one period (background excluded)."""
    n = 4096
    x = (np.arange(n) + 0.5) / n - 0.5
    return float(params.d_peak * _tooth_profile(x * params.period_delta, params).mean())


def _same_grid(a: AbsorptionSpectrum, b: AbsorptionSpectrum) -> None:
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


def superpose_spectra(a: AbsorptionSpectrum, b: AbsorptionSpectrum, weight_a: float) -> AbsorptionSpectrum:
    _same_grid(a, b)
    if not 0 <= weight_a <= 1:
        raise ValueError("weight_a must lie in [0, 1]")
    d = weight_a * a.d + (1 - weight_a) * b.d
    periods = tuple(dict.fromkeys(a.periods + b.periods))
    return AbsorptionSpectrum(a.grid, d, periods=periods)


def apply_superhyperfine_splitting(s: AbsorptionSpectrum, splitting: float, weight: float = 0.5) -> AbsorptionSpectrum:
    """Split every spectral feature into a doublet separated by ``splitting``.

    d'(f) = weight*d(f - splitting/2) + (1 - weight)*d(f + splitting/2). Values
    beyond the grid edges are held at the edge depth.
    """
    if splitting < 0:
        raise ValueError("splitting must be >= 0")
    if not 0 <= weight <= 1:
        raise ValueError("weight must lie in [0, 1]")
    if splitting == 0:
        return s
    f = s.grid.values
    up = np.interp(f - splitting / 2, f, s.d)
    down = np.interp(f + splitting / 2, f, s.d)
    return replace(s, d=weight * up + (1 - weight) * down)


def lorentzian_broaden(s: AbsorptionSpectrum, fwhm: float) -> AbsorptionSpectrum:
    """Convolve the spectrum with an area-normalised Lorentzian of the given FWHM."""
    if fwhm < 0:
        raise ValueError("fwhm must be >= 0")
    if fwhm == 0:
        return s
    dx = s.grid.spacing
    n = s.grid.n_points
    half = n - 1
    x = np.arange(-half, half + 1) * dx
    kernel = (fwhm / 2) ** 2 / (x**2 + (fwhm / 2) ** 2)
    kernel /= kernel.sum()
    padded = np.concatenate([np.full(half, s.d[0]), s.d, np.full(half, s.d[-1])])
    out = fftconvolve(padded, kernel, mode="same")[half:half + n]
    return replace(s, d=np.clip(out, 0.0, None))


def write_spectrum_csv(s: AbsorptionSpectrum, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detuning_hz", "optical_depth"])
        for f, d in zip(s.grid.values, s.d):
            w.writerow([repr(float(f)), repr(float(d))])
    return path
