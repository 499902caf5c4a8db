"""Accumulated optical pumping that carves a spectral grating into |g>.

Each coherent pulse pair excites atoms with a Ramsey fringe in detuning;
excited atoms decay to |g> or |aux> before the next pair arrives, since the
pairs are spaced well beyond the optical coherence time. The recurrence
below therefore works on populations only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectral_medium import (
    AbsorptionSpectrum,
    FrequencyGrid,
    MaterialParams,
    lorentzian_broaden,
)

__all__ = [
    "PulsePair",
    "PreparationSequence",
    "GroundPopulations",
    "pump_probability",
    "prepare_comb",
    "grating_decay",
    "trial_decay_multipliers",
    "write_populations_csv",
]


@dataclass(frozen=True)
class PulsePair:
    area_theta: float
    pair_separation_tau_s: float
    pulse_fwhm: float = 30e-9

    def __post_init__(self):
        if not 0 < self.area_theta < math.pi / 2:
            raise ValueError(f"pulse area must satisfy 0 < theta < pi/2, got {self.area_theta!r}")
        if not self.pulse_fwhm > 0:
            raise ValueError("pulse_fwhm must be > 0")
        if not self.pair_separation_tau_s > self.pulse_fwhm:
            raise ValueError("pair separation must exceed the pulse duration")

    @property
    def fringe_period(self) -> float:
        return 1.0 / self.pair_separation_tau_s

    @property
    def spectral_fwhm(self) -> float:
        # transform-limited Gaussian: bandwidth * duration = 0.44
        return 0.44 / self.pulse_fwhm


@dataclass(frozen=True)
class PreparationSequence:
    pairs: tuple  # of (PulsePair, weight)
    n_repetitions: int = 100
    pair_spacing: float = 15e-6
    wait_before_storage: float = 1200e-6

    def __post_init__(self):
        pairs = tuple((p, float(w)) for p, w in self.pairs)
        if not pairs:
            raise ValueError("a preparation sequence needs at least one pulse pair")
        for p, w in pairs:
            if not isinstance(p, PulsePair):
                raise TypeError(f"expected PulsePair, got {type(p).__name__}")
            if not 0 <= w <= 1:
                raise ValueError("pair weights must lie in [0, 1]")
        object.__setattr__(self, "pairs", pairs)
        if self.n_repetitions < 0 or int(self.n_repetitions) != self.n_repetitions:
            raise ValueError("n_repetitions must be a non-negative integer")
        if self.pair_spacing <= 0 or self.wait_before_storage < 0:
            raise ValueError("pair_spacing must be > 0 and wait_before_storage >= 0")

    @classmethod
    def single(cls, pair: PulsePair, **kw) -> "PreparationSequence":
        return cls(pairs=((pair, 1.0),), **kw)

    def check_incoherent(self, material: MaterialParams) -> None:
        if self.pair_spacing <= material.T2_optical:
            raise ValueError(
                f"pair_spacing {self.pair_spacing:.3g} s must exceed T2 {material.T2_optical:.3g} s "
                "so that successive pairs act incoherently"
            )


@dataclass(frozen=True)
class GroundPopulations:
    grid: FrequencyGrid
    p_g: np.ndarray
    p_aux: np.ndarray

    def __post_init__(self):
        for name in ("p_g", "p_aux"):
            a = np.array(getattr(self, name), dtype=float)
            if a.shape != (self.grid.n_points,):
                raise ValueError(f"{name} must have one value per grid point")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def equilibrium(cls, grid: FrequencyGrid) -> "GroundPopulations":
        half = np.full(grid.n_points, 0.5)
        return cls(grid, half, half)


def pump_probability(detuning, pair: PulsePair):
    """Excitation probability left by one pulse pair, per detuning (Hz).

    sin^2(theta) * E(delta) * cos^2(pi*delta*tau_s) with E a unit-height
    Gaussian of FWHM 0.44/pulse_fwhm.
    """
    delta = np.asarray(detuning, dtype=float)
    envelope = np.exp(-4 * math.log(2) * (delta / pair.spectral_fwhm) ** 2)
    fringe = np.cos(math.pi * delta * pair.pair_separation_tau_s) ** 2
    return math.sin(pair.area_theta) ** 2 * envelope * fringe


def _relax(p_g: np.ndarray, elapsed: float, tz: float) -> np.ndarray:
    if math.isinf(tz):
        return p_g
    return 0.5 + (p_g - 0.5) * math.exp(-elapsed / tz)


def prepare_comb(
    material: MaterialParams,
    seq: PreparationSequence,
    grid: FrequencyGrid,
    tooth_floor_fwhm: float = 0.0,
) -> tuple:
    """Run the pumping recurrence and return ``(spectrum, populations)``.

    The unprepared line has depth ``material.d_max`` (both ground states half
    filled), so the final depth is ``2 * d_max * p_g``. ``tooth_floor_fwhm``
    convolves the result with a Lorentzian, standing in for the laser-linewidth
    and material limits on the narrowest achievable tooth.
    """
    seq.check_incoherent(material)
    for pair, _ in seq.pairs:
        if grid.spacing > pair.fringe_period / 16:
            raise ValueError(
                f"grid spacing {grid.spacing:.4g} Hz too coarse for fringe period "
                f"{pair.fringe_period:.4g} Hz (need <= period/16)"
            )
    f = grid.values
    b = material.branching_to_aux
    transfer = [w * b * pump_probability(f, pair) for pair, w in seq.pairs]

    p_g = np.full(grid.n_points, 0.5)
    for _ in range(seq.n_repetitions):
        for t in transfer:
            p_g = p_g * (1.0 - t)
            p_g = _relax(p_g, seq.pair_spacing, material.TZ_spin)
    p_g = _relax(p_g, seq.wait_before_storage, material.TZ_spin)

    pops = GroundPopulations(grid, p_g, 1.0 - p_g)
    periods = tuple(pair.fringe_period for pair, _ in seq.pairs)
    spectrum = AbsorptionSpectrum(grid, 2.0 * material.d_max * p_g, periods=periods)
    if tooth_floor_fwhm > 0:
        spectrum = lorentzian_broaden(spectrum, tooth_floor_fwhm)
    return spectrum, pops


def grating_decay(pop: GroundPopulations, material: MaterialParams, elapsed: float) -> GroundPopulations:
    if elapsed < 0:
        raise ValueError("elapsed time must be >= 0")
    p_aux = 0.5 + (pop.p_aux - 0.5) * math.exp(-elapsed / material.TZ_spin)
    return GroundPopulations(pop.grid, 1.0 - p_aux, p_aux)


def trial_decay_multipliers(material: MaterialParams, n_trials: int, trial_rate: float) -> np.ndarray:
    """Echo-efficiency scale factor for each trial of a storage sequence.

    Grating contrast relaxes as exp(-t/TZ); the echo amplitude follows the
    contrast, so its intensity goes as exp(-2t/TZ).
    """
    t = np.arange(n_trials) / trial_rate
    return np.exp(-2.0 * t / material.TZ_spin)


def write_populations_csv(pop: GroundPopulations, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detuning_hz", "p_g", "p_aux"])
        for row in zip(pop.grid.values, pop.p_g, pop.p_aux):
            w.writerow([repr(float(v)) for v in row])
    return path
