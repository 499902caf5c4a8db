"""Weak-field propagation through a prepared medium.

Two independent routes to the same linear response:

* :func:`propagate` treats the medium as a complex spectral filter
  ``H(f) = exp(-d(f)/2 + i*phi(f))`` with the minimum-phase (causal) ``phi``.
* :func:`atom_sum_echo` integrates the collective single-excitation amplitude
  atom by atom in the time domain, each atom ringing at its own detuning.

Field envelopes are normalised so that ``sum(|a|**2) * dt`` is the mean photon
number. Envelope components vary as ``exp(+2j*pi*f*t)``; an atom at detuning
``delta`` responds to the component ``f = delta``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.fft import fft, fftfreq, ifft, next_fast_len
from scipy.signal import hilbert

from .spectral_medium import AbsorptionSpectrum, FrequencyGrid

__all__ = [
    "TimeGrid",
    "FieldEnvelope",
    "TransferFunction",
    "AtomEnsemble",
    "PulseSpec",
    "gaussian_pulse",
    "pulse_train",
    "transfer_function",
    "propagate",
    "sample_ensemble",
    "atom_sum_echo",
    "echo_efficiency",
    "window_energy",
    "echo_peak_time",
    "write_field_csv",
    "PropagationError",
]

SUPPORT_HALF_WIDTH = 1.5  # pulse support is centre +/- 1.5 FWHM


class PropagationError(ValueError):
    """Raised when a propagation request is outside the model's validity."""


@dataclass(frozen=True)
class TimeGrid:
    t0: float = 0.0
    dt: float = 1e-9
    n: int = 4000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.n < 2:
            raise ValueError("time grid needs at least two samples")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.n - 1)


@dataclass(frozen=True)
class FieldEnvelope:
    """Complex slowly-varying envelope on a uniform time grid.

    ``nbar`` is the mean photon number of the *input* that produced this
    field; propagated fields keep it so efficiencies can be formed directly.
    ``supports`` lists the ``(start, end)`` intervals occupied by input pulses.
    """

    t0: float
    dt: float
    amplitude: np.ndarray
    nbar: float
    supports: tuple = ()

    def __post_init__(self):
        a = np.array(self.amplitude, dtype=complex)
        if a.ndim != 1 or a.size < 2:
            raise ValueError("amplitude must be a 1-D array of at least two samples")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not np.all(np.isfinite(a)):
            raise ValueError("amplitude must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "amplitude", a)
        object.__setattr__(self, "supports", tuple((float(s), float(e)) for s, e in self.supports))

    @property
    def n(self) -> int:
        return self.amplitude.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.n - 1)

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    @property
    def energy(self) -> float:
        return float(np.sum(self.intensity) * self.dt)

    def with_amplitude(self, amplitude) -> "FieldEnvelope":
        return FieldEnvelope(self.t0, self.dt, amplitude, self.nbar, self.supports)

    def scaled(self, factor: complex) -> "FieldEnvelope":
        """Scale the amplitude; ``nbar`` scales with ``|factor|**2``."""
        return FieldEnvelope(self.t0, self.dt, self.amplitude * factor, self.nbar * abs(factor) ** 2, self.supports)

    def __add__(self, other: "FieldEnvelope") -> "FieldEnvelope":
        if (self.t0, self.dt, self.n) != (other.t0, other.dt, other.n):
            raise ValueError("cannot add fields on different time grids")
        return FieldEnvelope(
            self.t0,
            self.dt,
            self.amplitude + other.amplitude,
            self.nbar + other.nbar,
            self.supports + other.supports,
        )


@dataclass(frozen=True)
class PulseSpec:
    center: float
    fwhm: float = 30e-9
    nbar: float = 0.5
    phase: float = 0.0


@dataclass(frozen=True)
class TransferFunction:
    grid: FrequencyGrid
    response: np.ndarray
    periods: tuple = ()

    def __post_init__(self):
        r = np.array(self.response, dtype=complex)
        if r.shape != (self.grid.n_points,):
            raise ValueError("response must have one value per grid point")
        if np.any(np.abs(r) > 1 + 1e-12):
            raise ValueError("transfer function must be passive (|H| <= 1)")
        r.setflags(write=False)
        object.__setattr__(self, "response", r)

    @property
    def log_amplitude(self) -> np.ndarray:
        return np.log(np.abs(self.response))

    @property
    def phase(self) -> np.ndarray:
        return np.unwrap(np.angle(self.response))


@dataclass(frozen=True)
class AtomEnsemble:
    """Discrete atoms standing in for the inhomogeneous line.

    ``weights`` are proportional to local absorption; ``spectral_weight``
    (Hz per unit weight) converts them into the depth-times-bandwidth each
    atom carries, so ``sum(weights) * spectral_weight`` is the integrated
    optical depth of the source spectrum.
    """

    detunings: np.ndarray
    weights: np.ndarray
    spectral_weight: float
    deterministic: bool
    periods: tuple = ()

    def __post_init__(self):
        det = np.array(self.detunings, dtype=float)
        w = np.array(self.weights, dtype=float)
        if det.shape != w.shape or det.ndim != 1:
            raise ValueError("detunings and weights must be 1-D arrays of equal length")
        if np.any(w < 0):
            raise ValueError("weights must be >= 0")
        det.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "detunings", det)
        object.__setattr__(self, "weights", w)

    @property
    def n_atoms(self) -> int:
        return self.detunings.size


def gaussian_pulse(center: float, fwhm: float, nbar: float, phase: float = 0.0, grid: TimeGrid | None = None) -> FieldEnvelope:
    """Transform-limited Gaussian pulse with intensity FWHM ``fwhm`` and ``nbar`` photons."""
    grid = grid or TimeGrid()
    if not fwhm > 0:
        raise ValueError("fwhm must be > 0")
    if fwhm < 4 * grid.dt:
        raise ValueError(f"pulse FWHM {fwhm:.3g} s is unresolved by dt = {grid.dt:.3g} s (need >= 4 dt)")
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    t = grid.times
    peak = nbar * (2.0 / fwhm) * math.sqrt(math.log(2) / math.pi)
    intensity = peak * np.exp(-4 * math.log(2) * ((t - center) / fwhm) ** 2)
    amp = np.sqrt(intensity) * np.exp(1j * phase)
    half = SUPPORT_HALF_WIDTH * fwhm
    return FieldEnvelope(grid.t0, grid.dt, amp, float(nbar), ((center - half, center + half),))


def pulse_train(pulses: Iterable[PulseSpec], grid: TimeGrid | None = None) -> FieldEnvelope:
    grid = grid or TimeGrid()
    fields = [gaussian_pulse(p.center, p.fwhm, p.nbar, p.phase, grid) for p in pulses]
    if not fields:
        raise ValueError("need at least one pulse")
    out = fields[0]
    for f in fields[1:]:
        out = out + f
    return out


def transfer_function(spectrum: AbsorptionSpectrum, include_dispersion: bool = True) -> TransferFunction:
    """Amplitude filter ``exp(-d/2)`` with the causal (minimum-phase) phase if requested."""
    half_depth = spectrum.d / 2.0
    if include_dispersion:
        # Causal in the exp(+2j*pi*f*t) convention: phi is the imaginary part of the
        # analytic signal of +d/2 taken along the frequency axis.
        phi = np.imag(hilbert(half_depth))
    else:
        phi = np.zeros_like(half_depth)
    return TransferFunction(spectrum.grid, np.exp(-half_depth + 1j * phi), periods=spectrum.periods)


def _check_window(field_: FieldEnvelope, periods: Sequence[float]) -> None:
    if not periods or not field_.supports:
        return
    storage = max(1.0 / p for p in periods)
    last = max((s + e) / 2 for s, e in field_.supports)
    needed = last + 1.5 * storage
    if needed > field_.t_end:
        raise PropagationError(
            f"time window ends at {field_.t_end:.4g} s but the echo of the last pulse needs "
            f"{needed:.4g} s (last input + 1.5 x storage time {storage:.4g} s); echoes would wrap around"
        )


def propagate(input_field: FieldEnvelope, H: TransferFunction) -> FieldEnvelope:
    """Filter the input through ``H``; returns the forward output on the same time grid."""
    nyquist = 0.5 / input_field.dt
    if H.grid.span / 2 > nyquist * (1 + 1e-12):
        raise PropagationError(
            f"frequency grid half-span {H.grid.span / 2:.4g} Hz exceeds the field Nyquist frequency {nyquist:.4g} Hz"
        )
    _check_window(input_field, H.periods)

    n = input_field.n
    # frequency spacing of the FFT no coarser than the spectral grid, so the
    # filter's impulse response is not aliased inside the window
    n_fft = next_fast_len(max(2 * n, int(math.ceil(1.0 / (H.grid.spacing * input_field.dt)))))
    f = fftfreq(n_fft, input_field.dt)
    grid_f = H.grid.values
    log_amp = np.interp(f, grid_f, H.log_amplitude)
    phase = np.interp(f, grid_f, H.phase)
    spectrum = fft(input_field.amplitude, n_fft)
    out = ifft(spectrum * np.exp(log_amp + 1j * phase))[:n]
    return input_field.with_amplitude(out)


def sample_ensemble(spectrum: AbsorptionSpectrum, n_atoms: int, seed: int = 0, deterministic: bool = True) -> AtomEnsemble:
    """Discretise the absorption line into atoms.

    Deterministic mode places ``n_atoms`` evenly across the grid with weights
    equal to the local depth. Stochastic mode draws detunings with density
    proportional to the depth (piecewise constant between grid points) and
    gives every atom the same weight.
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    area = spectrum.integrated_depth()
    if not area > 0:
        raise ValueError("cannot sample atoms from an all-zero spectrum")
    f = spectrum.grid.values
    if deterministic:
        if n_atoms == 1:
            det = np.zeros(1)
            w = np.interp(det, f, spectrum.d)
            return AtomEnsemble(det, w, spectrum.grid.span, True, spectrum.periods)
        det = np.linspace(f[0], f[-1], n_atoms)
        w = np.interp(det, f, spectrum.d)
        return AtomEnsemble(det, w, spectrum.grid.span / (n_atoms - 1), True, spectrum.periods)

    rng = np.random.default_rng(seed)
    # mass of each grid cell under linear interpolation of d
    cell = 0.5 * (spectrum.d[:-1] + spectrum.d[1:]) * spectrum.grid.spacing
    idx = rng.choice(cell.size, size=n_atoms, p=cell / cell.sum())
    det = f[idx] + rng.random(n_atoms) * spectrum.grid.spacing
    return AtomEnsemble(det, np.ones(n_atoms), area / n_atoms, False, spectrum.periods)


def _linear_hold_coefficients(theta: np.ndarray) -> tuple:
    """Exact weights for integrating a linearly interpolated field against exp(i*theta*v).

    Returns (alpha, beta) with
      alpha = int_0^1 v exp(i theta v) dv, beta = int_0^1 (1 - v) exp(i theta v) dv.
    """
    small = np.abs(theta) < 1e-3
    th = np.where(small, 1.0, theta)
    e = np.exp(1j * th)
    full = (e - 1) / (1j * th)
    alpha = e / (1j * th) + (e - 1) / th**2
    beta = full - alpha
    # series for small theta
    t = theta
    alpha_s = 0.5 + 1j * t / 3 - t**2 / 8 - 1j * t**3 / 30
    beta_s = 0.5 + 1j * t / 6 - t**2 / 24 - 1j * t**3 / 120
    return np.where(small, alpha_s, alpha), np.where(small, beta_s, beta)


def _scatter(ensemble: AtomEnsemble, amplitude: np.ndarray, dt: float, strength: float) -> np.ndarray:
    """First-order forward re-emission of ``amplitude`` by the whole ensemble.

    Each atom accumulates I_i(t) = int_{-inf}^t E(t') exp(2j*pi*delta_i*(t - t')) dt';
    the re-emitted field is -strength * sum_i w_i I_i(t).
    """
    theta = 2 * math.pi * ensemble.detunings * dt
    rot = np.exp(1j * theta)
    # E between samples is linear: E(t_{n-1} + v dt) weights are (1 - v) and v,
    # and the phase factor is exp(i theta (1 - v)).
    alpha, beta = _linear_hold_coefficients(theta)
    c_prev = dt * alpha  # multiplies E[n-1]
    c_next = dt * beta  # multiplies E[n]
    w = ensemble.weights * strength
    acc = np.zeros(ensemble.n_atoms, dtype=complex)
    out = np.zeros(amplitude.size, dtype=complex)
    for n in range(1, amplitude.size):
        acc = rot * acc + c_prev * amplitude[n - 1] + c_next * amplitude[n]
        out[n] = -np.dot(w, acc)
    return out


def atom_sum_echo(
    ensemble: AtomEnsemble,
    input_field: FieldEnvelope,
    coupling: float = 1.0,
    n_slices: int = 16,
) -> FieldEnvelope:
    """Forward field after the atom ensemble, built from the collective sum over atoms.

    ``coupling`` scales the medium (1.0 reproduces the sampled spectrum). The
    ensemble is split into ``n_slices`` identical thin slabs along the
    propagation axis, each re-emitting the field it receives; ``n_slices=1``
    is the plain first-order response.
    """
    if n_slices < 1:
        raise ValueError("n_slices must be >= 1")
    strength = coupling * ensemble.spectral_weight
    scattered = _scatter(ensemble, input_field.amplitude, input_field.dt, strength)
    scattered_energy = float(np.sum(np.abs(scattered) ** 2) * input_field.dt)
    if scattered_energy > 0.2 * input_field.energy:
        raise PropagationError(
            f"predicted re-emitted energy is {scattered_energy / input_field.energy:.1%} of the input; "
            "the atom sum is a weak-coupling oracle, use propagate() for this medium"
        )
    if n_slices == 1:
        return input_field.with_amplitude(input_field.amplitude + scattered)
    amp = input_field.amplitude
    for _ in range(n_slices):
        amp = amp + _scatter(ensemble, amp, input_field.dt, strength / n_slices)
    return input_field.with_amplitude(amp)


def _window_mask(field_: FieldEnvelope, start: float, end: float) -> np.ndarray:
    if not end > start:
        raise ValueError("window end must be after its start")
    tol = 1e-9 * field_.dt
    if start < field_.t0 - tol or end > field_.t_end + field_.dt + tol:
        raise ValueError(f"window [{start:.4g}, {end:.4g}] s lies outside the time grid")
    t = field_.times
    return (t >= start - tol) & (t < end - tol)


def window_energy(field_: FieldEnvelope, start: float, end: float) -> float:
    mask = _window_mask(field_, start, end)
    return float(np.sum(field_.intensity[mask]) * field_.dt)


def echo_efficiency(output: FieldEnvelope, window_start: float, window_end: float) -> float:
    """Output energy in the window divided by the input mean photon number."""
    for s, e in output.supports:
        if window_start < e and window_end > s:
            raise ValueError(
                f"analysis window [{window_start:.4g}, {window_end:.4g}] s overlaps input pulse support [{s:.4g}, {e:.4g}] s"
            )
    if output.nbar <= 0:
        return 0.0
    return window_energy(output, window_start, window_end) / output.nbar


def echo_peak_time(output: FieldEnvelope, window_start: float, window_end: float) -> float:
    mask = _window_mask(output, window_start, window_end)
    idx = np.flatnonzero(mask)
    return float(output.times[idx[np.argmax(output.intensity[idx])]])


def write_field_csv(field_: FieldEnvelope, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "re", "im", "intensity"])
        for t, a in zip(field_.times, field_.amplitude):
            w.writerow([repr(float(t)), repr(float(a.real)), repr(float(a.imag)), repr(float(abs(a) ** 2))])
    return path
