"""The five storage experiments, built from the medium, propagation and detection layers."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.signal import correlate
from scipy.stats import chi2, norm

from .comb_preparation import PreparationSequence, prepare_comb
from .field_propagation import (
    FieldEnvelope,
    PulseSpec,
    TimeGrid,
    echo_efficiency,
    echo_peak_time,
    gaussian_pulse,
    propagate,
    pulse_train,
    transfer_function,
    window_energy,
    SUPPORT_HALF_WIDTH,
)
from .fitting import FitResult, fit_damped_beat, fit_exponential, fit_proportional, fit_visibility
from .photon_detection import (
    ArrivalHistogram,
    Calibration,
    DetectorModel,
    calibrate_nbar,
    TrialPlan,
    detect,
    expected_counts,
    window_counts,
)
from .spectral_medium import (
    AbsorptionSpectrum,
    CombParams,
    FrequencyGrid,
    MaterialParams,
    apply_superhyperfine_splitting,
    comb_mean_depth,
    flat_absorption,
    superpose_spectra,
    synthetic_comb,
)

__all__ = [
    "ExperimentConfig",
    "TimeBinQubitSpec",
    "PreconditionError",
    "build_spectrum",
    "derive_seed",
    "run_single_mode",
    "run_efficiency_bracket",
    "run_linearity_scan",
    "run_decay_scan",
    "run_multimode",
    "run_interference",
    "run_calibration",
    "tune_dark_rate",
    "balance_weight",
]


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to run one scenario deterministically.

    The spectrum comes either from ``preparation`` (pumping simulation) or from
    the synthetic ``combs``. With two combs, ``comb_weights`` gives the weight
    of the first; ``None`` means equal weights, except in the interference
    experiment where it triggers automatic amplitude balancing.
    """

    input_pulses: tuple = (PulseSpec(center=200e-9),)
    combs: tuple = ()
    comb_weights: tuple | None = None
    preparation: PreparationSequence | None = None
    envelope_fwhm: float | None = None
    tooth_floor_fwhm: float = 1e6
    material: MaterialParams = field(default_factory=MaterialParams)
    grid: FrequencyGrid = field(default_factory=lambda: FrequencyGrid(200e6, 8001))
    time_grid: TimeGrid = field(default_factory=TimeGrid)
    include_dispersion: bool = True
    control_depth: float = 3.9
    detector: DetectorModel = field(default_factory=DetectorModel)
    plan: TrialPlan = field(default_factory=TrialPlan)
    analysis_windows: tuple = ()
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "input_pulses", tuple(self.input_pulses))
        object.__setattr__(self, "combs", tuple(self.combs))
        object.__setattr__(self, "analysis_windows", tuple(tuple(w) for w in self.analysis_windows))
        if self.combs and self.preparation is not None:
            raise ValueError("give either synthetic combs or a preparation sequence, not both")
        if len(self.combs) > 2:
            raise ValueError("at most two superposed combs are supported")
        spans = sorted(
            (p.center - SUPPORT_HALF_WIDTH * p.fwhm, p.center + SUPPORT_HALF_WIDTH * p.fwhm) for p in self.input_pulses
        )
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            if s2 < e1:
                raise ValueError("input pulses overlap in time")
        t0, t1 = self.time_grid.t0, self.time_grid.t_end
        for s, e in spans:
            if s < t0 or e > t1:
                raise ValueError("input pulse lies outside the time grid")
        for w in self.analysis_windows:
            if len(w) != 3 or not (t0 <= w[0] < w[1] <= t1 + self.time_grid.dt):
                raise ValueError(f"analysis window {w} must be (start, end, label) inside the time grid")

    @property
    def storage_times(self) -> tuple:
        if self.preparation is not None:
            return tuple(p.pair_separation_tau_s for p, _ in self.preparation.pairs)
        return tuple(c.storage_time for c in self.combs)


@dataclass(frozen=True)
class TimeBinQubitSpec:
    tau: float = 100e-9
    phi: float = 0.0
    nbar_total: float = 0.85

    def __post_init__(self):
        if not self.tau > 0 or self.nbar_total < 0:
            raise ValueError("tau must be > 0 and nbar_total >= 0")


def derive_seed(master_seed: int, index: int) -> int:
    """Independent per-job seed from ``(master_seed, index)``."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1, np.uint64)[0])


def _map(fn: Callable, jobs: Sequence, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def build_spectrum(cfg: ExperimentConfig, combs: tuple | None = None, weight: float | None = None) -> AbsorptionSpectrum:
    """Spectrum for the configured preparation or synthetic comb(s), with any superhyperfine doublet."""
    combs = cfg.combs if combs is None else combs
    m = cfg.material
    if cfg.preparation is not None and combs == cfg.combs:
        spectrum, _ = prepare_comb(m, cfg.preparation, cfg.grid, tooth_floor_fwhm=cfg.tooth_floor_fwhm)
    elif combs:
        parts = [synthetic_comb(cfg.grid, c, cfg.envelope_fwhm, d_max=m.d_max) for c in combs]
        spectrum = parts[0]
        if len(parts) == 2:
            if weight is None:
                weight = 0.5 if cfg.comb_weights is None else cfg.comb_weights[0]
            spectrum = superpose_spectra(parts[0], parts[1], weight)
    else:
        raise PreconditionError("no comb or preparation sequence configured")
    if m.shf_splitting > 0:
        spectrum = apply_superhyperfine_splitting(spectrum, m.shf_splitting, m.shf_weight)
    return spectrum


def _snap(cfg: ExperimentConfig, center: float, half_width: float) -> tuple:
    """Window around ``center`` widened outward to detector bin edges."""
    bw = cfg.detector.bin_width
    t0 = cfg.time_grid.t0
    start = t0 + math.floor(round((center - half_width - t0) / bw, 9)) * bw
    end = t0 + math.ceil(round((center + half_width - t0) / bw, 9)) * bw
    return start, end


def _echo_window(cfg: ExperimentConfig, pulse: PulseSpec, storage: float) -> tuple:
    return _snap(cfg, pulse.center + storage, SUPPORT_HALF_WIDTH * pulse.fwhm)


def _support_window(cfg: ExperimentConfig, pulse: PulseSpec) -> tuple:
    return _snap(cfg, pulse.center, SUPPORT_HALF_WIDTH * pulse.fwhm)


def _propagate(cfg: ExperimentConfig, spectrum: AbsorptionSpectrum, field_: FieldEnvelope) -> FieldEnvelope:
    return propagate(field_, transfer_function(spectrum, cfg.include_dispersion))


# --------------------------------------------------------------------------- single mode


@dataclass(frozen=True)
class SingleModeResult:
    histogram: ArrivalHistogram
    efficiency: float
    echo_time: float
    transmission: float
    control_transmission: float
    control_echo_fraction: float
    control_histogram: ArrivalHistogram
    efficiency_from_counts: float
    efficiency_from_counts_err: float
    echo_window: tuple
    input_field: FieldEnvelope
    output: FieldEnvelope
    control_output: FieldEnvelope


def run_single_mode(cfg: ExperimentConfig) -> SingleModeResult:
    if len(cfg.input_pulses) != 1:
        raise PreconditionError("single-mode storage takes exactly one input pulse")
    pulse = cfg.input_pulses[0]
    spectrum = build_spectrum(cfg)
    if not spectrum.periods:
        raise PreconditionError("single-mode storage needs a comb")
    storage = 1.0 / spectrum.periods[0]
    inp = gaussian_pulse(pulse.center, pulse.fwhm, pulse.nbar, pulse.phase, cfg.time_grid)
    out = _propagate(cfg, spectrum, inp)
    ctrl = _propagate(cfg, flat_absorption(cfg.grid, cfg.control_depth), inp)

    win = _echo_window(cfg, pulse, storage)
    sup = _support_window(cfg, pulse)
    # search half a storage time either side of the expected echo, clear of
    # the transmitted pulse's delayed tail
    search_start = max(sup[1], pulse.center + 0.5 * storage)
    search_end = min(pulse.center + 1.5 * storage, out.t_end)
    echo_time = echo_peak_time(out, search_start, search_end) - pulse.center
    nbar = max(pulse.nbar, 1e-300)
    efficiency = echo_efficiency(out, *win) if pulse.nbar > 0 else 0.0

    hist = detect(out, cfg.detector, cfg.plan, derive_seed(cfg.master_seed, 0))
    ctrl_hist = detect(ctrl, cfg.detector, cfg.plan, derive_seed(cfg.master_seed, 1))
    det = cfg.detector
    raw = window_counts(hist.counts, hist, *win)
    dark = det.dark_rate * (win[1] - win[0]) * hist.n_trials
    scale = hist.n_trials * det.efficiency * nbar
    return SingleModeResult(
        histogram=hist,
        efficiency=efficiency,
        echo_time=echo_time,
        transmission=window_energy(out, *sup) / nbar,
        control_transmission=window_energy(ctrl, *sup) / nbar,
        control_echo_fraction=window_energy(ctrl, *win) / nbar,
        control_histogram=ctrl_hist,
        efficiency_from_counts=(raw - dark) / scale if scale > 0 else 0.0,
        efficiency_from_counts_err=math.sqrt(max(raw, 1.0)) / scale if scale > 0 else math.inf,
        echo_window=win,
        input_field=inp,
        output=out,
        control_output=ctrl,
    )


# --------------------------------------------------------------------------- efficiency bracket


@dataclass(frozen=True)
class BracketRow:
    tooth_fwhm: float
    d_peak: float
    d_background: float
    transmission: float
    efficiency: float
    nearest_target: bool = False


def _transmission_and_efficiency(cfg: ExperimentConfig, comb: CombParams) -> tuple:
    pulse = cfg.input_pulses[0]
    spectrum = synthetic_comb(cfg.grid, comb, cfg.envelope_fwhm, d_max=None)
    inp = gaussian_pulse(pulse.center, pulse.fwhm, pulse.nbar, pulse.phase, cfg.time_grid)
    out = _propagate(cfg, spectrum, inp)
    trans = window_energy(out, *_support_window(cfg, pulse)) / pulse.nbar
    eff = echo_efficiency(out, *_echo_window(cfg, pulse, comb.storage_time))
    return trans, eff


def run_efficiency_bracket(
    cfg: ExperimentConfig,
    tooth_fwhms: Sequence[float] = (1.0e6, 1.5e6, 2.0e6),
    target_transmission: float = 0.05,
    target_efficiency: float = 0.005,
) -> list:
    """Sweep tooth width with the comb filling the depth ceiling.

    For each width the tooth height and flat background satisfy
    ``d_peak + d_background = d_max`` with the background chosen so the
    transmitted pulse carries ``target_transmission`` of the input. The row
    whose echo efficiency is closest to ``target_efficiency`` is flagged.
    """
    if not cfg.combs:
        raise PreconditionError("efficiency bracket needs a comb (period and shape)")
    base = cfg.combs[0]
    d_max = cfg.material.d_max
    rows = []
    for fwhm in tooth_fwhms:
        def comb_for(bg):
            return replace(base, tooth_fwhm=fwhm, d_peak=d_max - bg, d_background=bg)

        def miss(bg):
            return _transmission_and_efficiency(cfg, comb_for(bg))[0] - target_transmission

        if miss(0.0) < 0 or miss(d_max) > 0:
            raise PreconditionError(f"transmission {target_transmission} unreachable for tooth FWHM {fwhm:g} Hz")
        bg = brentq(miss, 0.0, d_max, xtol=1e-6)
        trans, eff = _transmission_and_efficiency(cfg, comb_for(bg))
        rows.append(BracketRow(fwhm, d_max - bg, bg, trans, eff))
    best = min(range(len(rows)), key=lambda i: abs(rows[i].efficiency - target_efficiency))
    rows[best] = replace(rows[best], nearest_target=True)
    return rows


# --------------------------------------------------------------------------- linearity


@dataclass(frozen=True)
class LinearityResult:
    nbar_values: np.ndarray
    raw_counts: np.ndarray
    corrected_counts: np.ndarray
    counts_per_trial: np.ndarray
    n_trials: int
    fit: FitResult


def _linearity_point(cfg: ExperimentConfig, spectrum: AbsorptionSpectrum, index: int, nbar: float) -> tuple:
    pulse = replace(cfg.input_pulses[0], nbar=float(nbar))
    inp = gaussian_pulse(pulse.center, pulse.fwhm, pulse.nbar, pulse.phase, cfg.time_grid)
    out = _propagate(cfg, spectrum, inp)
    hist = detect(out, cfg.detector, cfg.plan, derive_seed(cfg.master_seed, index))
    win = _echo_window(cfg, pulse, 1.0 / spectrum.periods[0])
    raw = window_counts(hist.counts, hist, *win)
    dark = cfg.detector.dark_rate * (win[1] - win[0]) * hist.n_trials
    return raw, raw - dark, hist.n_trials


def run_linearity_scan(cfg: ExperimentConfig, nbar_values: Sequence[float]) -> LinearityResult:
    nbar = np.asarray(nbar_values, dtype=float)
    if nbar.size < 4:
        raise PreconditionError("linearity scan needs at least 4 photon numbers")
    positive = nbar[nbar > 0]
    if positive.size and positive.max() < 10 * positive.min():
        raise PreconditionError("photon numbers must span at least a factor of 10")
    spectrum = build_spectrum(cfg)
    jobs = [(cfg, spectrum, i, v) for i, v in enumerate(nbar)]
    results = _map(_linearity_point, jobs, cfg.workers)
    raw = np.array([r[0] for r in results])
    corr = np.array([r[1] for r in results])
    n_trials = results[0][2]
    per_trial = corr / n_trials
    sigma = np.sqrt(np.maximum(raw, 1.0)) / n_trials
    fit = fit_proportional(nbar, per_trial, sigma=sigma)
    return LinearityResult(nbar, raw, corr, per_trial, n_trials, fit)


# --------------------------------------------------------------------------- decay


@dataclass(frozen=True)
class DecayResult:
    storage_times: np.ndarray
    efficiencies: np.ndarray
    fit: FitResult
    beat_fit: FitResult | None


def _decay_point(cfg: ExperimentConfig, comb: CombParams, storage: float) -> float:
    pulse = cfg.input_pulses[0]
    spectrum = build_spectrum(cfg, combs=(comb,))
    inp = gaussian_pulse(pulse.center, pulse.fwhm, pulse.nbar, pulse.phase, cfg.time_grid)
    out = _propagate(cfg, spectrum, inp)
    return echo_efficiency(out, *_echo_window(cfg, pulse, storage))


def run_decay_scan(cfg: ExperimentConfig, storage_times: Sequence[float], hold: str = "mean") -> DecayResult:
    """Echo efficiency versus storage time, one comb per point.

    ``hold="mean"`` keeps the period-averaged tooth depth of the configured
    comb fixed while its period changes (so the decay isolates tooth
    dephasing); ``hold="peak"`` keeps the tooth height instead.
    """
    if not cfg.combs:
        raise PreconditionError("decay scan needs a synthetic comb template")
    if hold not in ("mean", "peak"):
        raise ValueError("hold must be 'mean' or 'peak'")
    base = cfg.combs[0]
    target_mean = comb_mean_depth(base)
    times = np.asarray(storage_times, dtype=float)
    combs = []
    for t in times:
        c = replace(base, period_delta=1.0 / t)
        if hold == "mean":
            unit = comb_mean_depth(replace(c, d_peak=1.0))
            c = replace(c, d_peak=target_mean / unit)
        combs.append(c)
    jobs = [(cfg, c, t) for c, t in zip(combs, times)]
    eff = np.array(_map(_decay_point, jobs, cfg.workers))
    fit = fit_exponential(times, eff)
    beat = None
    if cfg.material.shf_splitting > 0:
        beat = fit_damped_beat(times, eff)
    return DecayResult(times, eff, fit, beat)


# --------------------------------------------------------------------------- multimode


@dataclass(frozen=True)
class MultimodeResult:
    efficiencies: np.ndarray
    input_times: np.ndarray
    echo_times: np.ndarray
    order_preserved: bool
    spread: float
    xcorr_lag: float
    histogram: ArrivalHistogram
    output: FieldEnvelope


def run_multimode(cfg: ExperimentConfig) -> MultimodeResult:
    pulses = sorted(cfg.input_pulses, key=lambda p: p.center)
    if len(pulses) < 2:
        raise PreconditionError("multimode storage needs at least two pulses")
    spectrum = build_spectrum(cfg)
    if not spectrum.periods:
        raise PreconditionError("multimode storage needs a comb")
    storage = 1.0 / spectrum.periods[0]
    extent = pulses[-1].center - pulses[0].center + pulses[-1].fwhm
    if extent >= storage:
        raise PreconditionError(
            f"pulse train spans {extent:.4g} s, which does not fit in the storage time {storage:.4g} s"
        )
    inp = pulse_train(pulses, cfg.time_grid)
    out = _propagate(cfg, spectrum, inp)

    effs, echo_t = [], []
    for p in pulses:
        win = _echo_window(cfg, p, storage)
        e = window_energy(out, *win) / p.nbar if p.nbar > 0 else 0.0
        effs.append(e)
        echo_t.append(echo_peak_time(out, *win))
    effs = np.array(effs)
    echo_t = np.array(echo_t)
    in_t = np.array([p.center for p in pulses])
    order = bool(np.all(np.argsort(echo_t) == np.arange(len(pulses))))
    # echo energies must follow the input photon numbers in the same order
    nb = np.array([p.nbar for p in pulses])
    order = order and bool(np.all(np.argsort(-effs * nb, kind="stable") == np.argsort(-nb, kind="stable")))
    spread = float((effs.max() - effs.min()) / effs.mean()) if effs.mean() > 0 else math.inf

    after = out.times > max(e for _, e in inp.supports)
    xc = correlate(out.intensity * after, inp.intensity, mode="full", method="fft")
    lags = (np.arange(xc.size) - (inp.n - 1)) * out.dt
    lag = float(lags[int(np.argmax(xc))])

    hist = detect(out, cfg.detector, cfg.plan, derive_seed(cfg.master_seed, 0))
    return MultimodeResult(effs, in_t, echo_t, order, spread, lag, hist, out)


# --------------------------------------------------------------------------- interference


@dataclass(frozen=True)
class InterferenceResult:
    phi: np.ndarray
    middle_raw: np.ndarray
    middle_corrected: np.ndarray
    middle_noiseless: np.ndarray
    early_counts: np.ndarray
    late_counts: np.ndarray
    fit_raw: FitResult
    fit_corrected: FitResult
    fit_noiseless: FitResult
    v_raw: float
    v_corrected: float
    v_noiseless: float
    outer_phi_independent: bool
    outer_max_z: float
    outer_noiseless_visibility: float
    weight: float
    dark_rate: float
    windows: dict
    histograms: tuple


def _interference_windows(cfg: ExperimentConfig, qubit: TimeBinQubitSpec) -> tuple:
    t_short, t_long = sorted(cfg.storage_times)[:2] if len(cfg.storage_times) >= 2 else (None, None)
    p1 = cfg.input_pulses[0]
    t1 = p1.center
    half = p1.fwhm / 2
    wins = {}
    if t_short is not None:
        wins["early"] = _snap(cfg, t1 + t_short, half)
        wins["middle"] = _snap(cfg, t1 + t_long, half)
        wins["late"] = _snap(cfg, t1 + qubit.tau + t_long, half)
    else:
        t = cfg.storage_times[0]
        wins["early"] = _snap(cfg, t1 + t, half)
        wins["middle"] = _snap(cfg, t1 + qubit.tau + t, half)
        wins["late"] = _snap(cfg, t1 + 2 * qubit.tau + t, half)
    return wins


def _qubit_field(cfg: ExperimentConfig, qubit: TimeBinQubitSpec, phi: float) -> FieldEnvelope:
    p = cfg.input_pulses[0]
    half = qubit.nbar_total / 2
    return pulse_train(
        [PulseSpec(p.center, p.fwhm, half, 0.0), PulseSpec(p.center + qubit.tau, p.fwhm, half, phi)],
        cfg.time_grid,
    )


def balance_weight(cfg: ExperimentConfig) -> float:
    """Weight of the first comb that equalises the two partial read-out amplitudes.

    Echo amplitudes are linear in each comb's weight, so one probe at equal
    weights fixes the balancing weight in closed form.
    """
    if len(cfg.combs) != 2:
        raise PreconditionError("balancing needs exactly two combs")
    p = cfg.input_pulses[0]
    probe = gaussian_pulse(p.center, p.fwhm, 1.0, 0.0, cfg.time_grid)
    out = _propagate(cfg, build_spectrum(cfg, weight=0.5), probe)
    a = math.sqrt(window_energy(out, *_echo_window(cfg, p, cfg.combs[0].storage_time)))
    b = math.sqrt(window_energy(out, *_echo_window(cfg, p, cfg.combs[1].storage_time)))
    if a == 0 or b == 0:
        raise PreconditionError("one of the gratings produces no echo")
    # amplitude of comb 0 ~ w*a/0.5, of comb 1 ~ (1-w)*b/0.5
    return b / (a + b)


def _middle_signal(cfg: ExperimentConfig, spectrum, qubit, phi) -> tuple:
    out = _propagate(cfg, spectrum, _qubit_field(cfg, qubit, phi))
    mu, edges = expected_counts(out, cfg.detector, dark=False)
    return out, mu, edges


def tune_dark_rate(cfg: ExperimentConfig, qubit: TimeBinQubitSpec, target_v_raw: float, weight: float | None = None) -> float:
    """Dark-count rate at which the raw fringe visibility equals ``target_v_raw``.

    A phase-independent floor D on a fringe C*(1 + V cos phi) gives a raw
    visibility C*V/(C + D); solve for D from the noiseless fringe.
    """
    spectrum = build_spectrum(cfg, weight=weight if weight is not None else _auto_weight(cfg))
    phis = np.linspace(0, 2 * np.pi, 9)[:-1]
    wins = _interference_windows(cfg, qubit)
    sig = []
    for phi in phis:
        out, mu, edges = _middle_signal(cfg, spectrum, qubit, phi)
        c = 0.5 * (edges[:-1] + edges[1:])
        m = (c >= wins["middle"][0]) & (c < wins["middle"][1])
        sig.append(mu[m].sum())
    fit = fit_visibility(phis, np.array(sig) * 1e6, sigma=np.ones(phis.size))
    C = fit["C"] / 1e6
    V = fit["V"]
    if target_v_raw >= V:
        return 0.0
    D = C * (V / target_v_raw - 1.0)
    width = wins["middle"][1] - wins["middle"][0]
    return D / width


def _auto_weight(cfg: ExperimentConfig) -> float | None:
    if len(cfg.combs) == 2:
        return balance_weight(cfg) if cfg.comb_weights is None else cfg.comb_weights[0]
    return None


def _interference_point(cfg, spectrum, qubit, wins, index, phi) -> tuple:
    out, mu, edges = _middle_signal(cfg, spectrum, qubit, phi)
    hist = detect(out, cfg.detector, cfg.plan, derive_seed(cfg.master_seed, index))
    noiseless = {k: window_counts(mu, hist, *w) for k, w in wins.items()}
    counts = {k: window_counts(hist.counts, hist, *w) for k, w in wins.items()}
    return noiseless, counts, hist


def _phase_dependence_sigma(phi: np.ndarray, counts: np.ndarray) -> float:
    """Significance, in Gaussian sigma, of a cos/sin(phi) term in Poisson counts.

    Compares a constant against ``a + b cos(phi) + c sin(phi)`` by the drop in
    chi-square (2 degrees of freedom under the constant hypothesis).
    """
    counts = np.asarray(counts, dtype=float)
    if counts.sum() <= 0:
        return 0.0
    s = np.sqrt(np.full(counts.size, max(counts.mean(), 1.0)))
    A = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)]) / s[:, None]
    y = counts / s
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    chi_const = float(np.sum((y - np.mean(y)) ** 2))
    chi_harm = float(np.sum((y - A @ coef) ** 2))
    p = chi2.sf(max(chi_const - chi_harm, 0.0), 2)
    return float(norm.isf(p / 2)) if p < 1 else 0.0


def run_interference(cfg: ExperimentConfig, qubit: TimeBinQubitSpec, phi_values: Sequence[float]) -> InterferenceResult:
    """Store time-bin qubits and project them with two partial read-outs.

    The middle window collects the early pulse read out by the long-storage
    grating together with the late pulse read out by the short one.
    """
    times = cfg.storage_times
    if len(times) == 2:
        t_short, t_long = sorted(times)
        if abs((t_long - t_short) - qubit.tau) > 0.5 * cfg.time_grid.dt + 1e-15:
            raise PreconditionError(
                f"qubit separation {qubit.tau:.4g} s must equal the storage-time difference {t_long - t_short:.4g} s"
            )
    elif len(times) != 1:
        raise PreconditionError("interference needs one or two gratings")
    if qubit.tau <= cfg.input_pulses[0].fwhm:
        raise PreconditionError("time-bin separation must exceed the pulse duration")

    weight = _auto_weight(cfg)
    spectrum = build_spectrum(cfg, weight=weight)
    wins = _interference_windows(cfg, qubit)
    phi = np.asarray(phi_values, dtype=float)
    jobs = [(cfg, spectrum, qubit, wins, i, v) for i, v in enumerate(phi)]
    results = _map(_interference_point, jobs, cfg.workers)

    noiseless = np.array([r[0]["middle"] for r in results])
    middle = np.array([r[1]["middle"] for r in results])
    early = np.array([r[1]["early"] for r in results])
    late = np.array([r[1]["late"] for r in results])
    hists = tuple(r[2] for r in results)
    n_trials = hists[0].n_trials
    width = wins["middle"][1] - wins["middle"][0]
    dark = cfg.detector.dark_rate * width * n_trials
    corrected = middle - dark

    fit_nl = fit_visibility(phi, noiseless * 1e6 / max(noiseless.max(), 1e-300), sigma=np.ones(phi.size))
    fit_raw = fit_visibility(phi, middle)
    fit_corr = fit_visibility(phi, corrected, sigma=np.sqrt(np.maximum(middle, 1.0)))

    # residual phase dependence of the outer windows in the noiseless signal,
    # e.g. from second-order echoes of the short grating landing in the late window
    outer_vis = 0.0
    for key in ("early", "late"):
        v = np.array([r[0][key] for r in results])
        if v.max() > 0:
            outer_vis = max(outer_vis, float((v.max() - v.min()) / (v.max() + v.min())))

    z = max(_phase_dependence_sigma(phi, early), _phase_dependence_sigma(phi, late))
    return InterferenceResult(
        phi=phi,
        middle_raw=middle,
        middle_corrected=corrected,
        middle_noiseless=noiseless,
        early_counts=early,
        late_counts=late,
        fit_raw=fit_raw,
        fit_corrected=fit_corr,
        fit_noiseless=fit_nl,
        v_raw=fit_raw["V"],
        v_corrected=fit_corr["V"],
        v_noiseless=fit_nl["V"],
        outer_phi_independent=z <= 3.0,
        outer_max_z=z,
        outer_noiseless_visibility=outer_vis,
        weight=weight if weight is not None else 1.0,
        dark_rate=cfg.detector.dark_rate,
        windows=wins,
        histograms=hists,
    )


# --------------------------------------------------------------------------- calibration


@dataclass(frozen=True)
class CalibrationResult:
    configured_nbar: float
    calibration: Calibration
    z: float
    histogram: ArrivalHistogram


def run_calibration(cfg: ExperimentConfig) -> CalibrationResult:
    """Send the first input pulse through a transparent medium and recover its photon number."""
    pulse = cfg.input_pulses[0]
    inp = gaussian_pulse(pulse.center, pulse.fwhm, pulse.nbar, pulse.phase, cfg.time_grid)
    hist = detect(inp, cfg.detector, cfg.plan, derive_seed(cfg.master_seed, 0))
    cal = calibrate_nbar(hist, cfg.detector)
    z = (cal.nbar - pulse.nbar) / cal.stderr if cal.stderr > 0 else math.inf
    return CalibrationResult(pulse.nbar, cal, float(z), hist)
