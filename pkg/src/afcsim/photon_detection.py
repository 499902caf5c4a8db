"""Single-photon counting over repeated storage trials.

Counts in each time bin are Poisson. Within one storage sequence the trials
are independent, so the sequence total per bin is Poisson with the summed
mean; each sequence draws from its own stream keyed on ``(seed, sequence
index)``, which keeps results independent of how sequences are partitioned.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .field_propagation import FieldEnvelope

__all__ = [
    "DetectorModel",
    "TrialPlan",
    "ArrivalHistogram",
    "Calibration",
    "expected_counts",
    "detect",
    "calibrate_nbar",
    "subtract_dark",
    "window_counts",
    "write_histogram",
]


@dataclass(frozen=True)
class DetectorModel:
    eta_d: float = 0.32
    eta_t: float = 0.2
    dark_rate: float = 100.0
    bin_width: float = 10e-9
    dead_time: float = 0.0

    def __post_init__(self):
        if not (0 <= self.eta_d <= 1 and 0 <= self.eta_t <= 1):
            raise ValueError("efficiencies must lie in [0, 1]")
        if self.dark_rate < 0:
            raise ValueError("dark_rate must be >= 0")
        if not self.bin_width > 0:
            raise ValueError("bin_width must be > 0")
        if self.dead_time != 0:
            raise ValueError("dead time is not modelled; leave dead_time at 0")

    @property
    def efficiency(self) -> float:
        return self.eta_d * self.eta_t

    @property
    def dark_per_bin(self) -> float:
        return self.dark_rate * self.bin_width


@dataclass(frozen=True)
class TrialPlan:
    n_trials: int = 400
    trial_rate: float = 200e3
    sequence_rate: float = 40.0
    n_sequences: int = 1

    def __post_init__(self):
        if self.n_trials < 1 or self.n_sequences < 1:
            raise ValueError("n_trials and n_sequences must be >= 1")
        if not (self.trial_rate > 0 and self.sequence_rate > 0):
            raise ValueError("rates must be > 0")
        if self.n_trials / self.trial_rate >= 1.0 / self.sequence_rate:
            raise ValueError(
                f"{self.n_trials} trials at {self.trial_rate:g} Hz do not fit in one "
                f"sequence period of {1 / self.sequence_rate:g} s"
            )

    @property
    def total_trials(self) -> int:
        return self.n_trials * self.n_sequences

    @classmethod
    def with_total(cls, total_trials: int, n_trials: int = 400, **kw) -> "TrialPlan":
        """Plan with at least ``total_trials`` trials in sequences of ``n_trials``."""
        return cls(n_trials=n_trials, n_sequences=max(1, math.ceil(total_trials / n_trials)), **kw)


@dataclass(frozen=True)
class ArrivalHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    n_trials: int
    seed: int

    def __post_init__(self):
        edges = np.array(self.bin_edges, dtype=float)
        counts = np.array(self.counts, dtype=np.int64)
        if counts.shape != (edges.size - 1,):
            raise ValueError("need one count per bin")
        if np.any(counts < 0):
            raise ValueError("counts must be >= 0")
        widths = np.diff(edges)
        if not np.allclose(widths, widths[0], rtol=1e-9):
            raise ValueError("bins must be uniform")
        edges.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


@dataclass(frozen=True)
class Calibration:
    nbar: float
    stderr: float
    clipped: bool


def _bin_layout(field_: FieldEnvelope, bin_width: float) -> tuple:
    ratio = bin_width / field_.dt
    per_bin = int(round(ratio))
    if per_bin < 1 or abs(ratio - per_bin) > 1e-6 * ratio:
        raise ValueError(
            f"bin width {bin_width:.4g} s must be a whole multiple of the field sample spacing {field_.dt:.4g} s"
        )
    n_bins = field_.n // per_bin
    edges = field_.t0 + bin_width * np.arange(n_bins + 1)
    return per_bin, n_bins, edges


def expected_counts(field_: FieldEnvelope, det: DetectorModel, dark: bool = True) -> tuple:
    """Mean counts per bin for a single trial, and the bin edges.

    Sample ``n`` is treated as the cell ``[t_n, t_n + dt)``.
    """
    per_bin, n_bins, edges = _bin_layout(field_, det.bin_width)
    photons = field_.intensity[: n_bins * per_bin].reshape(n_bins, per_bin).sum(axis=1) * field_.dt
    mu = det.efficiency * photons
    if dark:
        mu = mu + det.dark_per_bin
    return mu, edges


def detect(
    output: FieldEnvelope,
    det: DetectorModel,
    plan: TrialPlan,
    seed: int,
    decay_hook: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> ArrivalHistogram:
    """Simulate ``plan.total_trials`` trials and histogram the arrival times.

    ``decay_hook`` maps trial indices within a sequence to a multiplier on the
    optical signal (dark counts are unaffected).
    """
    signal, edges = expected_counts(output, det, dark=False)
    if decay_hook is None:
        signal_scale = float(plan.n_trials)
    else:
        mult = np.asarray(decay_hook(np.arange(plan.n_trials)), dtype=float)
        if mult.shape != (plan.n_trials,) or np.any(mult < 0):
            raise ValueError("decay hook must return one non-negative multiplier per trial")
        signal_scale = float(mult.sum())
    mu_seq = signal * signal_scale + det.dark_per_bin * plan.n_trials

    children = np.random.SeedSequence(seed).spawn(plan.n_sequences)
    counts = np.zeros(mu_seq.size, dtype=np.int64)
    for child in children:
        counts += np.random.Generator(np.random.PCG64(child)).poisson(mu_seq)
    return ArrivalHistogram(edges, counts, plan.total_trials, seed)


def window_counts(counts, hist: ArrivalHistogram, start: float, end: float) -> float:
    """Sum of ``counts`` over bins whose centres fall in ``[start, end)``."""
    c = hist.centers
    mask = (c >= start) & (c < end)
    return float(np.sum(np.asarray(counts)[mask]))


def subtract_dark(hist: ArrivalHistogram, det: DetectorModel) -> np.ndarray:
    return hist.counts - det.dark_rate * hist.bin_width * hist.n_trials


def calibrate_nbar(hist: ArrivalHistogram, det: DetectorModel) -> Calibration:
    """Mean photon number in front of the sample from a transparent-medium run."""
    total = float(hist.counts.sum())
    dark = det.dark_rate * hist.bin_width * hist.counts.size * hist.n_trials
    scale = hist.n_trials * det.efficiency
    if scale <= 0:
        raise ValueError("detector efficiency and trial count must be positive")
    stderr = math.sqrt(max(total, 1.0)) / scale
    signal = total - dark
    if signal < 0:
        return Calibration(0.0, stderr, True)
    return Calibration(signal / scale, stderr, False)


def write_histogram(hist: ArrivalHistogram, path, metadata: dict | None = None) -> tuple:
    """Write ``<path>`` as CSV and a JSON sidecar next to it (same stem)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_start_s", "bin_end_s", "counts"])
        for a, b, c in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
            w.writerow([repr(float(a)), repr(float(b)), int(c)])
    sidecar = path.with_suffix(".json")
    meta = {"n_trials": hist.n_trials, "seed": hist.seed, "bin_width_s": hist.bin_width}
    meta.update(metadata or {})
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path, sidecar


def _jsonable(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
