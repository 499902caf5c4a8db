"""Run a loaded scenario and write its artifacts.

Every run produces ``results.csv``, ``summary.json`` and
``resolved_config.json``; runs that simulate detection also write
``histogram.csv`` with a ``histogram.json`` sidecar. Files are written into a
temporary directory next to the target and moved in place only once all of
them exist, so a failed run leaves nothing behind.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, replace
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import experiments as ex
from .photon_detection import ArrivalHistogram, write_histogram
from .scenario import NS, LoadedScenario

__all__ = ["RunOutput", "execute", "write_outputs", "check_out_dir", "OutputDirError"]


class OutputDirError(OSError):
    pass


@dataclass
class RunOutput:
    kind: str
    header: list
    rows: list
    summary: dict
    histogram: ArrivalHistogram | None
    line: str


def _package_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _f(x) -> float:
    x = float(x)
    return x if math.isfinite(x) else None


def _fit_dict(fit) -> dict:
    out = {k: _f(v) for k, v in fit.params.items()}
    for k in fit.params:
        err = fit.stderr(k)
        if math.isfinite(err):
            out[f"{k}_stderr"] = err
    out["converged"] = fit.converged
    if fit.flags:
        out["flags"] = list(fit.flags)
    return out


def _single_mode(ls: LoadedScenario) -> RunOutput:
    cfg = ls.config
    r = ex.run_single_mode(cfg)
    storage = ls.config.storage_times[0]
    tol = ls.params.echo_tolerance_ns * NS
    rows = [
        [repr(float(t)), repr(float(a)), repr(float(b)), repr(float(c))]
        for t, a, b, c in zip(r.output.times, r.input_field.intensity, r.output.intensity, r.control_output.intensity)
    ]
    checks = {
        "echo_time_within_tolerance": bool(abs(r.echo_time - storage) <= tol),
        "control_echo_below_1e-6": bool(r.control_echo_fraction < 1e-6),
    }
    summary = {
        "echo_time_ns": r.echo_time / NS,
        "expected_echo_time_ns": storage / NS,
        "efficiency": r.efficiency,
        "efficiency_from_counts": r.efficiency_from_counts,
        "efficiency_from_counts_stderr": r.efficiency_from_counts_err,
        "transmission": r.transmission,
        "control_transmission": r.control_transmission,
        "control_echo_fraction": r.control_echo_fraction,
        "echo_window_ns": [r.echo_window[0] / NS, r.echo_window[1] / NS],
        "checks": checks,
    }
    line = (
        f"echo at {r.echo_time / NS:.1f} ns, efficiency {100 * r.efficiency:.3f}%, "
        f"transmission {100 * r.transmission:.2f}%, control transmission {100 * r.control_transmission:.2f}%"
    )
    header = ["time_s", "input_intensity_per_s", "output_intensity_per_s", "control_intensity_per_s"]
    return RunOutput("single_mode", header, rows, summary, r.histogram, line)


def _bracket(ls: LoadedScenario) -> RunOutput:
    p = ls.params
    rows_ = ex.run_efficiency_bracket(
        ls.config, [w * 1e6 for w in p.tooth_fwhms_mhz], p.target_transmission, p.target_efficiency
    )
    rows = [
        [repr(r.tooth_fwhm), repr(r.d_peak), repr(r.d_background), repr(r.transmission), repr(r.efficiency), int(r.nearest_target)]
        for r in rows_
    ]
    best = next(r for r in rows_ if r.nearest_target)
    effs = [r.efficiency for r in rows_]
    checks = {
        "efficiencies_in_0.1_to_1.5_percent": bool(all(1e-3 <= e <= 1.5e-2 for e in effs)),
        "transmission_on_target": bool(all(abs(r.transmission - p.target_transmission) < 1e-3 for r in rows_)),
    }
    summary = {
        "rows": [
            {"tooth_fwhm_mhz": r.tooth_fwhm / 1e6, "d_peak": r.d_peak, "d_background": r.d_background,
             "transmission": r.transmission, "efficiency": r.efficiency, "nearest_target": r.nearest_target}
            for r in rows_
        ],
        "nearest_target_tooth_fwhm_mhz": best.tooth_fwhm / 1e6,
        "nearest_target_efficiency": best.efficiency,
        "checks": checks,
    }
    line = "efficiencies " + ", ".join(f"{100 * e:.2f}%" for e in effs) + f"; nearest target at {best.tooth_fwhm / 1e6:g} MHz"
    header = ["tooth_fwhm_hz", "d_peak", "d_background", "transmission", "efficiency", "nearest_target"]
    return RunOutput("efficiency_bracket", header, rows, summary, None, line)


def _linearity(ls: LoadedScenario) -> RunOutput:
    r = ex.run_linearity_scan(ls.config, ls.params.nbar_values)
    rows = [
        [repr(float(n)), int(a), repr(float(b)), repr(float(c))]
        for n, a, b, c in zip(r.nbar_values, r.raw_counts, r.corrected_counts, r.counts_per_trial)
    ]
    summary = {
        "n_trials_per_point": r.n_trials,
        "fit": _fit_dict(r.fit),
        "checks": {"r_squared_above_0.99": bool(r.fit["r_squared"] > 0.99)},
    }
    line = f"slope {r.fit['slope']:.4g} counts/trial per photon, R^2 {r.fit['r_squared']:.5f}"
    header = ["nbar", "raw_counts", "dark_subtracted_counts", "counts_per_trial"]
    return RunOutput("linearity", header, rows, summary, None, line)


def _decay(ls: LoadedScenario) -> RunOutput:
    r = ex.run_decay_scan(ls.config, [t * NS for t in ls.params.storage_times_ns], hold=ls.params.hold)
    rows = [[repr(float(t)), repr(float(e))] for t, e in zip(r.storage_times, r.efficiencies)]
    summary = {"fit": _fit_dict(r.fit), "tau_ns": r.fit["tau"] / NS, "checks": {"fit_converged": r.fit.converged}}
    if r.beat_fit is not None:
        # the plain exponential is biased by the beat; report the joint fit
        summary["beat_fit"] = _fit_dict(r.beat_fit)
        summary["tau_ns"] = r.beat_fit["tau"] / NS
        summary["beat_frequency_mhz"] = r.beat_fit["nu"] / 1e6
        summary["checks"]["beat_fit_converged"] = r.beat_fit.converged
    line = f"decay constant {summary['tau_ns']:.1f} ns"
    if r.beat_fit is not None:
        line += f", beat at {r.beat_fit['nu'] / 1e6:.3f} MHz"
    return RunOutput("decay", ["storage_time_s", "efficiency"], rows, summary, None, line)


def _multimode(ls: LoadedScenario) -> RunOutput:
    cfg = ls.config
    r = ex.run_multimode(cfg)
    storage = cfg.storage_times[0]
    tol = ls.params.echo_tolerance_ns * NS
    nbar = sorted((p.center, p.nbar) for p in cfg.input_pulses)
    delays = r.echo_times - r.input_times
    rows = [
        [repr(float(t)), repr(float(n)), repr(float(e)), repr(float(d)), repr(float(eff))]
        for t, (_, n), e, d, eff in zip(r.input_times, nbar, r.echo_times, delays, r.efficiencies)
    ]
    checks = {
        "order_preserved": r.order_preserved,
        "echo_delays_within_tolerance": bool(np.all(np.abs(delays - storage) <= tol)),
        "efficiency_spread_below_10_percent": bool(r.spread < 0.1),
    }
    summary = {
        "efficiencies": [float(e) for e in r.efficiencies],
        "echo_delays_ns": [float(d / NS) for d in delays],
        "spread": r.spread,
        "xcorr_lag_ns": r.xcorr_lag / NS,
        "order_preserved": r.order_preserved,
        "checks": checks,
    }
    line = (
        f"{len(delays)} echoes in order={r.order_preserved}, delays "
        + "/".join(f"{d / NS:.0f}" for d in delays)
        + f" ns, spread {100 * r.spread:.2f}%"
    )
    header = ["input_time_s", "nbar", "echo_time_s", "delay_s", "efficiency"]
    return RunOutput("multimode", header, rows, summary, r.histogram, line)


def _interference(ls: LoadedScenario) -> RunOutput:
    cfg = ls.config
    q = ls.qubit()
    p = ls.params
    tuned = None
    if p.target_v_raw is not None:
        tuned = ex.tune_dark_rate(cfg, q, p.target_v_raw)
        cfg = replace(cfg, detector=replace(cfg.detector, dark_rate=tuned))
    r = ex.run_interference(cfg, q, p.phi_values_rad)
    rows = [
        [repr(float(a)), int(b), repr(float(c)), repr(float(d)), int(e), int(f)]
        for a, b, c, d, e, f in zip(r.phi, r.middle_raw, r.middle_corrected, r.middle_noiseless, r.early_counts, r.late_counts)
    ]
    checks = {
        "noiseless_visibility_above_0.99": bool(r.v_noiseless > 0.99),
        "outer_bins_phase_independent": r.outer_phi_independent,
    }
    if p.target_v_raw is not None:
        checks["v_raw_within_0.03_of_target"] = bool(abs(r.v_raw - p.target_v_raw) <= 0.03)
    summary = {
        "v_raw": r.v_raw,
        "v_raw_stderr": _f(r.fit_raw.stderr("V")),
        "v_corrected": r.v_corrected,
        "v_corrected_stderr": _f(r.fit_corrected.stderr("V")),
        "v_noiseless": r.v_noiseless,
        "phase_offset_rad": r.fit_corrected["theta"],
        "dark_rate_hz": r.dark_rate,
        "dark_rate_tuned": tuned is not None,
        "first_comb_weight": r.weight,
        "outer_max_sigma": r.outer_max_z,
        "outer_noiseless_visibility": r.outer_noiseless_visibility,
        "windows_ns": {k: [a / NS, b / NS] for k, (a, b) in r.windows.items()},
        "checks": checks,
    }
    line = f"V_raw {r.v_raw:.3f}, V_corrected {r.v_corrected:.3f}, noiseless V {r.v_noiseless:.4f}"
    header = ["phi_rad", "middle_counts", "middle_dark_subtracted", "middle_noiseless_mean_per_trial", "early_counts", "late_counts"]
    return RunOutput("interference", header, rows, summary, r.histograms[0], line)


def _calibration(ls: LoadedScenario) -> RunOutput:
    r = ex.run_calibration(ls.config)
    c = r.calibration
    rows = [[repr(r.configured_nbar), repr(c.nbar), repr(c.stderr), repr(r.z), int(c.clipped)]]
    summary = {
        "configured_nbar": r.configured_nbar,
        "recovered_nbar": c.nbar,
        "stderr": c.stderr,
        "z": r.z,
        "clipped": c.clipped,
        "checks": {"recovered_within_3_stderr": bool(abs(r.z) <= 3)},
    }
    line = f"recovered nbar {c.nbar:.4f} +/- {c.stderr:.4f} (configured {r.configured_nbar:g})"
    return RunOutput("calibration", ["configured_nbar", "recovered_nbar", "stderr", "z", "clipped"], rows, summary, r.histogram, line)


_DISPATCH = {
    "single_mode": _single_mode,
    "efficiency_bracket": _bracket,
    "linearity": _linearity,
    "decay": _decay,
    "multimode": _multimode,
    "interference": _interference,
    "calibration": _calibration,
}


def execute(ls: LoadedScenario) -> RunOutput:
    out = _DISPATCH[ls.kind](ls)
    checks = out.summary.get("checks", {})
    out.summary = {
        "kind": ls.kind,
        "seed": ls.config.master_seed,
        "package_version": _package_version(),
        **out.summary,
        "passed": bool(all(checks.values())),
    }
    return out


def check_out_dir(out_dir) -> Path:
    """Reject targets that cannot become a directory before any work is done."""
    path = Path(out_dir).absolute()
    if path.exists() and not path.is_dir():
        raise OutputDirError(f"output path {path} exists and is not a directory")
    parent = path
    while not parent.exists():
        parent = parent.parent
    if not parent.is_dir():
        raise OutputDirError(f"{parent} is not a directory")
    if not os.access(parent, os.W_OK | os.X_OK):
        raise OutputDirError(f"{parent} is not writable")
    return path


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_outputs(out: RunOutput, ls: LoadedScenario, out_dir) -> Path:
    path = check_out_dir(out_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".afc-sim-", dir=path.parent))
    try:
        (tmp / "results.csv").write_text(_csv_text(out.header, out.rows))
        if out.histogram is not None:
            write_histogram(out.histogram, tmp / "histogram.csv", {"kind": out.kind})
        dump = lambda obj: json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
        (tmp / "summary.json").write_text(dump(out.summary))
        (tmp / "resolved_config.json").write_text(dump(ls.resolved()))
        if not path.exists():
            os.rename(tmp, path)
        else:
            for f in sorted(tmp.iterdir()):
                os.replace(f, path / f.name)
            tmp.rmdir()
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return path
