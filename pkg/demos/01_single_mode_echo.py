"""Storing one weak pulse in a synthetic comb and watching it come back.

Run with ``python demos/01_single_mode_echo.py``.
"""

import math

import numpy as np

from afcsim import (
    CombParams,
    FrequencyGrid,
    TimeGrid,
    comb_mean_depth,
    echo_efficiency,
    echo_peak_time,
    flat_absorption,
    gaussian_pulse,
    propagate,
    synthetic_comb,
    transfer_function,
    window_energy,
)

# A 200 MHz wide frequency grid (25 kHz spacing) and a 4 us time axis at 1 ns.
grid = FrequencyGrid(200e6, 8001)
tg = TimeGrid(0.0, 1e-9, 4000)

# Lorentzian teeth every 4 MHz, 1.5 MHz wide, on top of a flat background.
comb = CombParams(period_delta=4e6, tooth_fwhm=1.5e6, tooth_shape="lorentzian", d_peak=2.0, d_background=1.5)
spectrum = synthetic_comb(grid, comb, envelope_fwhm=80e6)
print(f"finesse {comb.finesse:.2f}, storage time {comb.storage_time * 1e9:.0f} ns")
print(f"mean depth across one period: {comb_mean_depth(comb):.3f}")

# A 30 ns pulse carrying half a photon on average, centred at 200 ns.
pulse = gaussian_pulse(200e-9, 30e-9, nbar=0.5, grid=tg)
out = propagate(pulse, transfer_function(spectrum))

# The transmitted part sits on top of the input; the echo appears one storage time later.
t_echo = echo_peak_time(out, 350e-9, 550e-9)
eta = echo_efficiency(out, 405e-9, 495e-9)
print(f"echo peak {t_echo * 1e9:.0f} ns, i.e. {(t_echo - 200e-9) * 1e9:.0f} ns after the input")
print(f"echo efficiency {eta:.3%}")
print(f"transmitted fraction {window_energy(out, 155e-9, 245e-9) / pulse.energy:.3%}")

# Energy is never created by a passive medium.
print(f"output / input energy {out.energy / pulse.energy:.4f}")

# Without a grating the same optical depth only absorbs: about exp(-3.9) is transmitted
# and nothing comes out at 450 ns.
control = propagate(pulse, transfer_function(flat_absorption(grid, 3.9)))
print(f"control transmission {window_energy(control, 155e-9, 245e-9) / pulse.energy:.3%} (exp(-3.9) = {math.exp(-3.9):.3%})")
print(f"control echo window {window_energy(control, 405e-9, 495e-9) / pulse.energy:.1e} of the input")

# Coarse intensity trace around the echo, one row per 10 ns.
t = out.times
peak = out.intensity[(t >= 400e-9) & (t < 500e-9)].max()
for t0 in np.arange(400e-9, 500e-9, 10e-9):
    m = (t >= t0) & (t < t0 + 10e-9)
    level = out.intensity[m].mean() / peak
    print(f"{t0 * 1e9:5.0f} ns  {'#' * int(round(50 * level))}")
