"""Burning a comb into the ground-state populations with pairs of pulses.

Each pulse pair pumps atoms whose detuning sits on a bright fringe of its
spectrum into an auxiliary level; the dark fringes keep their absorption.
"""

import numpy as np

from afcsim import (
    FrequencyGrid,
    MaterialParams,
    PreparationSequence,
    PulsePair,
    TimeGrid,
    echo_efficiency,
    echo_peak_time,
    gaussian_pulse,
    prepare_comb,
    propagate,
    pump_probability,
    transfer_function,
)

mat = MaterialParams()
grid = FrequencyGrid(200e6, 8001)
print(f"material: d_max {mat.d_max}, branching to aux {mat.branching_to_aux}, spin lifetime {mat.TZ_spin * 1e3:.0f} ms")

# Pairs 250 ns apart give fringes every 4 MHz.
pair = PulsePair(0.5, 250e-9, 15e-9)  # area, separation, pulse FWHM
print(f"fringe period {pair.fringe_period / 1e6:.1f} MHz")
for f in (0.0, 1e6, 2e6):
    print(f"  pump probability at {f / 1e6:.0f} MHz: {pump_probability(f, pair):.4f}")

for n in (1, 10, 100):
    seq = PreparationSequence.single(pair, n_repetitions=n)
    spectrum, pops = prepare_comb(mat, seq, grid, tooth_floor_fwhm=1e6)
    centre = np.abs(grid.values) < 4e6
    print(f"{n:4d} pairs: depth range {spectrum.d[centre].min():.2f} to {spectrum.d[centre].max():.2f}, "
          f"aux population at line centre {pops.p_aux[grid.n_points // 2]:.3f}")

# The prepared comb stores a pulse for the pair separation.
seq = PreparationSequence.single(pair, n_repetitions=100)
spectrum, _ = prepare_comb(mat, seq, grid, tooth_floor_fwhm=1e6)
tg = TimeGrid(0.0, 1e-9, 4000)
out = propagate(gaussian_pulse(200e-9, 30e-9, 1.0, grid=tg), transfer_function(spectrum))
print(f"echo {(echo_peak_time(out, 350e-9, 550e-9) - 200e-9) * 1e9:.0f} ns after the input, "
      f"efficiency {echo_efficiency(out, 405e-9, 495e-9):.2%}")
