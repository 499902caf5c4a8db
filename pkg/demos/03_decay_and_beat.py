"""Echo efficiency against storage time: tooth dephasing and a superhyperfine beat."""

import math

import numpy as np

from afcsim import run_decay_scan
from afcsim.scenario import parse_scenario, preset_path

# Background-free Lorentzian teeth of 0.72 MHz. Each point uses a comb with the
# period 1/T and the same period-averaged depth.
loaded = parse_scenario(preset_path("fig3b_decay"))
times = np.array(loaded.params.storage_times_ns) * 1e-9
r = run_decay_scan(loaded.config, times)
gamma = loaded.config.combs[0].tooth_fwhm
print(f"fitted decay constant {r.fit['tau'] * 1e9:.1f} +/- {r.fit.stderr('tau') * 1e9:.1f} ns")
print(f"1 / (2 pi gamma)      {1e9 / (2 * math.pi * gamma):.1f} ns")
for t, e in zip(times[::3], r.efficiencies[::3]):
    print(f"  {t * 1e9:6.0f} ns  {e:.3e}")

# A 5 MHz doublet of every line modulates the echo amplitude by cos(pi nu T).
loaded = parse_scenario(preset_path("fig3b_decay_beat"))
times = np.array(loaded.params.storage_times_ns) * 1e-9
r = run_decay_scan(loaded.config, times)
b = r.beat_fit
print(f"beat frequency {b['nu'] / 1e6:.3f} MHz, depth {b['B']:.3f}, decay {b['tau'] * 1e9:.1f} ns")
