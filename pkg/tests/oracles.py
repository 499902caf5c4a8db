"""Closed-form references used by the tests.

Nothing here imports the package: each function is an independent
derivation that the numerical code is checked against.
"""

import math

import numpy as np


def lorentzian_comb_sum(x, eps):
    """sum_k eps^2 / ((x - k)^2 + eps^2), x in units of the period.

    Poisson summation gives pi*eps*sinh(2 pi eps) / (cosh(2 pi eps) - cos(2 pi x)).
    """
    x = np.asarray(x, dtype=float)
    return math.pi * eps * math.sinh(2 * math.pi * eps) / (math.cosh(2 * math.pi * eps) - np.cos(2 * math.pi * x))


def lorentzian_comb_mean_fraction(tooth_fwhm, period):
    """Period-averaged depth of a unit-peak Lorentzian comb: tanh(pi * gamma / (2 Delta))."""
    return math.tanh(math.pi * tooth_fwhm / (2 * period))


def lorentzian_line_phase(f, d0, fwhm):
    """Dispersive phase of a single Lorentzian absorption line of peak depth d0.

    With field amplitude transmission exp(-d/2 + i phi) and d = d0 * g^2/(f^2 + g^2),
    causality (Kramers-Kronig) fixes phi = (d0/2) * g * f / (f^2 + g^2), g = fwhm/2.
    """
    g = fwhm / 2
    f = np.asarray(f, dtype=float)
    return 0.5 * d0 * g * f / (f**2 + g**2)


def afc_echo_efficiency(mean_depth, total_mean_depth, tooth_fwhm, storage_time):
    """Echo efficiency of a Lorentzian-tooth comb in the broadband limit.

    The first Fourier harmonic of the depth is 2*m*exp(-pi*gamma*t); the
    first-order echo amplitude is half of it, attenuated by exp(-d_mean/2).
    """
    return mean_depth**2 * math.exp(-2 * math.pi * tooth_fwhm * storage_time) * math.exp(-total_mean_depth)


def decay_constant(tooth_fwhm):
    return 1.0 / (2 * math.pi * tooth_fwhm)


def pumping_fixed_point(pump_probability, branching, relax_factor):
    """Stationary |g> population of p -> 1/2 + (p (1 - b P) - 1/2) r."""
    P, b, r = pump_probability, branching, relax_factor
    return 0.5 * (1 - r) / (1 - (1 - b * P) * r)


def pumping_after(n, pump_probability, branching, relax_factor, p0=0.5):
    """|g> population after n pump-and-relax steps, by the affine-map closed form."""
    a = (1 - branching * pump_probability) * relax_factor
    c = 0.5 * (1 - relax_factor)
    fixed = c / (1 - a)  # a < 1 whenever relaxation or pumping is active
    return fixed + (p0 - fixed) * a**n


def diluted_visibility(v, signal_mean, floor):
    return v * signal_mean / (signal_mean + floor)


def gaussian_pulse_energy(peak_intensity, fwhm):
    return peak_intensity * fwhm * math.sqrt(math.pi / (4 * math.log(2)))
