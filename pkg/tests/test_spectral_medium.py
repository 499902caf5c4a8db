import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afcsim import (
    AbsorptionSpectrum,
    CombParams,
    FrequencyGrid,
    apply_superhyperfine_splitting,
    comb_mean_depth,
    flat_absorption,
    lorentzian_broaden,
    superpose_spectra,
    synthetic_comb,
    write_spectrum_csv,
)

import oracles


def test_grid_is_symmetric_and_uniform():
    g = FrequencyGrid(100e6, 1001)
    f = g.values
    assert f[0] == -50e6 and f[-1] == 50e6
    assert np.allclose(np.diff(f), g.spacing)


@pytest.mark.parametrize("span,n", [(0, 11), (-1e6, 11), (1e6, 1), (float("inf"), 11)])
def test_grid_rejects_bad_input(span, n):
    with pytest.raises(ValueError):
        FrequencyGrid(span, n)


def test_grid_resolution_check():
    g = FrequencyGrid(200e6, 4001)  # 50 kHz spacing
    g.check_resolves(0.4e6)
    with pytest.raises(ValueError, match="resolve"):
        g.check_resolves(0.3e6)


def test_flat_absorption_transmission():
    s = flat_absorption(FrequencyGrid(10e6, 101), 3.9)
    assert np.allclose(s.transmission(), math.exp(-3.9))
    with pytest.raises(ValueError):
        flat_absorption(FrequencyGrid(10e6, 101), -0.1)


def test_spectrum_is_immutable_and_validated(grid):
    s = flat_absorption(grid, 1.0)
    with pytest.raises(ValueError):
        s.d[0] = 2.0
    with pytest.raises(ValueError):
        AbsorptionSpectrum(grid, np.full(grid.n_points, -1.0))
    with pytest.raises(ValueError):
        AbsorptionSpectrum(grid, np.zeros(3))


def test_comb_invariant_finesse_above_one():
    with pytest.raises(ValueError, match="finesse"):
        CombParams(4e6, 4e6)
    with pytest.raises(ValueError):
        CombParams(4e6, 5e6)
    assert CombParams(4e6, 1e6).finesse == 4.0
    assert CombParams(4e6, 1e6).storage_time == pytest.approx(250e-9)


@pytest.mark.parametrize("eps", [0.05, 0.1875, 0.3])
def test_lorentzian_comb_matches_poisson_sum(grid, eps):
    period = 4e6
    comb = CombParams(period, 2 * eps * period, "lorentzian", 1.0, 0.0)
    s = synthetic_comb(grid, comb, d_max=None)
    x = grid.values / period
    ref = oracles.lorentzian_comb_sum(x, eps) / oracles.lorentzian_comb_sum(0.0, eps)
    assert np.max(np.abs(s.d - ref)) < 1e-6


def test_lorentzian_comb_mean_depth_closed_form():
    comb = CombParams(4e6, 1.5e6, "lorentzian", 2.0, 0.0)
    assert comb_mean_depth(comb) == pytest.approx(2.0 * oracles.lorentzian_comb_mean_fraction(1.5e6, 4e6), rel=1e-6)


def test_comb_nodes_and_antinodes(grid):
    # teeth at multiples of the period, minima half way between
    s = synthetic_comb(grid, CombParams(4e6, 1e6, "gaussian", 2.0, 0.5), d_max=None)
    f = grid.values
    at = lambda x: s.d[np.argmin(np.abs(f - x))]
    assert at(0.0) == pytest.approx(2.5)
    assert at(8e6) == pytest.approx(2.5, rel=1e-6)
    # half way between teeth only the two neighbouring Gaussian tails remain
    assert at(2e6) == pytest.approx(0.5 + 2.0 * 2 * 2.0**-16, rel=1e-6)


def test_square_teeth_duty_cycle(grid):
    s = synthetic_comb(grid, CombParams(4e6, 1e6, "square", 1.0, 0.0), d_max=None)
    inside = np.abs(((grid.values / 4e6) + 0.5) % 1 - 0.5) < 0.125 - 1e-9
    assert np.all(s.d[inside] == 1.0)
    assert np.mean(s.d) == pytest.approx(0.25, abs=0.01)


def test_envelope_shapes_the_comb(grid):
    s = synthetic_comb(grid, CombParams(4e6, 1e6, "lorentzian", 2.0), envelope_fwhm=40e6, d_max=None)
    f = grid.values
    i0 = np.argmin(np.abs(f))
    i20 = np.argmin(np.abs(f - 20e6))
    assert s.d[i20] == pytest.approx(0.5 * s.d[i0], rel=1e-6)


def test_depth_ceiling_clips_with_warning(grid):
    with pytest.warns(RuntimeWarning, match="ceiling"):
        s = synthetic_comb(grid, CombParams(4e6, 1e6, "lorentzian", 5.0), d_max=4.0)
    assert s.d.max() == pytest.approx(4.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        synthetic_comb(grid, CombParams(4e6, 1e6, "lorentzian", 3.0, 1.0), d_max=4.0)


def test_comb_rejects_unresolved_tooth():
    with pytest.raises(ValueError, match="resolve"):
        synthetic_comb(FrequencyGrid(200e6, 401), CombParams(4e6, 1e6))


def test_superpose_linear_and_keeps_periods(grid):
    a = synthetic_comb(grid, CombParams(5e6, 1e6), d_max=None)
    b = synthetic_comb(grid, CombParams(1 / 300e-9, 1e6), d_max=None)
    s = superpose_spectra(a, b, 0.3)
    assert np.allclose(s.d, 0.3 * a.d + 0.7 * b.d)
    assert s.storage_times == pytest.approx((200e-9, 300e-9))
    with pytest.raises(ValueError):
        superpose_spectra(a, b, 1.5)
    with pytest.raises(ValueError, match="grid"):
        superpose_spectra(a, flat_absorption(FrequencyGrid(100e6, 11), 1), 0.5)


def test_superhyperfine_doublet_preserves_area(grid):
    s = synthetic_comb(grid, CombParams(4e6, 1e6), envelope_fwhm=40e6, d_max=None)
    split = apply_superhyperfine_splitting(s, 2e6, 0.5)
    assert split.integrated_depth() == pytest.approx(s.integrated_depth(), rel=1e-4)
    assert apply_superhyperfine_splitting(s, 0.0) is s
    # a single narrow line becomes two lines split by the doublet spacing
    f = grid.values
    line = AbsorptionSpectrum(grid, np.exp(-0.5 * (f / 0.2e6) ** 2))
    d = apply_superhyperfine_splitting(line, 6e6, 0.5).d
    peaks = f[np.argsort(d)[-2:]]
    assert sorted(np.round(peaks / 1e6, 2)) == [-3.0, 3.0]


def test_lorentzian_broaden_conserves_area_and_widens(grid):
    f = grid.values
    line = AbsorptionSpectrum(grid, 0.1 + np.exp(-0.5 * (f / 0.3e6) ** 2))
    wide = lorentzian_broaden(line, 1e6)
    assert wide.integrated_depth() == pytest.approx(line.integrated_depth(), rel=2e-3)
    assert wide.d.max() < line.d.max()
    assert lorentzian_broaden(line, 0.0) is line


@settings(max_examples=30, deadline=None)
@given(
    period=st.floats(1e6, 10e6),
    frac=st.floats(0.05, 0.9),
    shape=st.sampled_from(["lorentzian", "gaussian", "square"]),
    d_peak=st.floats(0.0, 3.0),
    bg=st.floats(0.0, 1.0),
)
def test_comb_depth_bounds(period, frac, shape, d_peak, bg):
    grid = FrequencyGrid(100e6, 8001)
    comb = CombParams(period, max(frac * period, 0.1e6), shape, d_peak, bg)
    s = synthetic_comb(grid, comb, d_max=None)
    assert np.all(s.d >= bg - 1e-12)
    assert np.all(s.d <= bg + d_peak + 1e-9)
    assert comb_mean_depth(comb) <= d_peak + 1e-12


def test_write_spectrum_csv(tmp_path, grid):
    path = write_spectrum_csv(flat_absorption(grid, 1.0), tmp_path / "s.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "detuning_hz,optical_depth"
    assert len(lines) == grid.n_points + 1
