import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afcsim import (
    AbsorptionSpectrum,
    CombParams,
    FieldEnvelope,
    FrequencyGrid,
    PropagationError,
    PulseSpec,
    TimeGrid,
    TransferFunction,
    apply_superhyperfine_splitting,
    atom_sum_echo,
    comb_mean_depth,
    echo_efficiency,
    echo_peak_time,
    flat_absorption,
    gaussian_pulse,
    propagate,
    pulse_train,
    sample_ensemble,
    synthetic_comb,
    transfer_function,
    window_energy,
    write_field_csv,
)

import oracles

GRID = FrequencyGrid(200e6, 8001)
TG = TimeGrid(0.0, 1e-9, 4000)


def _echo(out, center, storage, fwhm=30e-9):
    return echo_efficiency(out, center + storage - 1.5 * fwhm, center + storage + 1.5 * fwhm)


# --------------------------------------------------------------------------- fields


def test_gaussian_pulse_carries_nbar():
    p = gaussian_pulse(200e-9, 30e-9, 0.5, grid=TG)
    assert p.energy == pytest.approx(0.5, rel=1e-9)
    peak = p.intensity.max()
    assert oracles.gaussian_pulse_energy(peak, 30e-9) == pytest.approx(0.5, rel=1e-6)
    assert p.supports == ((155e-9, 245e-9),)


def test_pulse_validation():
    with pytest.raises(ValueError, match="unresolved"):
        gaussian_pulse(200e-9, 3e-9, 0.5, grid=TG)
    with pytest.raises(ValueError):
        gaussian_pulse(200e-9, 30e-9, -1.0, grid=TG)
    with pytest.raises(ValueError):
        FieldEnvelope(0.0, 1e-9, [1.0, np.nan], 1.0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 0.0, 10)


def test_pulse_train_adds_photon_numbers():
    train = pulse_train([PulseSpec(200e-9, 30e-9, 0.4), PulseSpec(400e-9, 30e-9, 0.3)], TG)
    assert train.nbar == pytest.approx(0.7)
    assert train.energy == pytest.approx(0.7, rel=1e-9)
    with pytest.raises(ValueError):
        pulse_train([], TG)


def test_scaled_field_scales_nbar():
    p = gaussian_pulse(200e-9, 30e-9, 0.5, grid=TG).scaled(2.0j)
    assert p.nbar == pytest.approx(2.0)
    assert p.energy == pytest.approx(2.0)


# --------------------------------------------------------------------------- filter


def test_flat_medium_attenuates_without_delay():
    inp = gaussian_pulse(500e-9, 30e-9, 1.0, grid=TG)
    out = propagate(inp, transfer_function(flat_absorption(GRID, 3.9)))
    assert out.energy == pytest.approx(math.exp(-3.9), rel=1e-9)
    assert echo_peak_time(out, 0, 3.9e-6) == pytest.approx(500e-9)


def test_transfer_function_is_passive_and_rejects_gain():
    H = transfer_function(synthetic_comb(GRID, CombParams(4e6, 1.5e6, "lorentzian", 2.0, 1.5), 80e6))
    assert np.all(np.abs(H.response) <= 1.0)
    with pytest.raises(ValueError, match="passive"):
        TransferFunction(GRID, np.full(GRID.n_points, 1.5))


def test_dispersion_matches_lorentzian_kramers_kronig():
    f = GRID.values
    d0, fwhm = 1.0, 2e6
    line = AbsorptionSpectrum(GRID, d0 * (fwhm / 2) ** 2 / (f**2 + (fwhm / 2) ** 2))
    phase = transfer_function(line).phase
    ref = oracles.lorentzian_line_phase(f, d0, fwhm)
    central = np.abs(f) < 20e6
    assert np.max(np.abs(phase - ref)[central]) < 0.005 * np.max(np.abs(ref))
    assert np.max(np.abs(phase - ref)) < 0.03 * np.max(np.abs(ref))
    # the opposite sign would be acausal; make sure it is clearly worse
    assert np.max(np.abs(-phase - ref)[central]) > 0.5 * np.max(np.abs(ref))


def test_output_is_causal():
    sp = synthetic_comb(GRID, CombParams(4e6, 1.5e6, "lorentzian", 2.0, 1.5), 80e6)
    inp = gaussian_pulse(1000e-9, 30e-9, 1.0, grid=TG)
    out = propagate(inp, transfer_function(sp))
    early = out.times < 900e-9
    assert np.sum(out.intensity[early]) * TG.dt < 1e-12


def test_dispersion_off_gives_symmetric_response():
    sp = synthetic_comb(GRID, CombParams(4e6, 1.5e6, "lorentzian", 2.0, 1.5), 80e6)
    inp = gaussian_pulse(1000e-9, 30e-9, 1.0, grid=TG)
    out = propagate(inp, transfer_function(sp, include_dispersion=False))
    # a real, even filter gives echoes both before and after the pulse
    before = window_energy(out, 705e-9, 795e-9)
    after = window_energy(out, 1205e-9, 1295e-9)
    assert before == pytest.approx(after, rel=1e-6)


def test_linearity_and_phase_coherence():
    H = transfer_function(synthetic_comb(GRID, CombParams(4e6, 1.5e6, "lorentzian", 2.0, 1.5), 80e6))
    a = gaussian_pulse(200e-9, 30e-9, 0.3, grid=TG)
    b = gaussian_pulse(300e-9, 30e-9, 0.2, 1.1, grid=TG)
    both = propagate(a + b, H)
    summed = propagate(a, H).amplitude + propagate(b, H).amplitude
    assert np.allclose(both.amplitude, summed, atol=1e-12 * np.abs(summed).max())
    rotated = propagate(a.scaled(np.exp(0.7j)), H).amplitude
    expected = propagate(a, H).amplitude * np.exp(0.7j)
    assert np.allclose(rotated, expected, rtol=0, atol=1e-12 * np.abs(expected).max())


@pytest.mark.parametrize("period", [2e6, 4e6, 8e6])
def test_echo_at_inverse_period(period):
    sp = synthetic_comb(GRID, CombParams(period, period / 4, "lorentzian", 2.0, 0.5), 80e6)
    out = propagate(gaussian_pulse(200e-9, 30e-9, 0.5, grid=TG), transfer_function(sp))
    storage = 1 / period
    peak = echo_peak_time(out, 200e-9 + 0.5 * storage, 200e-9 + 1.5 * storage)
    assert abs(peak - 200e-9 - storage) <= 15e-9


@pytest.mark.parametrize("gamma,storage,bg", [(1.0e6, 250e-9, 0.2), (0.5e6, 250e-9, 0.0), (1.0e6, 500e-9, 0.5)])
def test_echo_efficiency_matches_comb_law(gamma, storage, bg):
    comb = CombParams(1 / storage, gamma, "lorentzian", 0.5, bg)
    sp = synthetic_comb(GRID, comb, None, d_max=None)
    out = propagate(gaussian_pulse(200e-9, 30e-9, 1.0, grid=TG), transfer_function(sp))
    m = comb_mean_depth(comb)
    ref = oracles.afc_echo_efficiency(m, m + bg, gamma, storage)
    assert _echo(out, 200e-9, storage) == pytest.approx(ref, rel=0.01)


def test_superhyperfine_beat_law():
    comb = CombParams(4e6, 1e6, "lorentzian", 0.5, 0.0)
    base = synthetic_comb(GRID, comb, None, d_max=None)
    inp = gaussian_pulse(200e-9, 30e-9, 1.0, grid=TG)
    e0 = _echo(propagate(inp, transfer_function(base)), 200e-9, 250e-9)
    # echo amplitude is multiplied by cos(pi * nu * T)
    for nu in (1e6, 1.5e6, 4e6):
        split = apply_superhyperfine_splitting(base, nu, 0.5)
        e = _echo(propagate(inp, transfer_function(split)), 200e-9, 250e-9)
        assert e == pytest.approx(e0 * math.cos(math.pi * nu * 250e-9) ** 2, rel=0.02, abs=1e-3 * e0)


def test_window_and_nyquist_errors():
    sp = synthetic_comb(GRID, CombParams(1e6, 0.3e6), 80e6)
    short = TimeGrid(0, 1e-9, 1200)
    with pytest.raises(PropagationError, match="wrap"):
        propagate(gaussian_pulse(200e-9, 30e-9, 0.5, grid=short), transfer_function(sp))
    coarse = TimeGrid(0, 10e-9, 1000)
    with pytest.raises(PropagationError, match="Nyquist"):
        propagate(gaussian_pulse(2000e-9, 60e-9, 0.5, grid=coarse), transfer_function(sp))


def test_echo_window_must_avoid_input():
    out = gaussian_pulse(200e-9, 30e-9, 0.5, grid=TG)
    with pytest.raises(ValueError, match="overlaps"):
        echo_efficiency(out, 230e-9, 300e-9)
    with pytest.raises(ValueError):
        window_energy(out, 300e-9, 200e-9)


@settings(max_examples=25, deadline=None)
@given(
    period=st.floats(2e6, 8e6),
    frac=st.floats(0.1, 0.8),
    shape=st.sampled_from(["lorentzian", "gaussian", "square"]),
    d_peak=st.floats(0.0, 4.0),
    bg=st.floats(0.0, 2.0),
    disp=st.booleans(),
)
def test_propagation_is_passive(period, frac, shape, d_peak, bg, disp):
    grid = FrequencyGrid(200e6, 4001)
    comb = CombParams(period, max(frac * period, 0.4e6), shape, d_peak, bg)
    sp = synthetic_comb(grid, comb, 80e6, d_max=None)
    inp = gaussian_pulse(200e-9, 30e-9, 1.0, grid=TG)
    out = propagate(inp, transfer_function(sp, disp))
    assert out.energy <= inp.energy * (1 + 1e-9)


# --------------------------------------------------------------------------- atom-sum oracle


def _small_case(shape, d_peak=0.1):
    grid = FrequencyGrid(100e6, 4001)
    tg = TimeGrid(0, 1e-9, 800)
    sp = synthetic_comb(grid, CombParams(4e6, 1.5e6, shape, d_peak, 0.0), 40e6, d_max=None)
    inp = gaussian_pulse(150e-9, 30e-9, 1.0, grid=tg)
    return sp, inp


@pytest.mark.parametrize("shape", ["lorentzian", "gaussian", "square"])
def test_atom_sum_agrees_with_filter(shape):
    sp, inp = _small_case(shape)
    ref = propagate(inp, transfer_function(sp))
    atoms = atom_sum_echo(sample_ensemble(sp, 4001), inp)
    e_ref = _echo(ref, 150e-9, 250e-9)
    e_atoms = _echo(atoms, 150e-9, 250e-9)
    assert e_atoms == pytest.approx(e_ref, rel=0.02)
    win = (355e-9, 445e-9)
    assert abs(echo_peak_time(atoms, *win) - echo_peak_time(ref, *win)) <= inp.dt


def test_first_order_atom_sum_misses_attenuation():
    # one slab is first-order only: echo too strong by about exp(+mean depth)
    sp, inp = _small_case("lorentzian")
    one = _echo(atom_sum_echo(sample_ensemble(sp, 4001), inp, n_slices=1), 150e-9, 250e-9)
    many = _echo(atom_sum_echo(sample_ensemble(sp, 4001), inp), 150e-9, 250e-9)
    assert one > many * 1.02


def test_stochastic_ensemble_is_unbiased():
    sp, inp = _small_case("lorentzian")
    ref = _echo(propagate(inp, transfer_function(sp)), 150e-9, 250e-9)
    vals = np.array(
        [_echo(atom_sum_echo(sample_ensemble(sp, 4000, seed=s, deterministic=False), inp), 150e-9, 250e-9) for s in range(8)]
    )
    mean, sem = vals.mean(), vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(mean - ref) < max(4 * sem, 0.05 * ref)


def test_single_atom_rings_forever_at_its_detuning():
    grid = FrequencyGrid(100e6, 1001)
    tg = TimeGrid(0, 1e-9, 600)
    d = np.zeros(grid.n_points)
    spec = AbsorptionSpectrum(grid, d + 1e-3)
    ens = sample_ensemble(spec, 1)
    ens = type(ens)(np.array([5e6]), np.array([1e-3]), 1e5, True)
    inp = gaussian_pulse(100e-9, 30e-9, 1.0, grid=tg)
    out = atom_sum_echo(ens, inp, n_slices=1)
    tail = (out.amplitude - inp.amplitude)[300:]
    # no dephasing: constant magnitude, phase advancing at 2*pi*delta
    assert np.ptp(np.abs(tail)) < 1e-9 * np.abs(tail).max()
    dphi = np.angle(tail[1:] / tail[:-1])
    assert np.allclose(dphi, 2 * math.pi * 5e6 * tg.dt)


def test_atom_sum_refuses_strong_coupling():
    sp, inp = _small_case("lorentzian", d_peak=3.0)
    with pytest.raises(PropagationError, match="weak-coupling"):
        atom_sum_echo(sample_ensemble(sp, 1001), inp)


def test_ensemble_carries_integrated_depth():
    sp, _ = _small_case("gaussian")
    det = sample_ensemble(sp, 2001)
    assert det.weights.sum() * det.spectral_weight == pytest.approx(sp.integrated_depth(), rel=1e-3)
    sto = sample_ensemble(sp, 500, seed=1, deterministic=False)
    assert sto.weights.sum() * sto.spectral_weight == pytest.approx(sp.integrated_depth())
    with pytest.raises(ValueError):
        sample_ensemble(AbsorptionSpectrum(sp.grid, np.zeros(sp.grid.n_points)), 10)


def test_write_field_csv(tmp_path):
    path = write_field_csv(gaussian_pulse(200e-9, 30e-9, 0.5, grid=TG), tmp_path / "f.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == TG.n + 1
