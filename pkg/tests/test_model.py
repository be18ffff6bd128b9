import numpy as np
import pytest
from hypothesis import given, strategies as st

from stabilitylab.errors import FluxOutOfRange, InvalidParameter
from stabilitylab.model import (BathPrior, CyclePerturbation, DeviceState, FluxLine, TlsBath, TransmonParams,
                                advance_bath, apply_thermal_cycle, f01_at_flux, f01_max, flip_probability,
                                flux_from_bias, initial_device, reduce_flux, sample_bath,
                                sweet_spot_frequency, t1_at_frequency)

# closed-form values evaluated with mpmath at 30 digits
F01MAX_14_02 = 4.532863826479693
F01MAX_1265_025 = 4.779910535983717
F01_14_02_THIRD = 3.146640106136302


def device(gamma0=1 / 70, bath=None, ej=14.0, ec=0.2):
    return DeviceState(TransmonParams(ej, ec, gamma0), FluxLine(0.1, 0.0), bath or TlsBath.empty())


def test_f01_max_oracle_values():
    assert f01_max(TransmonParams(14.0, 0.2, 0.01)) == pytest.approx(F01MAX_14_02, rel=1e-14)
    assert f01_max(TransmonParams(12.65, 0.25, 0.01)) == pytest.approx(F01MAX_1265_025, rel=1e-14)


def test_f01_max_formula_cancels_at_degenerate_point():
    assert sweet_spot_frequency(0.125, 1.0) == 0.0
    with pytest.raises(InvalidParameter):
        TransmonParams(0.125, 1.0, 0.01)


def test_tuning_curve_values():
    p = TransmonParams(14.0, 0.2, 0.01)
    assert f01_at_flux(p, 0.0) == f01_max(p)
    assert f01_at_flux(p, 1 / 3) == pytest.approx(F01_14_02_THIRD, rel=1e-12)
    with pytest.raises(FluxOutOfRange):
        f01_at_flux(p, 0.46)


@given(st.floats(-0.45, 0.45), st.floats(10.0, 18.0), st.floats(0.18, 0.3))
def test_tuning_curve_even_and_bounded(phi, ej, ec):
    p = TransmonParams(ej, ec, 0.01)
    assert abs(f01_at_flux(p, phi) - f01_at_flux(p, -phi)) <= 1e-12
    assert f01_at_flux(p, phi) <= f01_max(p)


@pytest.mark.parametrize("offset,flux_offset,bias,expected", [
    (0.0, 0.0, 0.0, 0.0), (1.0, 0.12, 1.0, 0.12), (0.0, 0.0, 2.5, 0.25)])
def test_flux_from_bias(offset, flux_offset, bias, expected):
    assert flux_from_bias(FluxLine(0.1, offset, flux_offset), bias) == pytest.approx(expected, abs=1e-15)


@given(st.floats(-50, 50))
def test_reduce_flux_range_and_period(x):
    r = float(reduce_flux(x))
    assert -0.5 <= r < 0.5
    assert abs((x - r) - round(x - r)) < 1e-9


def test_t1_examples():
    assert t1_at_frequency(device(), 4.3) == pytest.approx(70.0, rel=1e-14)
    on = TlsBath.from_defects([4.3], [1 / 35], [0.002])
    assert t1_at_frequency(device(bath=on), 4.3) == pytest.approx(70 / 3, rel=1e-12)
    far = TlsBath.from_defects([4.3 + 100 * 0.002], [1 / 35], [0.002])
    assert abs(t1_at_frequency(device(bath=far), 4.3) / 70.0 - 1) < 1e-4


@given(st.floats(4.0, 4.6), st.floats(1e-3, 5.0), st.floats(1e-3, 5.0))
def test_t1_bounded_and_monotone_in_gamma_max(f, g1, g2):
    lo, hi = sorted((g1, g2))
    a = t1_at_frequency(device(bath=TlsBath.from_defects([4.3], [lo], [0.003])), f)
    b = t1_at_frequency(device(bath=TlsBath.from_defects([4.3], [hi], [0.003])), f)
    assert a <= 70.0 and b <= a


def test_t1_equals_baseline_only_without_tls():
    d = initial_device(TransmonParams(14.0, 0.2, 1 / 70), FluxLine(0.1, 0.0), BathPrior(), 3)
    freqs = np.linspace(4.2, 4.5, 301)
    assert np.all(t1_at_frequency(d, freqs) < 70.0)


def test_sample_bath_counts_and_window():
    prior = BathPrior(density_per_mhz=0.05)
    bath = sample_bath(prior, 4.0, 4.4, 1)
    assert bath.n_defects == 20
    assert bath.n_fluctuators == 20 * prior.fluctuators_per_defect
    assert np.all((bath.center_freq >= 4.0) & (bath.center_freq <= 4.4))
    with pytest.raises(ValueError):
        bath.states[0] = 1


def test_advance_bath_zero_step_and_determinism():
    d = initial_device(TransmonParams(14.0, 0.2, 1 / 70), FluxLine(0.1, 0.0), BathPrior(), 5)
    assert advance_bath(d, 0.0, 1) is d
    a, b = advance_bath(d, 10.0, 42), advance_bath(d, 10.0, 42)
    assert a == b and a.clock == 10.0
    with pytest.raises(InvalidParameter):
        advance_bath(d, -1.0, 0)


def test_diffusion_grows_with_time():
    prior = BathPrior(rate_range_per_hour=(1e-4, 1e2), rate_exponent=0.0, fluctuators_per_defect=10,
                      density_per_mhz=0.01)
    p = TransmonParams(14.0, 0.2, 1 / 70)
    moved = {1.0: [], 100.0: []}
    for i in range(1000):
        d = initial_device(p, FluxLine(0.1, 0.0), prior, i)
        for dt in moved:
            d2 = advance_bath(d, dt, (i, int(dt)))
            moved[dt].append(np.mean(np.abs(d2.bath.center_freq - d.bath.center_freq)))
    assert np.mean(moved[100.0]) > np.mean(moved[1.0])


@given(st.floats(1e-4, 10.0), st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_flip_probability_composes(rate, a, b):
    pa, pb = flip_probability(rate, a), flip_probability(rate, b)
    two_step = pa * (1 - pb) + pb * (1 - pa)
    assert two_step == pytest.approx(flip_probability(rate, a + b), abs=1e-12)


def test_flip_statistics_two_steps_match_one():
    rates = np.full(10_000, 0.05)
    bath = TlsBath(np.zeros(1), np.zeros(1), np.ones(1), np.zeros((1, rates.size)), rates,
                   np.zeros(rates.size, dtype=np.int8))
    d = device(bath=bath)
    two = advance_bath(advance_bath(d, 3.0, 1), 4.0, 2).bath.states.mean()
    p = flip_probability(0.05, 7.0)
    sigma = np.sqrt(p * (1 - p) / rates.size)
    assert abs(two - p) < 3 * sigma


def test_thermal_cycle_isolated_tls_reset():
    d = initial_device(TransmonParams(14.0, 0.2, 1 / 70), FluxLine(0.1, 0.0, 0.05), BathPrior(), 9)
    d2 = apply_thermal_cycle(d, CyclePerturbation(0.0, 0.0, reseed_tls=True), 1)
    assert f01_max(d2.params) == f01_max(d.params)
    assert d2.flux_line.flux_offset == 0.05
    assert not np.array_equal(d2.bath.center_freq, d.bath.center_freq)
    assert d2.cycle_index == 2 and d2.clock == 0.0


def test_thermal_cycle_shift_band_and_offsets():
    d = initial_device(TransmonParams(14.0, 0.2, 1 / 70), FluxLine(0.1, 0.0), BathPrior(density_per_mhz=0.0), 0)
    pert = CyclePerturbation(sigma_f01=8.0, flux_offset_dist=0.12)
    shifts, offsets = [], []
    for i in range(1000):
        d2 = apply_thermal_cycle(d, pert, i)
        shifts.append((f01_max(d2.params) - f01_max(d.params)) * 1e3)
        offsets.append(d2.flux_line.flux_offset)
        assert d2.params.gamma0 == d.params.gamma0
        assert d2.params.ec == d.params.ec
    assert np.mean(np.abs(shifts) <= 20.0) >= 0.95
    assert np.max(np.abs(offsets)) <= 0.12


def test_disabled_cycle_keeps_everything_but_the_index():
    d = initial_device(TransmonParams(14.0, 0.2, 1 / 70), FluxLine(0.1, 0.0, 0.03), BathPrior(), 2)
    d = advance_bath(d, 5.0, 0)
    d2 = apply_thermal_cycle(d, CyclePerturbation.disabled(), 7)
    assert d2.params == d.params and d2.flux_line == d.flux_line and d2.bath == d.bath
    assert d2.clock == d.clock and d2.cycle_index == d.cycle_index + 1
