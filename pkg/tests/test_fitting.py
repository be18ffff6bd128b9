import numpy as np
import pytest
from hypothesis import given, strategies as st

from stabilitylab.errors import ConvergenceFailure, InsufficientPoints, NonPositiveT1
from stabilitylab.fitting import arch_model, fit_arch, fit_t1, fit_t1_batch
from stabilitylab.measurement import ArchScan, ReadoutModel, decay_probability, simulate_arch_scan, simulate_t1_trace
from stabilitylab.model import DeviceState, FluxLine, TlsBath, TransmonParams, f01_max

F01MAX_14_02 = 4.532863826479693
DELAYS = np.geomspace(0.5, 300, 41)


def arch_scan(ej, ec, sweet_bias, mutual=0.1, sigma=0.0, seed=0, n=41, half_span=0.3):
    line = FluxLine(mutual, sweet_bias)
    d = DeviceState(TransmonParams(ej, ec, 0.01), line, TlsBath.empty())
    bias = np.linspace(sweet_bias - half_span / mutual, sweet_bias + half_span / mutual, n) + 0.37
    return simulate_arch_scan(d, bias, sigma, seed)


def test_arch_round_trip_example():
    fit = fit_arch(arch_scan(14.0, 0.2, 1.2))
    assert fit.bias_at_max == pytest.approx(1.2, rel=1e-6)
    assert fit.f01_max == pytest.approx(F01MAX_14_02, rel=1e-6)
    assert fit.ej == pytest.approx(14.0, rel=1e-6)
    assert fit.residual_rms < 1e-6


@given(st.floats(10.0, 18.0), st.floats(0.18, 0.3), st.floats(-3.0, 3.0), st.floats(0.05, 0.2))
def test_arch_round_trip_property(ej, ec, b0, mutual):
    fit = fit_arch(arch_scan(ej, ec, b0, mutual))
    truth = f01_max(TransmonParams(ej, ec, 0.01))
    assert fit.f01_max == pytest.approx(truth, rel=1e-6)
    assert fit.bias_at_max == pytest.approx(b0, rel=1e-6, abs=1e-9)
    assert fit.ec == pytest.approx(ec, rel=1e-6)


def test_arch_fit_rejects_short_scans():
    with pytest.raises(InsufficientPoints):
        fit_arch(arch_scan(14.0, 0.2, 0.0, n=3))
    with pytest.raises(InsufficientPoints):
        fit_arch(ArchScan(np.linspace(0, 0.5, 10), np.full(10, 4.5), 1.0, 0.1))


def test_arch_fit_noise_scale():
    errs = []
    for i in range(100):
        fit = fit_arch(arch_scan(14.0, 0.2, 0.3, sigma=1.0, seed=i))
        errs.append(abs(fit.f01_max / F01MAX_14_02 - 1))
    assert np.quantile(errs, 0.99) <= 0.005


def test_arch_model_matches_device_curve():
    b = np.linspace(-1, 1, 9)
    f = arch_model(b, 4.5, 0.2, 0.2, 0.1)
    assert f[np.argmin(abs(b - 0.2))] <= 4.5


def test_t1_round_trip_exact():
    p = decay_probability(DELAYS, 30.0, 1.0, 0.0)[:, 0]
    fit = fit_t1(DELAYS, p)
    assert fit.t1 == pytest.approx(30.0, rel=1e-9)
    t1, contrast, floor = fit
    assert contrast == pytest.approx(1.0, rel=1e-9) and abs(floor) < 1e-9


@given(st.floats(2.0, 150.0), st.floats(0.3, 0.9), st.floats(0.0, 0.1))
def test_t1_round_trip_property(t1, contrast, floor):
    p = decay_probability(DELAYS, t1, contrast, floor)[:, 0]
    assert fit_t1(DELAYS, p).t1 == pytest.approx(t1, rel=1e-9)
    assert fit_t1_batch(DELAYS, p[None])[0] == pytest.approx(t1, rel=1e-9)


def test_t1_degenerate_traces():
    with pytest.raises((ConvergenceFailure, NonPositiveT1)):
        fit_t1(DELAYS, np.ones_like(DELAYS))
    with pytest.raises((ConvergenceFailure, NonPositiveT1)):
        fit_t1(DELAYS, 0.1 + 0.001 * DELAYS)
    with pytest.raises(InsufficientPoints):
        fit_t1(DELAYS[:3], np.ones(3))
    assert np.isnan(fit_t1_batch(DELAYS, np.ones((1, DELAYS.size)))[0])


def test_t1_shot_noise_recovery():
    d = DeviceState(TransmonParams(14.0, 0.2, 1 / 40), FluxLine(0.1, 0.0), TlsBath.empty())
    ro = ReadoutModel(shots=2000, contrast=0.9, floor=0.05)
    traces = np.array([simulate_t1_trace(d, 4.3, DELAYS, ro, i) for i in range(200)])
    t1 = fit_t1_batch(DELAYS, traces)
    assert np.mean(np.abs(t1 / 40.0 - 1) <= 0.05) >= 0.95


def test_batch_matches_scipy_on_noisy_traces():
    d = DeviceState(TransmonParams(14.0, 0.2, 1 / 55), FluxLine(0.1, 0.0), TlsBath.empty())
    ro = ReadoutModel(shots=500)
    traces = np.array([simulate_t1_trace(d, 4.3, DELAYS, ro, i) for i in range(20)])
    batch = fit_t1_batch(DELAYS, traces)
    single = np.array([fit_t1(DELAYS, tr).t1 for tr in traces])
    np.testing.assert_allclose(batch, single, rtol=1e-6)
