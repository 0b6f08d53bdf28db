"""Analog-layer tests: waveforms, synthesis, filtering, discrimination."""

import math

import numpy as np
import pytest

from sinegate.signal_chain import (
    AvalanchePulseShape,
    DiscriminatorConfig,
    FilterResponseSpec,
    SampledWaveform,
    apply_filter,
    discriminate,
    lowpass_design,
    measured_filter_response,
    power_spectrum,
    synthesize_avalanche,
    synthesize_feedthrough,
    synthesize_gate_train,
    verify_filter_contract,
)

GATE_FREQ = 1.25e9
DT = 25e-12


def test_waveform_basics():
    w = SampledWaveform(np.arange(4, dtype=float), 1e-9, t0=2e-9)
    assert w.n == 4
    assert w.sample_rate == pytest.approx(1e9)
    assert w.duration == pytest.approx(4e-9)
    assert np.allclose(w.times, 2e-9 + 1e-9 * np.arange(4))


def test_waveform_rejects_bad_samples():
    with pytest.raises(ValueError):
        SampledWaveform(np.array([]), 1e-9)
    with pytest.raises(ValueError):
        SampledWaveform(np.array([[1.0, 2.0]]), 1e-9)
    with pytest.raises(ValueError):
        SampledWaveform(np.array([np.nan]), 1e-9)
    with pytest.raises(ValueError):
        SampledWaveform(np.ones(4), 0.0)


def test_waveform_arithmetic_and_grid_check():
    a = SampledWaveform(np.ones(8), DT)
    b = SampledWaveform(2.0 * np.ones(8), DT)
    assert np.allclose((a + b).samples, 3.0)
    assert np.allclose((b - a).samples, 1.0)
    assert np.allclose((a * 2.5).samples, 2.5)
    c = SampledWaveform(np.ones(9), DT)
    with pytest.raises(ValueError):
        a + c
    d = SampledWaveform(np.ones(8), DT, t0=1e-9)
    with pytest.raises(ValueError):
        a + d


def test_waveform_csv_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    w = SampledWaveform(rng.normal(size=64), DT, t0=3.5e-10)
    path = tmp_path / "w.csv"
    w.to_csv(path)
    back = SampledWaveform.from_csv(path)
    assert back.dt == w.dt
    assert back.t0 == w.t0
    assert np.array_equal(back.samples, w.samples)


def test_gate_train_amplitude_and_frequency():
    g = synthesize_gate_train(GATE_FREQ, 8.0, 64e-9, dt=DT)
    assert g.samples.max() == pytest.approx(4.0, rel=1e-6)
    assert g.samples.min() == pytest.approx(-4.0, rel=1e-6)
    spectrum = np.abs(np.fft.rfft(g.samples))
    k = int(np.argmax(spectrum[1:])) + 1
    assert k / (g.n * g.dt) == pytest.approx(GATE_FREQ, rel=1e-3)


def test_gate_train_delay_periodicity():
    period = 1.0 / GATE_FREQ
    g0 = synthesize_gate_train(GATE_FREQ, 8.0, 16e-9, dt=DT)
    g1 = synthesize_gate_train(GATE_FREQ, 8.0, 16e-9, dt=DT, delay=period)
    assert np.allclose(g0.samples, g1.samples, atol=1e-9)


def test_gate_train_zero_amplitude_is_silent():
    g = synthesize_gate_train(GATE_FREQ, 0.0, 16e-9, dt=DT)
    assert np.all(g.samples == 0.0)


def test_gate_train_rejects_bad_inputs():
    with pytest.raises(ValueError):
        synthesize_gate_train(GATE_FREQ, -1.0, 16e-9)
    with pytest.raises(ValueError):
        synthesize_gate_train(GATE_FREQ, 8.0, 16e-9, dt=1e-9)  # undersampled
    with pytest.raises(ValueError):
        synthesize_gate_train(GATE_FREQ, 8.0, 0.5 / GATE_FREQ)  # under one period


def test_feedthrough_is_quadrature_copy():
    g = synthesize_gate_train(GATE_FREQ, 8.0, 64e-9, dt=DT)
    ft = synthesize_feedthrough(g, coupling_gain=0.1)
    # unity gain at the gate tone: 8 Vpp * 0.1 -> 400 mV amplitude
    assert np.abs(ft.samples).max() == pytest.approx(0.4, rel=1e-6)
    # 90 degree phase shift: orthogonal to the input, same power
    dot = float(np.dot(g.samples, ft.samples)) / g.n
    assert abs(dot) < 1e-9
    rms_ratio = np.sqrt(np.mean(ft.samples**2) / np.mean(g.samples**2))
    assert rms_ratio == pytest.approx(0.1, rel=1e-6)


def test_feedthrough_silent_input_and_zero_gain():
    silent = SampledWaveform(np.zeros(256), DT)
    assert np.all(synthesize_feedthrough(silent, 0.1).samples == 0.0)
    g = synthesize_gate_train(GATE_FREQ, 8.0, 16e-9, dt=DT)
    assert np.all(synthesize_feedthrough(g, 0.0).samples == 0.0)


def test_avalanche_pulse_shape_defaults():
    s = AvalanchePulseShape()
    assert s.peak_amplitude == -32e-3
    assert s.fall_tau == pytest.approx(1.8e-9 / math.log(9.0))
    with pytest.raises(ValueError):
        AvalanchePulseShape(peak_amplitude=+32e-3)
    with pytest.raises(ValueError):
        AvalanchePulseShape(fall_time=0.0)


def test_avalanche_is_negative_and_localized():
    grid = synthesize_gate_train(GATE_FREQ, 8.0, 64e-9, dt=DT)
    rng = np.random.default_rng(7)
    for _ in range(20):
        t_ev = float(rng.uniform(5e-9, 55e-9))
        pulse = synthesize_avalanche(AvalanchePulseShape(), grid, t_ev, rng)
        assert pulse.n == grid.n and pulse.dt == grid.dt
        assert np.all(pulse.samples <= 0.0)
        k_min = int(np.argmin(pulse.samples))
        assert abs(pulse.times[k_min] - t_ev) <= 2 * DT
        assert np.all(pulse.samples[: max(0, k_min - 1)] == 0.0)  # silent before onset


def test_avalanche_deterministic_under_fixed_stream():
    grid = synthesize_gate_train(GATE_FREQ, 8.0, 16e-9, dt=DT)
    a = synthesize_avalanche(AvalanchePulseShape(), grid, 8e-9, np.random.default_rng(3))
    b = synthesize_avalanche(AvalanchePulseShape(), grid, 8e-9, np.random.default_rng(3))
    assert np.array_equal(a.samples, b.samples)


def test_avalanche_rejects_out_of_span_event():
    grid = synthesize_gate_train(GATE_FREQ, 8.0, 16e-9, dt=DT)
    with pytest.raises(ValueError):
        synthesize_avalanche(AvalanchePulseShape(), grid, 99e-9, np.random.default_rng(0))


def test_lowpass_design_meets_spec_analytically():
    spec = FilterResponseSpec()
    order, fc = lowpass_design(spec)
    assert order >= 1 and fc > 0

    def att_db(f):
        return 10.0 * math.log10(1.0 + (f / fc) ** (2 * order))

    assert att_db(spec.passband_edge) <= spec.passband_ripple_db + 1e-9
    assert att_db(spec.gate_frequency) >= spec.rejection_at_gate_db
    assert att_db(spec.gate_frequency - spec.rejection_band_halfwidth) >= spec.rejection_band_floor_db
    assert att_db(spec.gate_frequency) >= spec.rejection_to_4ghz_db


def test_apply_filter_cascade_is_exact():
    rng = np.random.default_rng(11)
    w = SampledWaveform(rng.normal(size=4096), DT)
    spec = FilterResponseSpec()
    two = apply_filter(w, spec, stages=2)
    twice = apply_filter(apply_filter(w, spec, stages=1), spec, stages=1)
    assert np.allclose(two.samples, twice.samples, atol=1e-15)


def test_apply_filter_is_linear():
    rng = np.random.default_rng(12)
    a = SampledWaveform(rng.normal(size=1024), DT)
    b = SampledWaveform(rng.normal(size=1024), DT)
    spec = FilterResponseSpec()
    lhs = apply_filter(a + b, spec, stages=2)
    rhs = apply_filter(a, spec, stages=2) + apply_filter(b, spec, stages=2)
    assert np.allclose(lhs.samples, rhs.samples, atol=1e-12)


def test_apply_filter_needs_adequate_sample_rate():
    w = SampledWaveform(np.ones(64), 1e-9)  # 1 GS/s cannot carry 1.25 GHz
    with pytest.raises(ValueError):
        apply_filter(w, FilterResponseSpec())


def test_measured_response_matches_design_formula():
    spec = FilterResponseSpec()
    order, fc = lowpass_design(spec)
    rows = measured_filter_response(spec, [100e6, 600e6, 1.25e9], n_samples=1 << 14)
    for f, gain_db in rows:
        expect = -10.0 * math.log10(1.0 + (f / fc) ** (2 * order))
        assert gain_db == pytest.approx(expect, abs=0.05)


def test_filter_contract_default_spec_passes():
    report = verify_filter_contract(FilterResponseSpec())
    assert report.ok
    assert report.gate_attenuation_db >= 54.0
    assert report.worst_band_attenuation_db >= 50.0
    assert report.worst_wideband_attenuation_db >= 40.0
    assert abs(report.worst_passband_gain_db) <= 1.0
    assert report.response.shape[1] == 2


def test_filter_contract_flags_impossible_spec():
    # demands 120 dB in a 100 MHz-wide notch next to a 1.2 GHz passband edge
    spec = FilterResponseSpec(
        passband_edge=1.15e9,
        rejection_at_gate_db=120.0,
        rejection_band_floor_db=120.0,
        rejection_band_halfwidth=50e6,
    )
    with pytest.raises(ValueError):
        lowpass_design(spec)


def test_power_spectrum_parseval_and_landmarks():
    rng = np.random.default_rng(13)
    w = SampledWaveform(rng.normal(size=2048), DT)
    freqs, power_db = power_spectrum(w)
    linear = 10.0 ** (power_db / 10.0)
    assert linear.sum() == pytest.approx(np.mean(w.samples**2), rel=1e-9)

    dc = SampledWaveform(np.ones(1024), DT)
    _, p = power_spectrum(dc)
    assert p[0] == pytest.approx(0.0, abs=1e-9)

    n = 4096
    sine = SampledWaveform(np.sin(2 * np.pi * 8 * np.arange(n) / n), DT)
    _, p = power_spectrum(sine)
    assert p.max() == pytest.approx(10 * math.log10(0.5), abs=1e-6)


def test_discriminate_interpolates_crossing():
    # 1 V/ns falling ramp through -4 mV: crossing at t = 4 ps exactly
    samples = np.array([1e-3, -9e-3])
    w = SampledWaveform(samples, 10e-12)
    t = discriminate(w, DiscriminatorConfig(threshold=-4e-3))
    assert t.size == 1
    assert t[0] == pytest.approx(5e-12, abs=1e-15)


def test_discriminate_polarity_and_t0():
    w = SampledWaveform(np.array([0.0, 10e-3, 0.0]), 1e-9, t0=5e-9)
    up = discriminate(w, DiscriminatorConfig(threshold=5e-3, polarity="positive-going"))
    assert up.size == 1
    assert 5e-9 <= up[0] <= 6e-9
    shifted = discriminate(
        SampledWaveform(w.samples, w.dt, t0=0.0),
        DiscriminatorConfig(threshold=5e-3, polarity="positive-going"),
    )
    assert up[0] - shifted[0] == pytest.approx(5e-9)


def test_discriminate_refractory_swallows_retriggers():
    pattern = np.array([0.0, -10e-3, 0.0, -10e-3, 0.0, -10e-3])
    w = SampledWaveform(np.tile(pattern, 4), 1e-9)
    free = discriminate(w, DiscriminatorConfig(threshold=-4e-3))
    gated = discriminate(w, DiscriminatorConfig(threshold=-4e-3, refractory_time=5e-9))
    assert free.size == 12
    assert gated.size < free.size
    assert np.all(np.diff(gated) > 5e-9)


def test_feedthrough_alone_stays_below_discriminator():
    g = synthesize_gate_train(GATE_FREQ, 8.0, 64e-9, dt=DT)
    ft = synthesize_feedthrough(g, 0.1)
    out = apply_filter(ft, FilterResponseSpec(), stages=2)
    # two stages knock 400 mV down by >100 dB: microvolt residue
    assert np.abs(out.samples).max() < 1e-5
    crossings = discriminate(out, DiscriminatorConfig(threshold=-4e-3))
    assert crossings.size == 0
