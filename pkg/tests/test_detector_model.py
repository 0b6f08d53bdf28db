"""Device-law tests: gate profile, bias, dark counts, jitter, afterpulsing."""

import math

import numpy as np
import pytest

from sinegate.detector_model import (
    DEFAULT_DARK_TABLE,
    FWHM_TO_SIGMA,
    AfterpulseModel,
    BiasEfficiencyLaw,
    DetectorParams,
    GateConfig,
    JitterModel,
    ModelRangeError,
    TemperatureDarkLaw,
    afterpulse_prob,
    dark_prob,
    efficiency_at_bias,
    gate_profile,
    sample_detection_time,
    sample_detection_times,
)


def test_gate_profile_peak_and_fwhm():
    g = GateConfig()
    assert gate_profile(g, 0.0) == pytest.approx(0.10)
    assert gate_profile(g, g.gate_fwhm / 2) == pytest.approx(0.05)
    assert gate_profile(g, -g.gate_fwhm / 2) == pytest.approx(0.05)


def test_gate_profile_periodic_and_vectorized():
    g = GateConfig()
    period = g.gate_period
    assert period == pytest.approx(0.8e-9)
    delays = np.array([-0.3e-9, 0.0, 0.11e-9])
    a = gate_profile(g, delays)
    b = gate_profile(g, delays + 5 * period)
    assert np.allclose(a, b)
    assert isinstance(gate_profile(g, 0.0), float)


def test_gate_config_validation():
    with pytest.raises(ValueError):
        GateConfig(gate_fwhm=-5e-12)
    with pytest.raises(ValueError):
        GateConfig(peak_efficiency=1.5)
    with pytest.raises(ValueError):
        GateConfig(gate_frequency=0.0)


def test_bias_law_endpoints():
    law = BiasEfficiencyLaw()
    assert efficiency_at_bias(law, law.breakdown_bias) == 0.0
    assert efficiency_at_bias(law, law.breakdown_bias - 1.0) == 0.0
    assert efficiency_at_bias(law, law.anchor_bias) == pytest.approx(0.10)
    assert efficiency_at_bias(law, 54.5) == pytest.approx(0.15)
    assert efficiency_at_bias(law, 1e3) == 1.0  # clamped


def test_bias_law_validation():
    with pytest.raises(ValueError):
        BiasEfficiencyLaw(slope_per_volt=0.0)
    with pytest.raises(ValueError):
        BiasEfficiencyLaw(breakdown_bias=60.0)  # above the anchor


def test_dark_law_anchors_are_exact():
    law = TemperatureDarkLaw()
    assert dark_prob(law, -43.0) == 6e-7
    assert dark_prob(law, -35.0) == 7e-7
    assert dark_prob(law, 20.0) == 1.5e-5


def test_dark_law_monotone_above_minus_35():
    law = TemperatureDarkLaw()
    temps = np.linspace(-35.0, 20.0, 551)
    probs = np.array([dark_prob(law, t) for t in temps])
    assert np.all(np.diff(probs) >= 0.0)


def test_dark_law_log_linear_between_anchors():
    law = TemperatureDarkLaw()
    mid = dark_prob(law, -30.0)  # halfway between -35 (7e-7) and -25 (1.2e-6)
    assert mid == pytest.approx(math.sqrt(7e-7 * 1.2e-6), rel=1e-12)


def test_dark_law_range_errors():
    law = TemperatureDarkLaw()
    with pytest.raises(ModelRangeError):
        dark_prob(law, -45.1)
    with pytest.raises(ModelRangeError):
        dark_prob(law, 20.1)


def test_dark_law_table_validation():
    with pytest.raises(ValueError):
        TemperatureDarkLaw(table=((0.0, 1e-6),))  # single point is no law
    with pytest.raises(ValueError):
        TemperatureDarkLaw(table=((0.0, 1e-6), (0.0, 2e-6)))  # not increasing
    with pytest.raises(ValueError):
        TemperatureDarkLaw(table=((0.0, 0.0), (10.0, 1e-6)))  # p=0 breaks log interp


def test_jitter_sampling_statistics():
    j = JitterModel()
    rng = np.random.default_rng(42)
    period = 0.8e-9
    gates = np.zeros(200_000, dtype=np.int64)
    times, in_tail = sample_detection_times(j, gates, period, rng)
    frac = in_tail.mean()
    assert frac == pytest.approx(0.024, abs=0.0015)
    core = times[~in_tail]
    assert core.mean() == pytest.approx(0.0, abs=1e-12 + 5 * j.sigma / math.sqrt(core.size))
    assert core.std() == pytest.approx(j.sigma, rel=0.02)
    # tail detections sit on the next 1..3 gate centers
    tail = times[in_tail]
    offsets = np.round(tail / period).astype(int)
    assert set(offsets.tolist()) <= {1, 2, 3}
    assert np.all(np.abs(tail - offsets * period) < 8 * j.sigma)


def test_jitter_degenerate_sigma():
    j = JitterModel(sigma=0.0, tail_fraction=0.0)
    rng = np.random.default_rng(0)
    times, in_tail = sample_detection_times(j, np.arange(5, dtype=np.int64), 0.8e-9, rng)
    assert np.allclose(times, 0.8e-9 * np.arange(5))
    assert not in_tail.any()


def test_jitter_scalar_wrapper_matches_vector():
    j = JitterModel()
    t_vec, tail_vec = sample_detection_times(
        j, np.asarray([7], dtype=np.int64), 0.8e-9, np.random.default_rng(9)
    )
    t_s, tail_s = sample_detection_time(j, 7, 0.8e-9, np.random.default_rng(9))
    assert t_s == t_vec[0]
    assert tail_s == bool(tail_vec[0])


def test_jitter_validation():
    with pytest.raises(ValueError):
        JitterModel(sigma=-1e-12)
    with pytest.raises(ValueError):
        JitterModel(tail_fraction=1.0)
    with pytest.raises(ValueError):
        JitterModel(tail_span_gates=0)


def test_fwhm_sigma_conversion():
    assert 70e-12 * FWHM_TO_SIGMA == pytest.approx(70e-12 / 2.3548, rel=1e-4)
    assert JitterModel().fwhm == pytest.approx(70e-12)


def test_afterpulse_prob_decay_and_clamp():
    m = AfterpulseModel(trap_fill_per_detection=0.5, release_lifetime=100e-9,
                        trigger_prob_per_gate=0.02)
    p0 = afterpulse_prob(m, 1.0, 0.0)
    assert p0 == pytest.approx(0.02)
    p1 = afterpulse_prob(m, 1.0, 100e-9)
    assert p1 == pytest.approx(0.02 / math.e)
    assert afterpulse_prob(m, 0.0, 0.0) == 0.0
    assert afterpulse_prob(m, 1e9, 0.0) == 1.0  # clamped
    with pytest.raises(ValueError):
        afterpulse_prob(m, -1.0, 0.0)


def test_afterpulse_disabled_by_default():
    assert AfterpulseModel().enabled is False


def test_effective_efficiency_follows_bias_and_delay():
    d = DetectorParams()
    assert d.effective_efficiency(0.0) == pytest.approx(0.10)
    d_hi = DetectorParams(bias=54.5)
    assert d_hi.effective_efficiency(0.0) == pytest.approx(0.15)
    # off-peak delay scales the whole profile
    half = d.gate.gate_fwhm / 2
    assert d_hi.effective_efficiency(half) == pytest.approx(0.075)


def test_dark_prob_per_gate_and_none_law():
    assert DetectorParams().dark_prob_per_gate() == 6e-7
    assert DetectorParams(dark_law=None).dark_prob_per_gate() == 0.0


def test_params_json_round_trip():
    d = DetectorParams(
        gate=GateConfig(gate_fwhm=120e-12),
        bias_law=BiasEfficiencyLaw(anchor_efficiency=0.12),
        jitter=JitterModel(tail_fraction=0.01),
        afterpulse=AfterpulseModel(enabled=True, release_lifetime=200e-9),
        bias=54.0,
        temperature_c=-35.0,
    )
    back = DetectorParams.from_json_dict(d.to_json_dict())
    assert back == d


def test_params_json_round_trip_without_dark_law(tmp_path):
    d = DetectorParams(dark_law=None)
    assert DetectorParams.from_json_dict(d.to_json_dict()) == d
    path = tmp_path / "det.json"
    d.save_json(path)
    assert DetectorParams.load_json(path) == d


def test_params_file_round_trip(tmp_path):
    d = DetectorParams(temperature_c=20.0)
    path = tmp_path / "det.json"
    d.save_json(path)
    assert DetectorParams.load_json(path) == d
