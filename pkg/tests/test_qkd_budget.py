"""Link-budget tests: analytic composition, sweeps, Monte Carlo consistency."""

import math

import numpy as np
import pytest

from sinegate.detector_model import DetectorParams, JitterModel
from sinegate.qkd_budget import (
    QkdLinkConfig,
    QkdReport,
    binary_entropy,
    evaluate,
    fiber_db_to_length,
    fiber_length_to_db,
    mc_link_run,
    mu_at_detector,
    qber,
    rate_after_ec,
    raw_detection_rate,
    secret_rate_estimate,
    stability_run,
    sweep,
)


def test_binary_entropy_landmarks():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == pytest.approx(1.0)
    assert binary_entropy(0.25) == binary_entropy(0.75)
    # frozen oracle: h2(0.016) computed independently
    assert binary_entropy(0.016) == pytest.approx(0.11835001140827503, rel=1e-12)
    with pytest.raises(ValueError):
        binary_entropy(-0.01)
    with pytest.raises(ValueError):
        binary_entropy(1.01)


def test_fiber_conversion_round_trip():
    for db in np.arange(0.0, 16.5, 0.5):
        assert fiber_length_to_db(fiber_db_to_length(db)) == db
    assert fiber_db_to_length(1.0) == pytest.approx(5.0)
    assert fiber_length_to_db(50.0) == pytest.approx(10.0)


def test_mu_at_detector_follows_loss():
    cfg = QkdLinkConfig(mu_source=1.0)
    assert mu_at_detector(cfg) == 1.0
    assert mu_at_detector(QkdLinkConfig(mu_source=1.0, fiber_loss_db=10.0)) == pytest.approx(0.1)
    assert mu_at_detector(QkdLinkConfig(mu_source=1.0, fiber_loss_db=3.0)) == pytest.approx(
        10 ** -0.3
    )


def test_holdoff_gates_rounding():
    assert QkdLinkConfig().holdoff_gates == 10  # 8 ns * 1.25 GHz
    assert QkdLinkConfig(holdoff_time=0.0).holdoff_gates == 0


def test_config_validation():
    with pytest.raises(ValueError):
        QkdLinkConfig(mu_source=-0.1)
    with pytest.raises(ValueError):
        QkdLinkConfig(timebin_width=900e-12)  # over half the 1.6 ns bit period
    with pytest.raises(ValueError):
        QkdLinkConfig(bit_rate=500e6)  # 2.5 gates per bit
    with pytest.raises(ValueError):
        QkdLinkConfig(dead_time_model="elastic")
    with pytest.raises(ValueError):
        QkdLinkConfig(qber_floor=0.5)
    with pytest.raises(ValueError):
        QkdLinkConfig(ec_efficiency=0.9)


def test_raw_rate_small_signal_limit():
    # with a tiny mu the dead-time correction is negligible: R ~ R0
    cfg = QkdLinkConfig(mu_source=1e-6, detector=DetectorParams(dark_law=None))
    r0 = 625e6 * (1.0 - math.exp(-0.1 * 1e-6))
    assert raw_detection_rate(cfg) == pytest.approx(r0, rel=1e-4)


def test_raw_rate_nonparalyzable_formula():
    cfg = QkdLinkConfig(mu_source=1.0, detector=DetectorParams(dark_law=None))
    p = 1.0 - math.exp(-0.1)
    r0 = 625e6 * p
    assert raw_detection_rate(cfg) == pytest.approx(r0 / (1.0 + r0 * 8e-9), rel=1e-12)


def test_raw_rate_paralyzable_formula():
    cfg = QkdLinkConfig(
        mu_source=1.0, detector=DetectorParams(dark_law=None), dead_time_model="paralyzable"
    )
    p = 1.0 - math.exp(-0.1)
    r0 = 625e6 * p
    assert raw_detection_rate(cfg) == pytest.approx(r0 * math.exp(-r0 * 8e-9), rel=1e-12)


def test_qber_extinction_only_limit():
    # dark off, tail off: the only error source is the extinction leak
    det = DetectorParams(dark_law=None, jitter=JitterModel(tail_fraction=0.0))
    cfg = QkdLinkConfig(mu_source=0.1, detector=det)
    q = qber(cfg)
    eps = 10 ** -2.5
    assert q["total"] == pytest.approx(eps / (1 + eps), rel=1e-12)
    assert q["dark"] == 0.0
    assert q["timing_tail"] == 0.0
    # and it does not depend on mu
    q2 = qber(QkdLinkConfig(mu_source=2.0, detector=det))
    assert q2["extinction"] == pytest.approx(q["extinction"], rel=1e-12)


def test_qber_dark_dominated_limit():
    det = DetectorParams(temperature_c=20.0, jitter=JitterModel(tail_fraction=0.0))
    cfg = QkdLinkConfig(mu_source=1e-9, detector=det, extinction_db=200.0)
    q = qber(cfg)
    assert q["total"] == pytest.approx(0.5, rel=1e-3)  # all-dark detections guess the bin


def test_qber_tail_weight():
    # tail weight is 1/2 + 1/(4*span): 7/12 for the default 3-gate span
    det = DetectorParams(dark_law=None)
    cfg = QkdLinkConfig(mu_source=0.1, detector=det, extinction_db=500.0)
    q = qber(cfg)
    assert q["timing_tail"] == pytest.approx(0.024 * (7.0 / 12.0), rel=1e-9)


def test_qber_floor_rescales_components():
    cfg = QkdLinkConfig(mu_source=0.001, qber_floor=0.016)
    q = qber(cfg)
    p_sig_share = q["extinction"] + q["timing_tail"]
    # floor applies to the signal-detection share of the denominator
    assert q["total"] == pytest.approx(q["dark"] + p_sig_share, rel=1e-12)
    no_floor = qber(QkdLinkConfig(mu_source=0.001))
    ratio_floor = q["extinction"] / q["timing_tail"]
    ratio_model = no_floor["extinction"] / no_floor["timing_tail"]
    assert ratio_floor == pytest.approx(ratio_model, rel=1e-9)
    assert q["dark"] == pytest.approx(no_floor["dark"], rel=1e-12)


def test_qber_zero_denominator():
    det = DetectorParams(dark_law=None)
    q = qber(QkdLinkConfig(mu_source=0.0, detector=det))
    assert q == {"total": 0.0, "dark": 0.0, "extinction": 0.0, "timing_tail": 0.0}


def test_rate_after_ec_endpoints():
    assert rate_after_ec(1e6, 0.0, 1.2) == 1e6
    assert rate_after_ec(1e6, 0.5, 1.2) == 0.0  # 1 - 1.2*h2(0.5) < 0, clamped
    assert rate_after_ec(1e6, 0.02, 1.2) == pytest.approx(
        1e6 * (1 - 1.2 * binary_entropy(0.02))
    )
    with pytest.raises(ValueError):
        rate_after_ec(1e6, 0.6, 1.2)
    with pytest.raises(ValueError):
        rate_after_ec(-1.0, 0.1, 1.2)


def test_secret_rate_accepts_report_or_float():
    cfg = QkdLinkConfig()
    report = evaluate(cfg)
    assert secret_rate_estimate(cfg, report) == pytest.approx(report.rate_after_ec * 0.5)
    assert secret_rate_estimate(cfg, 2e6) == pytest.approx(1e6)


def test_report_component_sum_enforced():
    with pytest.raises(ValueError):
        QkdReport(
            mu_detector=0.1, raw_rate=1e6, qber_total=0.05, qber_dark=0.01,
            qber_extinction=0.01, qber_timing_tail=0.01,  # sums to 0.03, not 0.05
            rate_after_ec=1e5, secret_rate=5e4,
        )


def test_evaluate_report_contents():
    report = evaluate(QkdLinkConfig())
    assert report.qber_total == pytest.approx(
        report.qber_dark + report.qber_extinction + report.qber_timing_tail
    )
    assert 0 < report.secret_rate < report.rate_after_ec < report.raw_rate
    assert report.notes["dead_time_model"] == "nonparalyzable"
    assert report.notes["extinction_qber_alternate"] == 0.002
    assert "not a security-proof bound" in report.notes["secret_rate_method"]
    doc = report.to_json_dict()
    assert set(doc) == {
        "mu_detector", "raw_rate_hz", "qber", "qber_dark", "qber_ext",
        "qber_tail", "rate_after_ec_hz", "secret_rate_hz", "notes",
    }


def test_secret_rate_monotone_in_loss():
    grid = np.arange(0.0, 16.5, 0.5)
    reports = sweep(QkdLinkConfig(), "fiber_loss_db", grid)
    secret = [r.secret_rate for r in reports]
    for a, b in zip(secret, secret[1:]):
        assert b < a or (a == 0.0 and b == 0.0)
    qbers = [r.qber_total for r in reports]
    assert all(b >= a for a, b in zip(qbers, qbers[1:]))


def test_sweep_axes_and_errors():
    cfg = QkdLinkConfig()
    by_temp = sweep(cfg, "temperature", [-43.0, 20.0])
    assert by_temp[1].qber_dark > by_temp[0].qber_dark
    by_mu = sweep(cfg, "mu_source", [0.1, 0.2])
    assert by_mu[1].raw_rate > by_mu[0].raw_rate
    by_bias = sweep(cfg, "bias", [53.5, 54.5])
    assert by_bias[1].raw_rate > by_bias[0].raw_rate
    with pytest.raises(ValueError):
        sweep(cfg, "fiber_loss_db", [])
    with pytest.raises(ValueError):
        sweep(cfg, "wavelength", [1.55])


def test_mc_link_run_matches_analytics_within_3_sigma():
    # mu at the detector ~0.1: the discrete-gate renewal bias (~0.2 %) is
    # well inside the statistical band at 1e7 bits
    cfg = QkdLinkConfig(mu_source=0.1)
    mc = mc_link_run(cfg, 10_000_000, master_seed=404)
    n = mc["accepted_total"]
    p_hat = n / mc["n_bits"]
    p_ana = mc["analytic_raw_rate_hz"] / cfg.bit_rate
    sigma_p = math.sqrt(p_ana * (1 - p_ana) / mc["n_bits"])
    assert abs(p_hat - p_ana) < 3 * sigma_p

    q_hat = mc["qber"]
    q_ana = mc["analytic_qber"]
    sigma_q = math.sqrt(q_ana * (1 - q_ana) / mc["accepted_in_windows"])
    assert abs(q_hat - q_ana) < 3 * sigma_q


def test_mc_link_run_deterministic_and_parallel_safe():
    cfg = QkdLinkConfig(mu_source=0.3)
    a = mc_link_run(cfg, 300_000, master_seed=11)
    b = mc_link_run(cfg, 300_000, master_seed=11, workers=2)
    assert a == b


def test_mc_link_run_counters_add_up():
    cfg = QkdLinkConfig(mu_source=0.3)
    mc = mc_link_run(cfg, 200_000, master_seed=3)
    assert mc["accepted_in_windows"] + mc["discarded_outside_windows"] == mc["accepted_total"]
    assert 0 <= mc["wrong_bin"] <= mc["accepted_in_windows"]
    assert mc["duration_s"] == pytest.approx(200_000 / 625e6)


def test_stability_run_segments():
    cfg = QkdLinkConfig(mu_source=0.3)
    segments = stability_run(cfg, 5, 100_000, master_seed=77)
    assert [s["segment_index"] for s in segments] == [0, 1, 2, 3, 4]
    counts = [s["accepted_total"] for s in segments]
    assert len(set(counts)) > 1  # segments are independent draws
    again = stability_run(cfg, 5, 100_000, master_seed=77)
    assert segments == again
    # Poisson-level scatter around the mean
    mean = np.mean(counts)
    assert np.abs(np.asarray(counts) - mean).max() < 6 * math.sqrt(mean)
