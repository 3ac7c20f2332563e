import io
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkdcoexist.channel import NoiseBudget
from qkdcoexist.detector import INGAAS_2017
from qkdcoexist.keyrate import (
    DecoyParams,
    InsufficientStatistics,
    IntensityTally,
    ObservedStats,
    binary_entropy,
    decoy_bounds,
    e1_upper_bound,
    evaluate,
    expected_gains,
    expected_stats,
    finite_size_adjust,
    operating_point,
    qber_from_qsnr,
    qsnr,
    qsnr_from_qber,
    rate_from_stats,
    report_from_stats,
    secure_key_rate,
    sweep_distance,
    sweep_power,
    true_single_photon,
    write_reports_csv,
    y1_lower_bound,
)
from qkdcoexist.scenario import build_scenario

P = DecoyParams()


def test_protocol_defaults():
    assert P.intensities == (0.6, 0.2, 0.0)
    assert P.probabilities == pytest.approx((0.75, 0.125, 0.125))
    assert (P.rep_rate, P.e_d, P.block_size, P.n_sigma, P.qber_cap) == (625e6, 0.007, 500_000, 7.0, 0.04)
    assert 1.2 <= P.f_ec <= 1.5


@pytest.mark.parametrize("kwargs", [{"nu": 0.7}, {"omega": 0.1}, {"f_ec": 2.5}, {"sift_factor": 0.0}])
def test_protocol_invariants(kwargs):
    with pytest.raises(ValueError):
        DecoyParams(**kwargs)


def test_binary_entropy_points():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.11) == pytest.approx(binary_entropy(0.89))


def test_qsnr_worked_example():
    noise = NoiseBudget(n_srs=24948, n_dark=1500, n_after=1818)
    assert qsnr(363636, noise, INGAAS_2017, P) == pytest.approx(11.0415946184, abs=1e-9)


def test_qsnr_unity_ratio():
    signal = 1e5 * (1 - 0.005 - 0.007)
    assert qsnr(1e5, NoiseBudget(n_dark=signal), INGAAS_2017, P) == pytest.approx(0.0, abs=1e-12)


def test_qsnr_zero_noise_sentinel():
    assert qsnr(1e5, NoiseBudget(), INGAAS_2017, P) == math.inf


@given(a=st.floats(1.0, 1e6), b=st.floats(1.0, 1e6))
def test_qsnr_decreases_with_noise(a, b):
    lo, hi = sorted((a, b))
    if hi > lo:
        assert qsnr(1e5, NoiseBudget(n_srs=hi), INGAAS_2017, P) < qsnr(1e5, NoiseBudget(n_srs=lo), INGAAS_2017, P)


def test_qber_from_qsnr_points():
    assert qber_from_qsnr(math.inf, P) == 0.007
    assert qber_from_qsnr(11.0, P) == pytest.approx(0.04327866517, abs=1e-10)
    assert qber_from_qsnr(0.0, P) == pytest.approx(0.2535)
    assert qber_from_qsnr(200.0, P) == pytest.approx(0.007)


@given(a=st.floats(-30, 80), b=st.floats(-30, 80))
def test_qber_strictly_decreasing(a, b):
    lo, hi = sorted((a, b))
    if hi - lo > 1e-6:
        assert qber_from_qsnr(hi, P) < qber_from_qsnr(lo, P)


@given(q=st.floats(0.0071, 0.499))
def test_qsnr_qber_inverse(q):
    assert qber_from_qsnr(qsnr_from_qber(q, P), P) == pytest.approx(q, rel=1e-9)


def test_decoy_bounds_lossless_toy():
    gains = [-math.expm1(-x) for x in P.intensities]
    b = decoy_bounds(gains, (0.0, 0.0), P)
    assert b.y1_lower <= 1.0
    assert b.y1_lower == pytest.approx(0.97542168588, rel=1e-10)
    assert b.e1_upper == 0.0


def test_vacuum_bookkeeping():
    y0 = 1e-5
    q_nu, e_nu = 0.01, 0.02
    y1 = y1_lower_bound(0.03, q_nu, y0, P)
    expected = (e_nu * q_nu * math.exp(0.2) - 0.5 * y0) / (y1 * 0.2)
    assert e1_upper_bound(e_nu, q_nu, y0, y1, P) == pytest.approx(expected)


def test_decoy_bounds_reject_out_of_range():
    with pytest.raises(ValueError):
        decoy_bounds((1.2, 0.1, 0.0), (0.0, 0.0), P)


def test_uncertified_yield_gives_e1_one():
    assert e1_upper_bound(0.01, 0.01, 0.0, 0.0, P) == 1.0


@settings(max_examples=300)
@given(t=st.floats(1e-5, 0.5), y0=st.floats(0.0, 1e-3))
def test_bounds_sound_at_exact_expectations(t, y0):
    gains, err = expected_gains(t, y0, P)
    e_rates = [e / q if q > 0 else 0.5 for e, q in zip(err, gains)]
    b = decoy_bounds(gains, e_rates[:2], P)
    y1, e1 = true_single_photon(t, y0, P)
    assert b.y1_lower <= y1 * (1 + 1e-9)
    assert b.e1_upper >= e1 * (1 - 1e-9)


def test_key_rate_killed_by_half_error():
    assert secure_key_rate(0.01, 0.02, 0.01, 0.5, P) == 0.0


@given(a=st.floats(0.0, 0.5), b=st.floats(0.0, 0.5))
def test_key_rate_nonincreasing_in_e1(a, b):
    lo, hi = sorted((a, b))
    assert secure_key_rate(0.01, 0.01, 0.01, hi, P) <= secure_key_rate(0.01, 0.01, 0.01, lo, P)


def test_key_rate_lossless_golden():
    gains = [-math.expm1(-x) for x in P.intensities]
    b = decoy_bounds(gains, (0.0, 0.0), P)
    assert secure_key_rate(gains[0], 0.0, b.y1_lower, 0.0, P) == pytest.approx(75279764.7150635, rel=1e-10)


def test_finite_size_identity_at_zero_sigma():
    stats = expected_stats(1e-3, 1e-6, P)
    adj = finite_size_adjust(stats, replace(P, n_sigma=0.0))
    assert adj.q_nu_lower == adj.q_nu_upper == pytest.approx(stats.decoy.gain)
    assert adj.y0_lower == adj.y0_upper


def test_finite_size_worked_example():
    tally = IntensityTally(5e5, 5e3, 2.5e3, 25)
    stats = ObservedStats(tally, tally, tally)
    adj = finite_size_adjust(stats, replace(P, block_size=1))
    assert adj.q_nu_lower == pytest.approx(0.00901501269, rel=1e-9)


def test_finite_size_large_n_converges():
    stats = expected_stats(1e-3, 1e-6, P, sifted_bits=1e14)
    adj = finite_size_adjust(stats, P)
    assert adj.q_nu_lower == pytest.approx(stats.decoy.gain, rel=1e-4)


def test_insufficient_statistics():
    stats = expected_stats(1e-3, 1e-6, P, sifted_bits=1000)
    with pytest.raises(InsufficientStatistics):
        finite_size_adjust(stats, P)


def test_report_feasibility_consistency():
    for power in (8.0, 19.0, 21.0):
        for name, direction in (("G652-1", "co"), ("G652-2", "counter")):
            r = evaluate(build_scenario(name, direction, power))
            assert r.feasible == (r.rate > 0 and r.qber <= P.qber_cap)
            assert r.rate >= 0
            assert 0 <= r.e1_upper <= 1


def test_g652_counter_collapse():
    r19 = evaluate(build_scenario("G652-2", "counter", 19.0))
    r18 = evaluate(build_scenario("G652-2", "counter", 18.0))
    assert not r19.feasible
    assert r18.feasible


def test_sweep_power_empty_and_order():
    s = build_scenario("G652-1", "co", 21.0)
    assert sweep_power(s, []) == []
    reps = sweep_power(s, [8.0, 14.0, 21.0])
    rates = [r.rate for r in reps]
    assert rates == sorted(rates, reverse=True)


def test_parallel_sweep_matches_serial():
    s = build_scenario("G654-110-2", "counter", 21.0)
    lengths = [10.0, 40.0, 66.0, 90.0]
    serial = sweep_distance(s, lengths)
    parallel = sweep_distance(s, lengths, workers=2)
    assert [r.rate for r in serial] == [r.rate for r in parallel]


def test_distance_sweep_boundary_is_maximum():
    s = build_scenario("G654-110-2", "co", 21.0)
    reps = sweep_distance(s, [0.0, 20.0, 50.0, 80.0])
    rates = [r.rate for r in reps]
    assert rates[0] == max(rates)


def test_noise_terms_in_slot():
    op = operating_point(build_scenario("G652-1", "co", 21.0))
    # half of the 1.25 GHz detection windows carry a 625 MHz pulse slot
    assert op.noise.n_dark == pytest.approx(750.0)
    assert op.noise.n_crosstalk == pytest.approx(30.0)
    assert op.y0 == pytest.approx(op.noise.total / P.rep_rate)


def test_dark_baseline_has_no_traffic_noise():
    s = build_scenario("G652-1", launch_power=None)
    op = operating_point(s)
    assert op.noise.n_srs == 0.0 and op.noise.n_crosstalk == 0.0
    assert evaluate(s).feasible


def test_report_from_stats_matches_analytic():
    s = build_scenario("G652-1", "co", 21.0)
    op = operating_point(s)
    stats = expected_stats(op.transmittance, op.y0, P)
    r = report_from_stats(stats, P)
    assert r.rate == pytest.approx(rate_from_stats(stats, P)[0])
    assert r.qber == pytest.approx(stats.errors / stats.sifted)


def test_csv_columns_and_stability():
    s = build_scenario("G654-110-1", "co", 21.0)
    buf1, buf2 = io.StringIO(), io.StringIO()
    write_reports_csv(sweep_power(s, [10.0, 21.0]), buf1)
    write_reports_csv(sweep_power(s, [10.0, 21.0]), buf2)
    text = buf1.getvalue()
    assert text == buf2.getvalue()
    header = text.splitlines()[0].split(",")
    assert header[-6:] == ["qsnr_db", "qber", "y1_lower", "e1_upper", "rate_bps", "feasible"]
    assert header[0] == "scenario"


def test_empty_csv_has_header():
    buf = io.StringIO()
    write_reports_csv([], buf)
    assert buf.getvalue().startswith("qsnr_db,")


def test_monte_carlo_bounds_soundness(rng):
    from qkdcoexist.protocol_sim import sample_stats
    violations = 0
    for _ in range(200):
        t = 10 ** rng.uniform(-4, -2)
        y0 = 10 ** rng.uniform(-7, -5)
        stats, _ = sample_stats(t, y0, P, rng)
        _, bounds, _ = rate_from_stats(stats, P)
        y1, e1 = true_single_photon(t, y0, P)
        violations += bounds.y1_lower > y1 or bounds.e1_upper < e1
    assert violations == 0
