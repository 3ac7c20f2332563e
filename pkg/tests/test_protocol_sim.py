import math
from dataclasses import replace

import numpy as np
import pytest

from qkdcoexist.channel import ClassicalTrafficSpec, NoiseBudget, srs_rate_paper
from qkdcoexist.detector import INGAAS_2017
from qkdcoexist.keyrate import DecoyParams, evaluate, operating_point, rate_from_stats
from qkdcoexist.presets import FILTER_PRESETS, fiber_preset
from qkdcoexist.protocol_sim import (
    CAUSE_AFTERPULSE,
    CAUSE_DARK,
    CAUSE_SIGNAL,
    CAUSE_SRS,
    bernoulli_positions,
    emit_pulses,
    photon_number_truth,
    sample_stats,
    sift,
    simulate_block,
    transmit_detect,
)
from qkdcoexist.scenario import build_scenario

P = DecoyParams()
NO_DEAD = replace(INGAAS_2017, dead_time=0.0, afterpulse_prob=0.0)


def test_emission_ratio():
    n = 8_000_000
    pulses = emit_pulses(n, P, 1)
    frac = np.count_nonzero(pulses.intensity_class == 0) / n
    sigma = math.sqrt(0.75 * 0.25 / n)
    assert abs(frac - 0.75) < 5 * sigma


def test_single_pulse_and_determinism():
    assert len(emit_pulses(1, P, 0)) == 1
    a, b = emit_pulses(1000, P, 7), emit_pulses(1000, P, 7)
    assert np.array_equal(a.basis, b.basis) and np.array_equal(a.bit, b.bit)
    assert np.array_equal(a.intensity_class, b.intensity_class)
    rec = a[3]
    assert rec.index == 3 and rec.intensity_class in (0, 1, 2)
    with pytest.raises(ValueError):
        emit_pulses(0, P, 0)


def test_noiseless_lossless_channel_has_no_errors():
    proto = replace(P, e_d=0.0)
    pulses = emit_pulses(200_000, proto, 2)
    det = replace(NO_DEAD, efficiency=1.0)
    res = sift(pulses, transmit_detect(pulses, 0.0, NoiseBudget(), det, proto, 3))
    assert res.measured_qber == 0.0
    assert res.stats.sifted > 0


def test_sifted_fraction_is_half():
    proto = replace(P, e_d=0.0)
    pulses = emit_pulses(400_000, proto, 4)
    dets = transmit_detect(pulses, 0.0, NoiseBudget(), replace(NO_DEAD, efficiency=1.0), proto, 5)
    res = sift(pulses, dets)
    n = len(dets)
    frac = res.stats.sifted / n
    assert abs(frac - 0.5) < 5 * math.sqrt(0.25 / n)


def test_noise_only_click_rate_matches_budget():
    # no signal: total clicks are the Raman, dark and crosstalk rates
    f = fiber_preset("G652-1")
    srs = srs_rate_paper(f, ClassicalTrafficSpec(21.0, "co"), FILTER_PRESETS["fbg-20ghz"])
    noise = NoiseBudget(n_srs=srs, n_dark=1500.0, n_crosstalk=60.0)
    n = 20_000_000
    pulses = emit_pulses(n, P, 6)
    dets = transmit_detect(pulses, math.inf, noise, NO_DEAD, P, 7)
    expected = noise.total / P.rep_rate * n
    observed = len(dets) + 2 * dets.double_clicks
    assert abs(observed - expected) < 5 * math.sqrt(expected)
    assert set(np.unique(dets.cause)) <= {CAUSE_DARK, CAUSE_SRS, 4}


def test_misalignment_anchor():
    pulses = emit_pulses(2_000_000, P, 8)
    dets = transmit_detect(pulses, 3.0, NoiseBudget(), NO_DEAD, P, 9)
    res = sift(pulses, dets)
    sig = dets.cause == CAUSE_SIGNAL
    assert sig.all()
    n = res.stats.sifted
    q = res.measured_qber
    assert abs(q - 0.007) < 3 * math.sqrt(0.007 * 0.993 / n)


def test_gain_matches_analytic():
    s = build_scenario("G652-1", "co", 21.0)
    op = operating_point(s)
    res = simulate_block(op.loss_db, op.noise, s.detector, P, 11)
    stats = res.stats
    q_mu = stats.signal.gain
    t = op.transmittance
    expected = op.y0 + 1 - math.exp(-0.6 * t)
    sigma = math.sqrt(expected / stats.signal.sent)
    assert abs(q_mu - expected) < 5 * sigma


def test_qber_composition():
    s = build_scenario("G652-1", "co", 21.0)
    op = operating_point(s)
    res = simulate_block(op.loss_db, op.noise, s.detector, P, 12)
    n = res.stats.sifted
    predicted = evaluate(s).qber
    assert abs(res.measured_qber - predicted) < 5 * math.sqrt(predicted * (1 - predicted) / n)


def test_dead_time_veto_and_afterpulses():
    proto = replace(P, e_d=0.0)
    det = replace(INGAAS_2017, afterpulse_prob=0.2, efficiency=1.0)
    pulses = emit_pulses(200_000, proto, 13)
    dets = transmit_detect(pulses, 10.0, NoiseBudget(), det, proto, 14, afterpulse_prob=0.2)
    dead = int(round(det.dead_time * proto.rep_rate))
    for d in range(4):
        idx = dets.index[dets.detector == d]
        assert np.all(np.diff(idx) >= dead)
    assert np.count_nonzero(dets.cause == CAUSE_AFTERPULSE) > 0


def test_per_slot_probability_guard():
    pulses = emit_pulses(10, P, 0)
    with pytest.raises(ValueError, match="per-slot"):
        transmit_detect(pulses, 10.0, NoiseBudget(n_dark=1e9), INGAAS_2017, P, 0)


def test_simulate_block_determinism():
    s = build_scenario("G654-110-1", "co", 21.0)
    op = operating_point(s)
    a = simulate_block(op.loss_db, op.noise, s.detector, P, 5, target_sifted=20_000)
    b = simulate_block(op.loss_db, op.noise, s.detector, P, 5, target_sifted=20_000)
    assert a.stats == b.stats
    assert np.array_equal(a.signal.bits_alice, b.signal.bits_alice)
    assert a.stats.sifted >= 20_000


def test_sifted_positions_are_matched_bases():
    pulses = emit_pulses(300_000, P, 15)
    dets = transmit_detect(pulses, 5.0, NoiseBudget(n_dark=1e5), NO_DEAD, P, 16)
    res = sift(pulses, dets)
    for block in res.blocks:
        assert np.all(pulses.intensity_class[block.positions] == block.intensity_class)
        assert np.array_equal(pulses.bit[block.positions], block.bits_alice)
    assert sum(t.sent for t in res.stats.classes) == len(pulses)


def test_photon_number_ground_truth_bounds():
    proto = replace(P, block_size=1)
    pulses = emit_pulses(10_000_000, proto, 17)
    noise = NoiseBudget(n_dark=2e4, n_srs=1e4)
    dets = transmit_detect(pulses, 6.0, noise, NO_DEAD, proto, 18, photon_numbers=True)
    y1, e1 = photon_number_truth(pulses, dets)
    _, bounds, _ = rate_from_stats(sift(pulses, dets).stats, proto)
    assert 0 < bounds.y1_lower <= y1
    assert bounds.e1_upper >= e1


def test_bernoulli_positions_rate(rng):
    n, p = 10_000_000, 1e-4
    hits = bernoulli_positions(rng, n, p)
    assert np.all(np.diff(hits) > 0)
    assert hits[-1] < n
    assert abs(hits.size - n * p) < 5 * math.sqrt(n * p)
    assert bernoulli_positions(rng, 10, 0.0).size == 0
    assert bernoulli_positions(rng, 10, 1.0).size == 10


def test_sample_stats_reaches_block(rng):
    op = operating_point(build_scenario("G652-1", "co", 21.0))
    stats, pulses = sample_stats(op.transmittance, op.y0, P, rng)
    assert stats.sifted >= P.block_size
    assert stats.sent == pulses
