import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkdcoexist.keyrate import DecoyParams, KeyRateReport
from qkdcoexist.channel import NoiseBudget
from qkdcoexist.postprocessing import (
    AuthenticationError,
    AuthKeyPool,
    KeyReuseError,
    PASpec,
    Transcript,
    compute_pa_factor,
    crc64_bits,
    crc64_verify,
    distill,
    lfsr_toeplitz_auth,
    shared_pools,
    toeplitz_pa,
    winnow_correct,
    winnow_replay,
)
from qkdcoexist.postprocessing.auth import (
    KEY_BITS,
    _clmul,
    bits_to_int,
    irreducible_from_seed,
    is_irreducible,
    lfsr_sequence,
)
from qkdcoexist.postprocessing.transcript import MsgType, pack_bits, unpack_bits
from qkdcoexist.postprocessing.winnow import CONFIRM_ROUNDS, efficiency, initial_block_exponent
from qkdcoexist.randomness import monobit_p_value, runs_p_value

from .conftest import naive_toeplitz

P = DecoyParams()


def _noisy(rng, n, q):
    a = rng.integers(0, 2, size=n, dtype=np.uint8)
    b = a ^ (rng.random(n) < q).astype(np.uint8)
    return a, b


def _report(qber=0.02, rate=5000.0, error_mu=0.02):
    return KeyRateReport(qsnr=20.0, qber=qber, gain_mu=1e-3, y1_lower=1e-3, e1_upper=0.03, rate=rate,
                         feasible=rate > 0, noise=NoiseBudget(), error_mu=error_mu)


# --- CRC-64 ---------------------------------------------------------------


def test_crc_identical_blocks_pass(rng):
    a = rng.integers(0, 2, size=4096, dtype=np.uint8)
    assert crc64_verify(a, a.copy())


def test_crc_bit_packing_is_msb_first():
    assert crc64_bits(np.unpackbits(np.frombuffer(b"123456789", dtype=np.uint8))) == 0x6C40DF5F0B497347


def test_crc_unequal_lengths():
    with pytest.raises(ValueError):
        crc64_verify(np.zeros(8, np.uint8), np.zeros(9, np.uint8))


def test_crc_random_pairs_do_not_collide(rng):
    a = rng.integers(0, 2, size=(20_000, 512), dtype=np.uint8)
    b = rng.integers(0, 2, size=(20_000, 512), dtype=np.uint8)
    assert not any(crc64_verify(x, y) for x, y in zip(a, b) if not np.array_equal(x, y))


# --- Toeplitz PA ----------------------------------------------------------


def test_toeplitz_identity_seed(rng):
    n = 64
    seed = np.zeros(2 * n - 1, dtype=np.uint8)
    seed[0] = 1
    x = rng.integers(0, 2, size=n, dtype=np.uint8)
    assert np.array_equal(toeplitz_pa(x, PASpec(1.0, seed, n, n)), x)


def test_toeplitz_zero_input(rng):
    spec = PASpec.build(0.5, 300, rng)
    assert not toeplitz_pa(np.zeros(300, np.uint8), spec).any()


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 200), frac=st.floats(0.0, 1.0), seed=st.integers(0, 2**32))
def test_toeplitz_linear(n, frac, seed):
    rng = np.random.default_rng(seed)
    spec = PASpec.build(frac, n, rng)
    a = rng.integers(0, 2, size=n, dtype=np.uint8)
    b = rng.integers(0, 2, size=n, dtype=np.uint8)
    assert np.array_equal(toeplitz_pa(a ^ b, spec), toeplitz_pa(a, spec) ^ toeplitz_pa(b, spec))


def test_toeplitz_small_oracle(rng):
    spec = PASpec.build(0.7, 50, rng)
    x = rng.integers(0, 2, size=50, dtype=np.uint8)
    assert np.array_equal(toeplitz_pa(x, spec), naive_toeplitz(spec.seed, x, spec.output_len))


def test_pa_spec_validation(rng):
    with pytest.raises(ValueError, match="seed"):
        PASpec(0.5, np.zeros(3, np.uint8), 10, 5)
    with pytest.raises(ValueError, match="floor"):
        PASpec(0.5, np.zeros(14, np.uint8), 10, 6)
    spec = PASpec.build(0.5, 10, rng)
    with pytest.raises(ValueError, match="input"):
        toeplitz_pa(np.zeros(11, np.uint8), spec)


def test_pa_factor():
    assert compute_pa_factor(1000.0, 1000.0) == 1.0
    assert compute_pa_factor(20e3, 4.5e3) == pytest.approx(0.225)
    assert compute_pa_factor(20e3, -1.0) == 0.0
    assert compute_pa_factor(20e3, 1e6) == 1.0
    with pytest.raises(ValueError):
        compute_pa_factor(0.0, 1.0)


# --- Winnow ---------------------------------------------------------------


def test_winnow_identical_inputs_without_discards(rng):
    a = rng.integers(0, 2, size=1000, dtype=np.uint8)
    res = winnow_correct(a, a.copy(), 0.02, privacy_maintenance=False)
    k = initial_block_exponent(0.02)
    assert res.converged and res.rounds == CONFIRM_ROUNDS
    assert res.bob.ec_rounds == 0
    assert res.bob.leaked_bits == CONFIRM_ROUNDS * (1000 // (1 << k))
    assert np.array_equal(res.bob.bits, a)


def test_winnow_identical_inputs_with_discards(rng):
    a = rng.integers(0, 2, size=1000, dtype=np.uint8)
    res = winnow_correct(a, a.copy(), 0.02)
    assert res.bob.ec_rounds == 0
    assert res.bob.discarded_bits == res.bob.leaked_bits
    assert np.array_equal(res.bob.bits, res.alice_bits)


def test_winnow_single_flip_exhaustive():
    # every single-bit error in an 8-bit Hamming block is located and fixed
    for pos in range(8):
        for word in itertools.islice(itertools.product((0, 1), repeat=8), 0, 256, 37):
            a = np.array(word, dtype=np.uint8)
            b = a.copy()
            b[pos] ^= 1
            res = winnow_correct(a, b, 0.07, privacy_maintenance=False, seed=pos)
            assert np.array_equal(res.bob.bits, a)
            assert res.corrections == 1


def test_winnow_corrects_and_replays(rng):
    a, b = _noisy(rng, 100_000, 0.025)
    res = winnow_correct(a, b, 0.025, seed=3)
    assert res.converged
    assert np.count_nonzero(res.alice_bits != res.bob.bits) == 0
    wire = Transcript.from_bytes(res.transcript.to_bytes())
    assert np.array_equal(winnow_replay(b, wire), res.bob.bits)


@pytest.mark.parametrize("q", [0.005, 0.025, 0.04])
def test_winnow_efficiency_band(rng, q):
    a, b = _noisy(rng, 200_000, q)
    res = winnow_correct(a, b, q, seed=1)
    actual = np.count_nonzero(a != b) / a.size
    assert 1.0 <= efficiency(res.leaked_bits, a.size, actual) <= 1.5


def test_winnow_short_blocks_leave_no_residual(rng):
    # a lone clean round misses even error counts; the confirming rounds catch them
    residual = 0
    for seed in range(200):
        a, b = _noisy(rng, 3000, 0.02)
        res = winnow_correct(a, b, 0.02, seed=seed)
        residual += np.count_nonzero(res.alice_bits != res.bob.bits)
    assert residual == 0


def test_winnow_round_cap(rng):
    a, b = _noisy(rng, 20_000, 0.09)
    res = winnow_correct(a, b, 0.001, max_rounds=1)
    assert not res.converged and res.rounds == 1


def test_winnow_input_checks():
    with pytest.raises(ValueError):
        winnow_correct(np.zeros(8, np.uint8), np.zeros(9, np.uint8), 0.02)
    with pytest.raises(ValueError):
        winnow_correct(np.zeros(8, np.uint8), np.zeros(8, np.uint8), 0.2)


def test_winnow_determinism(rng):
    a, b = _noisy(rng, 30_000, 0.02)
    r1 = winnow_correct(a, b, 0.02, seed=9)
    r2 = winnow_correct(a, b, 0.02, seed=9)
    assert r1.transcript.to_bytes() == r2.transcript.to_bytes()


# --- transcript ------------------------------------------------------------


def test_transcript_round_trip_and_immutability():
    t0 = Transcript()
    t1 = t0.add(MsgType.PARITIES, 0, pack_bits(np.array([1, 0, 1], np.uint8)))
    assert len(t0) == 0 and len(t1) == 1
    data = t1.to_bytes()
    assert data[:4] == b"QKDT"
    back = Transcript.from_bytes(data)
    assert back == t1
    bits, off = unpack_bits(back.messages[0].payload)
    assert list(bits) == [1, 0, 1] and off == 5


def test_transcript_rejects_garbage():
    data = Transcript().add(MsgType.ROUND, 0, b"abc").to_bytes()
    for bad in (data[:-1], data + b"x", b"NOPE" + data[4:]):
        with pytest.raises(ValueError):
            Transcript.from_bytes(bad)


# --- authentication --------------------------------------------------------


def test_irreducibility_small_cases():
    assert is_irreducible(0b111)
    assert is_irreducible(0b1011)
    assert not is_irreducible(0b101)
    assert not is_irreducible(0b1111)
    # count of irreducible degree-8 polynomials over GF(2)
    assert sum(is_irreducible(p) for p in range(1 << 8, 1 << 9)) == 30


def test_irreducible_counts_by_degree():
    # necklace counts of monic irreducible polynomials over GF(2)
    counts = [2, 1, 2, 3, 6, 9, 18, 30, 56, 99, 186, 335]
    for n, want in enumerate(counts, start=1):
        assert sum(is_irreducible(p) for p in range(1 << n, 1 << (n + 1))) == want


def test_product_of_large_factors_is_reducible():
    # no factor small enough for the early screen; Rabin's stage must reject it
    lo = next(p for p in range((1 << 32) + 1, 1 << 33, 2) if is_irreducible(p))
    hi = next(p for p in range(lo + 2, 1 << 33, 2) if is_irreducible(p))
    assert not is_irreducible(_clmul(lo, hi))
    assert not is_irreducible(_clmul(lo, lo))


def test_found_polynomial_is_degree_64():
    p = irreducible_from_seed(12345)
    assert p.bit_length() == 65 and is_irreducible(p)


def test_auth_matches_expanded_matrix(rng):
    key = rng.integers(0, 2, size=KEY_BITS, dtype=np.uint8)
    msg = rng.integers(0, 2, size=2048, dtype=np.uint8)
    poly = irreducible_from_seed(bits_to_int(key[:64]))
    state = bits_to_int(key[64:128]) or 1
    pad = bits_to_int(key[128:])
    seq = lfsr_sequence(poly, state, msg.size + 63)
    cols = np.lib.stride_tricks.sliding_window_view(seq, 64)[: msg.size]
    h = (cols.astype(np.int64).T @ msg.astype(np.int64)) % 2
    expected = sum(int(b) << i for i, b in enumerate(h)) ^ pad
    assert lfsr_toeplitz_auth(msg, key).tag == expected


def test_auth_deterministic_and_key_sensitive(rng):
    key = rng.integers(0, 2, size=KEY_BITS, dtype=np.uint8)
    msg = rng.integers(0, 2, size=500, dtype=np.uint8)
    assert lfsr_toeplitz_auth(msg, key).tag == lfsr_toeplitz_auth(msg, key).tag
    other = key.copy()
    other[-1] ^= 1
    assert lfsr_toeplitz_auth(msg, key).tag != lfsr_toeplitz_auth(msg, other).tag


def test_auth_short_key():
    with pytest.raises(ValueError):
        lfsr_toeplitz_auth(np.zeros(8, np.uint8), np.zeros(100, np.uint8))


def test_auth_collisions_within_universal_bound(rng):
    # the bound m / 2**63 makes even one collision in 100 fresh keys implausible
    trials, m = 100, 256
    hits = 0
    for _ in range(trials):
        key = rng.integers(0, 2, size=KEY_BITS, dtype=np.uint8)
        x = rng.integers(0, 2, size=m, dtype=np.uint8)
        y = rng.integers(0, 2, size=m, dtype=np.uint8)
        hits += lfsr_toeplitz_auth(x, key).tag == lfsr_toeplitz_auth(y, key).tag
    assert trials * m / 2 ** 63 < 1e-12
    assert hits == 0


def test_pool_single_use_and_refresh(rng):
    material = rng.integers(0, 2, size=4 * KEY_BITS, dtype=np.uint8)
    alice, bob = AuthKeyPool(material.copy()), AuthKeyPool(material.copy())
    msg = rng.integers(0, 2, size=100, dtype=np.uint8)
    tag = alice.sign(msg)
    assert bob.verify(msg, tag)
    with pytest.raises(KeyReuseError):
        bob.verify(msg, tag)
    reply = bob.sign(msg)
    assert reply.key_id == "e0-k1"
    alice.verify(msg, reply)
    forged = replace(alice.sign(msg), tag=0)
    with pytest.raises(AuthenticationError):
        bob.verify(msg, forged)
    alice.refresh(rng.integers(0, 2, size=KEY_BITS, dtype=np.uint8))
    assert alice.epoch == 1 and alice.sign(msg).key_id == "e1-k0"
    with pytest.raises(KeyReuseError, match="exhausted"):
        alice.sign(msg)


# --- distill ---------------------------------------------------------------


def test_distill_noiseless_block(rng):
    a = rng.integers(0, 2, size=50_000, dtype=np.uint8)
    out = distill(a, a.copy(), P, _report(qber=0.0, rate=1e9, error_mu=0.0), duration_s=1.0)
    assert out.emitted
    assert np.array_equal(out.alice_key, out.bob_key)
    assert out.ledger.pa_factor == 1.0
    assert out.ledger.final_bits == out.ledger.pa_input_bits


def test_distill_noisy_blocks_agree():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        a, b = _noisy(rng, 40_000, 0.025)
        out = distill(a, b, P, _report(qber=0.025, rate=2000.0, error_mu=0.025), duration_s=5.0, seed=seed)
        assert out.emitted
        assert np.array_equal(out.alice_key, out.bob_key)
        led = out.ledger
        assert led.pa_input_bits == led.sifted_bits - led.discarded_bits
        assert led.final_bits == math.floor(led.pa_factor * led.pa_input_bits)
        assert led.auth_bits == 2 * KEY_BITS


def test_distill_refuses_above_cap(rng):
    a, b = _noisy(rng, 10_000, 0.05)
    out = distill(a, b, P, _report(qber=0.05), duration_s=1.0)
    assert not out.emitted and out.ledger.status == "qber_cap"
    assert out.alice_key.size == 0


def test_distill_second_cap_on_corrected_errors(rng):
    a, b = _noisy(rng, 40_000, 0.06)
    out = distill(a, b, P, _report(qber=0.03, error_mu=0.03), duration_s=1.0)
    assert not out.emitted
    assert out.ledger.status in ("qber_cap", "ec_failed")


def test_distill_auth_failure_aborts(rng):
    a = rng.integers(0, 2, size=5000, dtype=np.uint8)
    pa, pb = shared_pools(1)
    pb.material[0] ^= 1
    with pytest.raises(AuthenticationError):
        distill(a, a.copy(), P, _report(), duration_s=1.0, pools=(pa, pb))


def test_distill_zero_rate_gives_no_key(rng):
    a = rng.integers(0, 2, size=5000, dtype=np.uint8)
    out = distill(a, a.copy(), P, _report(rate=0.0), duration_s=1.0)
    assert out.ledger.status == "no_key" and out.ledger.ev_passed


# --- randomness tests ------------------------------------------------------


def test_randomness_tests(rng):
    good = rng.integers(0, 2, size=100_000, dtype=np.uint8)
    assert monobit_p_value(good) > 0.01
    assert runs_p_value(good) > 0.01
    assert monobit_p_value(np.ones(1000, np.uint8)) < 1e-6
    alternating = np.tile(np.array([0, 1], np.uint8), 5000)
    assert runs_p_value(alternating) < 1e-6
