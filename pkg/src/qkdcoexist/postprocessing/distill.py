"""Sifted blocks to final keys: Winnow, CRC-64 verification, authentication, Toeplitz PA."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .auth import KEY_BITS, AuthKeyPool
from .crc64 import crc64_bits
from .toeplitz import PASpec, compute_pa_factor, toeplitz_pa
from .transcript import ALICE, BOB, MsgType, Transcript, pack_bits
from .winnow import winnow_correct

STATUS_OK = "ok"
STATUS_QBER_CAP = "qber_cap"
STATUS_EC_FAILED = "ec_failed"
STATUS_EV_FAILED = "ev_failed"
STATUS_NO_KEY = "no_key"

LEDGER_COLUMNS = (
    "sifted_bits", "qber", "leaked_bits", "discarded_bits", "ec_rounds", "ev_passed",
    "pa_factor", "pa_input_bits", "final_bits", "auth_bits", "duration_s", "throughput_bps", "status",
)


@dataclass(frozen=True)
class DistillLedger:
    sifted_bits: int
    qber: float
    leaked_bits: int
    discarded_bits: int
    ec_rounds: int
    ev_passed: bool
    pa_factor: float
    pa_input_bits: int
    final_bits: int
    auth_bits: int
    duration_s: float
    status: str

    @property
    def throughput_bps(self):
        return self.final_bits / self.duration_s if self.duration_s > 0 else 0.0

    def as_row(self):
        return {c: getattr(self, c) for c in LEDGER_COLUMNS}


@dataclass(frozen=True)
class DistillResult:
    alice_key: np.ndarray
    bob_key: np.ndarray
    ledger: DistillLedger
    transcript: Transcript

    @property
    def emitted(self):
        return self.ledger.status == STATUS_OK and self.alice_key.size > 0


def shared_pools(seed, n_keys=16):
    """Identical pre-shared authentication pools for both parties."""
    material = np.random.default_rng([seed, 0xA17]).integers(0, 2, size=n_keys * KEY_BITS, dtype=np.uint8)
    return AuthKeyPool(material.copy()), AuthKeyPool(material.copy())


def _authenticate(transcript, pool_alice, pool_bob):
    """Each side tags the transcript so far with a fresh key; the other verifies."""
    body = transcript.to_bytes()
    tag_a = pool_alice.sign(np.unpackbits(np.frombuffer(body, dtype=np.uint8)))
    pool_bob.verify(np.unpackbits(np.frombuffer(body, dtype=np.uint8)), tag_a)
    transcript = transcript.add(MsgType.AUTH_TAG, ALICE, tag_a.key_id.encode() + b":" + tag_a.to_bytes())
    body = transcript.to_bytes()
    tag_b = pool_bob.sign(np.unpackbits(np.frombuffer(body, dtype=np.uint8)))
    pool_alice.verify(np.unpackbits(np.frombuffer(body, dtype=np.uint8)), tag_b)
    return transcript.add(MsgType.AUTH_TAG, BOB, tag_b.key_id.encode() + b":" + tag_b.to_bytes())


def distill(alice_sifted, bob_sifted, protocol, report, duration_s, seed=0,
            pools: Optional[tuple] = None):
    """Run one block through the pipeline; keys are returned only when every gate passes.

    ``report`` supplies the parameter-estimation QBER (``qber``), the
    expected key-bit error rate used to size Winnow (``error_mu``) and the
    estimated final key rate (``rate``, bps). ``duration_s`` is the
    acquisition time of the block. An authentication failure raises
    ``AuthenticationError`` and aborts the session.
    """
    alice = np.asarray(alice_sifted, dtype=np.uint8)
    bob = np.asarray(bob_sifted, dtype=np.uint8)
    if alice.shape != bob.shape:
        raise ValueError("alice and bob sifted blocks differ in length")
    n = int(alice.size)
    pool_a, pool_b = pools if pools is not None else shared_pools(seed)
    auth_before = pool_a.consumed_bits
    empty = np.zeros(0, dtype=np.uint8)

    def ledger(status, qber, leaked=0, discarded=0, rounds=0, ev=False, pa=0.0, pa_in=0, final=0):
        spent = pool_a.consumed_bits - auth_before
        return DistillLedger(n, float(qber), leaked, discarded, rounds, ev, float(pa), pa_in, final,
                             spent, float(duration_s), status)

    if report.qber > protocol.qber_cap or n == 0:
        return DistillResult(empty, empty, ledger(STATUS_QBER_CAP, report.qber), Transcript())

    rng = np.random.default_rng([seed, 0xD15])
    hint = float(np.clip(report.error_mu, 1e-3, 0.1))
    ec = winnow_correct(alice, bob, hint, seed=int(rng.integers(0, 2**63)))
    transcript = ec.transcript
    leaked, discarded, rounds = ec.leaked_bits, ec.bob.discarded_bits, ec.bob.ec_rounds
    qber_ec = ec.corrections / n
    transcript = transcript.add(MsgType.ERROR_COUNT, BOB, struct.pack(">Q", ec.corrections))
    if not ec.converged:
        transcript = _authenticate(transcript, pool_a, pool_b)
        return DistillResult(empty, empty, ledger(STATUS_EC_FAILED, report.qber, leaked, discarded, rounds),
                             transcript)
    if qber_ec > protocol.qber_cap:
        transcript = _authenticate(transcript, pool_a, pool_b)
        return DistillResult(empty, empty, ledger(STATUS_QBER_CAP, qber_ec, leaked, discarded, rounds), transcript)

    digest_a = crc64_bits(ec.alice_bits)
    transcript = transcript.add(MsgType.EV_DIGEST, ALICE, struct.pack(">Q", digest_a))
    ev_ok = digest_a == crc64_bits(ec.bob.bits)
    if not ev_ok:
        transcript = _authenticate(transcript, pool_a, pool_b)
        return DistillResult(empty, empty,
                             ledger(STATUS_EV_FAILED, report.qber, leaked, discarded, rounds), transcript)

    pa_in = int(ec.alice_bits.size)
    corrected_rate = pa_in / duration_s if duration_s > 0 else 0.0
    factor = compute_pa_factor(corrected_rate, report.rate) if corrected_rate > 0 else 0.0
    spec = PASpec.build(factor, pa_in, rng)
    transcript = transcript.add(MsgType.PA_SEED, ALICE, pack_bits(spec.seed))
    transcript = _authenticate(transcript, pool_a, pool_b)
    if spec.output_len == 0:
        return DistillResult(empty, empty, ledger(STATUS_NO_KEY, report.qber, leaked, discarded, rounds, True,
                                                  factor, pa_in, 0), transcript)
    key_a = toeplitz_pa(ec.alice_bits, spec)
    key_b = toeplitz_pa(ec.bob.bits, spec)
    return DistillResult(key_a, key_b,
                         ledger(STATUS_OK, report.qber, leaked, discarded, rounds, True, factor, pa_in,
                                spec.output_len), transcript)
