"""Winnow error reconciliation with privacy maintenance.

Each round shuffles the surviving positions with a seed Alice announces,
splits them into blocks of 2**k bits and exchanges block parities. For every
mismatched block Alice sends the k-bit Hamming syndrome (XOR of the
positions of her ones) and Bob flips the position where his syndrome
differs. Privacy maintenance then drops one bit per disclosed parity bit:
position 0 of every block, plus positions 1, 2, 4, ... of corrected blocks.
A single all-matching round still misses blocks holding an even number of
errors, so a few confirming rounds with fresh shuffles close the run.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .. import kernels
from .transcript import ALICE, BOB, MsgType, Transcript, pack_bits, unpack_bits

DEFAULT_MAX_ROUNDS = 10
# expected errors per first-round block
TARGET_ERRORS = 0.6
# grow the block only once fewer than this fraction of blocks mismatch
GROW_BELOW = 0.3
# consecutive all-matching rounds, at the same block size, before stopping
CONFIRM_ROUNDS = 3
_ROUND = struct.Struct(">HBQ")


class WinnowFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class CorrectedBlock:
    bits: np.ndarray
    leaked_bits: int
    ec_rounds: int
    verified: bool = False
    discarded_bits: int = 0

    def __len__(self):
        return int(self.bits.size)


@dataclass(frozen=True)
class WinnowResult:
    alice_bits: np.ndarray
    bob: CorrectedBlock
    transcript: Transcript
    converged: bool
    rounds: int
    corrections: int

    @property
    def leaked_bits(self):
        return self.bob.leaked_bits


def initial_block_exponent(qber_hint):
    return max(2, int(math.floor(math.log2(TARGET_ERRORS / qber_hint))))


def _survivors(n, k, mismatched_rows, nb):
    """Mask over the shuffled order of the positions kept after a round."""
    bs = 1 << k
    keep = np.ones(n, dtype=bool)
    keep[np.arange(nb) * bs] = False
    if mismatched_rows.size:
        for j in range(k):
            keep[mismatched_rows * bs + (1 << j)] = False
    return keep


def winnow_correct(alice, bob, qber_hint, seed=0, max_rounds=DEFAULT_MAX_ROUNDS, privacy_maintenance=True):
    """Reconcile Bob's bits to Alice's; returns both outputs and the transcript.

    The run stops after ``CONFIRM_ROUNDS`` consecutive rounds with no
    mismatched parity. A run that gets there within ``max_rounds`` rounds
    reports ``converged=True``; otherwise the caller discards the block.
    """
    a0 = np.asarray(alice, dtype=np.uint8)
    b = np.array(bob, dtype=np.uint8, copy=True)
    if a0.shape != b.shape or a0.ndim != 1:
        raise ValueError(f"alice and bob blocks must be equal-length bit vectors, got {a0.shape} and {b.shape}")
    if not 0 < qber_hint <= 0.1:
        raise ValueError(f"qber_hint must be in (0, 0.1], got {qber_hint}")
    rng = np.random.default_rng(seed)
    alive = np.arange(a0.size, dtype=np.int64)
    k = initial_block_exponent(qber_hint)
    transcript = Transcript()
    leaked = rounds = ec_rounds = corrections = clean = 0
    converged = False

    while rounds < max_rounds:
        bs = 1 << k
        nb = alive.size // bs
        if nb == 0:
            converged = True
            break
        rounds += 1
        round_seed = int(rng.integers(0, 2**63))
        transcript = transcript.add(MsgType.ROUND, ALICE, _ROUND.pack(rounds, k, round_seed))
        order = alive[np.random.default_rng(round_seed).permutation(alive.size)]
        pa, sa = kernels.block_parity_syndrome(a0[order], k)
        pb, sb = kernels.block_parity_syndrome(b[order], k)
        mism = pa != pb
        rows = np.flatnonzero(mism)
        transcript = transcript.add(MsgType.PARITIES, ALICE, pack_bits(pa))
        transcript = transcript.add(MsgType.MISMATCHES, BOB, pack_bits(mism.astype(np.uint8)))
        leaked += nb
        if rows.size:
            transcript = transcript.add(MsgType.SYNDROMES, ALICE, _pack_syndromes(sa[rows]))
            leaked += k * rows.size
            flip = order[rows * bs + (sa[rows] ^ sb[rows])]
            b[flip] ^= 1
            corrections += rows.size
            ec_rounds += 1
        if privacy_maintenance:
            alive = np.sort(order[_survivors(order.size, k, rows, nb)])
        if not rows.size:
            clean += 1
            if clean >= CONFIRM_ROUNDS:
                converged = True
                break
            continue
        clean = 0
        if rows.size / nb < GROW_BELOW:
            k += 1

    discarded = a0.size - alive.size
    corrected = CorrectedBlock(bits=b[alive], leaked_bits=leaked, ec_rounds=ec_rounds, discarded_bits=discarded)
    return WinnowResult(a0[alive].copy(), corrected, transcript, converged, rounds, corrections)


def _pack_syndromes(values):
    values = np.asarray(values, dtype=np.int64)
    return struct.pack(">I", values.size) + values.astype(">u2").tobytes()


def _unpack_syndromes(payload):
    (n,) = struct.unpack_from(">I", payload, 0)
    return np.frombuffer(payload, dtype=">u2", count=n, offset=4).astype(np.int64)


def winnow_replay(bob, transcript, privacy_maintenance=True):
    """Bob's side of Winnow driven only by his bits and Alice's messages."""
    b = np.array(bob, dtype=np.uint8, copy=True)
    alive = np.arange(b.size, dtype=np.int64)
    msgs = list(transcript)
    i = 0
    while i < len(msgs):
        m = msgs[i]
        if m.type != MsgType.ROUND:
            i += 1
            continue
        _, k, round_seed = _ROUND.unpack(m.payload)
        bs = 1 << k
        order = alive[np.random.default_rng(round_seed).permutation(alive.size)]
        pa, _ = unpack_bits(msgs[i + 1].payload)
        pb, sb = kernels.block_parity_syndrome(b[order], k)
        if pa.size != pb.size:
            raise WinnowFailure("parity count does not match the local block layout")
        rows = np.flatnonzero(pa != pb)
        i += 3
        if rows.size:
            if i >= len(msgs) or msgs[i].type != MsgType.SYNDROMES:
                raise WinnowFailure("transcript lacks syndromes for mismatched blocks")
            sa = _unpack_syndromes(msgs[i].payload)
            if sa.size != rows.size:
                raise WinnowFailure("syndrome count does not match mismatched blocks")
            b[order[rows * bs + (sa ^ sb[rows])]] ^= 1
            i += 1
        if privacy_maintenance:
            alive = np.sort(order[_survivors(order.size, k, rows, pa.size)])
    return b[alive]


def efficiency(leaked_bits, n, qber):
    """Disclosed bits relative to the Shannon limit n * H2(qber)."""
    if qber <= 0 or qber >= 1:
        return math.inf
    h = -qber * math.log2(qber) - (1 - qber) * math.log2(1 - qber)
    return leaked_bits / (n * h)
