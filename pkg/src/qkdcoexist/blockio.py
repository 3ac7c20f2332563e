"""Binary dump of sifted key blocks.

Layout, all integers big-endian::

    offset  size  field
    0       4     magic b"QKDB"
    4       2     format version (1)
    6       2     reserved, zero
    8       32    SHA-256 of the canonical scenario text
    40      8     block length in bits (uint64)
    48      96    tallies: signal, decoy, vacuum x (sent, detected, sifted, errors), uint64 each
    144     ...   bits packed MSB-first, last byte zero-padded
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .keyrate import IntensityTally, ObservedStats

MAGIC = b"QKDB"
VERSION = 1
_HEADER = struct.Struct(">4sHH32sQ")
_TALLY = struct.Struct(">12Q")
HEADER_SIZE = _HEADER.size + _TALLY.size


@dataclass(frozen=True)
class BlockDump:
    bits: np.ndarray
    stats: ObservedStats
    scenario_hash: bytes


def dumps(bits, stats, scenario_hash):
    bits = np.asarray(bits, dtype=np.uint8)
    if len(scenario_hash) != 32:
        raise ValueError("scenario hash must be 32 bytes")
    counts = []
    for t in stats.classes:
        counts.extend(int(v) for v in (t.sent, t.detected, t.sifted, t.errors))
    head = _HEADER.pack(MAGIC, VERSION, 0, bytes(scenario_hash), bits.size) + _TALLY.pack(*counts)
    return head + np.packbits(bits, bitorder="big").tobytes()


def loads(data):
    if len(data) < HEADER_SIZE:
        raise ValueError("truncated block header")
    magic, version, _, digest, length = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported block format version {version}")
    counts = _TALLY.unpack_from(data, _HEADER.size)
    payload = np.frombuffer(data, dtype=np.uint8, offset=HEADER_SIZE)
    if payload.size != (length + 7) // 8:
        raise ValueError(f"payload holds {payload.size} bytes, header says {length} bits")
    bits = np.unpackbits(payload, bitorder="big")[:length]
    tallies = [IntensityTally(*counts[4 * i: 4 * i + 4]) for i in range(3)]
    return BlockDump(bits=bits, stats=ObservedStats(*tallies), scenario_hash=digest)


def write_block(path, bits, stats, scenario_hash):
    with open(path, "wb") as fh:
        fh.write(dumps(bits, stats, scenario_hash))


def read_block(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
