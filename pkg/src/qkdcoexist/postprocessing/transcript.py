"""Public-channel transcript with a fixed binary encoding.

Encoding, big-endian throughout::

    header   magic b"QKDT" | version u16 | message count u32
    message  type u8 | sender u8 (0 = Alice, 1 = Bob) | length u32 | payload

Bit strings inside payloads are a u32 bit count followed by the bits packed
MSB-first. A transcript is an immutable tuple of messages; stages return a
new transcript rather than mutating one.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

MAGIC = b"QKDT"
VERSION = 1
ALICE, BOB = 0, 1
_HEAD = struct.Struct(">4sHI")
_MSG = struct.Struct(">BBI")


class MsgType(IntEnum):
    ROUND = 1
    PARITIES = 2
    MISMATCHES = 3
    SYNDROMES = 4
    EV_DIGEST = 5
    PA_SEED = 6
    AUTH_TAG = 7
    ERROR_COUNT = 8


@dataclass(frozen=True)
class Message:
    type: MsgType
    sender: int
    payload: bytes


@dataclass(frozen=True)
class Transcript:
    messages: tuple = ()

    def add(self, msg_type, sender, payload):
        return Transcript(self.messages + (Message(MsgType(msg_type), sender, bytes(payload)),))

    def __add__(self, other):
        return Transcript(self.messages + other.messages)

    def __len__(self):
        return len(self.messages)

    def __iter__(self):
        return iter(self.messages)

    def of_type(self, msg_type):
        return [m for m in self.messages if m.type == msg_type]

    def to_bytes(self):
        parts = [_HEAD.pack(MAGIC, VERSION, len(self.messages))]
        for m in self.messages:
            parts.append(_MSG.pack(int(m.type), m.sender, len(m.payload)))
            parts.append(m.payload)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _HEAD.size:
            raise ValueError("truncated transcript header")
        magic, version, count = _HEAD.unpack_from(data, 0)
        if magic != MAGIC:
            raise ValueError(f"bad transcript magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"unsupported transcript version {version}")
        off = _HEAD.size
        msgs = []
        for _ in range(count):
            if off + _MSG.size > len(data):
                raise ValueError("truncated message header")
            mtype, sender, length = _MSG.unpack_from(data, off)
            off += _MSG.size
            if off + length > len(data):
                raise ValueError("truncated message payload")
            msgs.append(Message(MsgType(mtype), sender, bytes(data[off:off + length])))
            off += length
        if off != len(data):
            raise ValueError(f"{len(data) - off} trailing bytes after transcript")
        return cls(tuple(msgs))


def pack_bits(bits):
    bits = np.asarray(bits, dtype=np.uint8)
    return struct.pack(">I", bits.size) + np.packbits(bits, bitorder="big").tobytes()


def unpack_bits(payload, offset=0):
    """Decode a packed bit string; returns ``(bits, next_offset)``."""
    (n,) = struct.unpack_from(">I", payload, offset)
    offset += 4
    nbytes = (n + 7) // 8
    raw = np.frombuffer(payload, dtype=np.uint8, count=nbytes, offset=offset)
    return np.unpackbits(raw, bitorder="big")[:n], offset + nbytes
