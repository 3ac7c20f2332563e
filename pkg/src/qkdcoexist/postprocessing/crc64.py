"""CRC-64/ECMA-182 digests of bit strings for error verification."""

import numpy as np

from .. import kernels

CHECK_VALUE = 0x6C40DF5F0B497347  # digest of b"123456789"


def crc64_bits(bits):
    """CRC-64 of a bit vector packed MSB-first, last byte zero-padded."""
    packed = np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="big")
    return kernels.crc64(packed.tobytes())


def crc64_verify(alice, bob):
    alice = np.asarray(alice, dtype=np.uint8)
    bob = np.asarray(bob, dtype=np.uint8)
    if alice.shape != bob.shape:
        raise ValueError(f"blocks differ in length: {alice.size} vs {bob.size}")
    return crc64_bits(alice) == crc64_bits(bob)
