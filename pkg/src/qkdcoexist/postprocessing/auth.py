"""Krawczyk LFSR-based Toeplitz message authentication.

A 64-bit tag is the GF(2) product of the message with the matrix whose
column j is the LFSR output window s_j .. s_{j+63}, XORed with a one-time
pad. The feedback polynomial is the first irreducible degree-64 polynomial
at or after a key-chosen starting point; the initial LFSR state and the pad
also come from the key. Each 192-bit key is used for exactly one tag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .. import kernels

TAG_WIDTH = 64
KEY_BITS = 3 * TAG_WIDTH
_MASK = (1 << TAG_WIDTH) - 1
_TOP = 1 << TAG_WIDTH
_EARLY_DEGREE = 8


class KeyReuseError(RuntimeError):
    """An authentication key was offered a second time within its epoch."""


class AuthenticationError(RuntimeError):
    """A received tag does not match the message."""


@dataclass(frozen=True)
class AuthTag:
    tag: int
    key_id: str
    width: int = TAG_WIDTH

    @property
    def bits(self):
        return np.array([(self.tag >> (self.width - 1 - i)) & 1 for i in range(self.width)], dtype=np.uint8)

    def to_bytes(self):
        return self.tag.to_bytes(self.width // 8, "big")


def bits_to_int(bits):
    """MSB-first bit vector to integer."""
    value = 0
    for b in np.asarray(bits, dtype=np.uint8).tolist():
        value = (value << 1) | b
    return value


def _clmul(a, b):
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        b >>= 1
    return r


def _square(a):
    # squaring over GF(2) interleaves a zero between consecutive bits
    return int("0".join(bin(a)[2:]), 2)


def _polymod(a, m):
    dm = m.bit_length()
    while a.bit_length() >= dm:
        a ^= m << (a.bit_length() - dm)
    return a


def _polygcd(a, b):
    while b:
        a, b = b, _polymod(a, b)
    return a


def _x_pow2k_mod(k, m):
    """x^(2^k) mod m by repeated squaring."""
    r = 0b10
    for _ in range(k):
        r = _polymod(_square(r), m)
    return r


def is_irreducible(poly):
    """Rabin's test for a polynomial over GF(2) given as an int (bit i = x^i)."""
    n = poly.bit_length() - 1
    if n < 1:
        return False
    if n == 1:
        return True
    if not poly & 1:
        return False
    # x^(2^k) - x shares a factor with poly iff poly has a factor of degree
    # dividing k; checking small k first rejects most candidates cheaply
    r = 0b10
    for k in range(1, n + 1):
        r = _polymod(_square(r), poly)
        if k <= _EARLY_DEGREE and k < n and _polygcd(poly, r ^ 0b10) != 1:
            return False
    if r != 0b10:
        return False
    primes = [p for p in range(2, n + 1) if n % p == 0 and all(p % q for q in range(2, int(p ** 0.5) + 1))]
    for p in primes:
        h = _x_pow2k_mod(n // p, poly) ^ 0b10
        if _polygcd(poly, h) != 1:
            return False
    return True


@lru_cache(maxsize=256)
def irreducible_from_seed(seed):
    """First irreducible x^64 + ... at or after the odd candidate chosen by ``seed``."""
    low = (seed & _MASK) | 1
    for step in range(1 << 16):
        cand = _TOP | ((low + 2 * step) & _MASK)
        if is_irreducible(cand):
            return cand
    raise RuntimeError("no irreducible polynomial found")


def lfsr_sequence(poly, state, length):
    """First ``length`` output bits s_0, s_1, ... of the LFSR."""
    s = state & _MASK
    taps = poly & _MASK
    out = np.empty(length, dtype=np.uint8)
    reg = s
    for i in range(length):
        out[i] = reg & 1
        fb = bin(reg & taps).count("1") & 1
        reg = (reg >> 1) | (fb << (TAG_WIDTH - 1))
    return out


def lfsr_toeplitz_auth(message, auth_key, key_id="k0"):
    """Tag ``message`` bits with a 192-bit key: polynomial seed, initial state, pad."""
    key = np.asarray(auth_key, dtype=np.uint8)
    if key.size < KEY_BITS:
        raise ValueError(f"authentication key needs {KEY_BITS} bits, got {key.size}")
    poly = irreducible_from_seed(bits_to_int(key[:TAG_WIDTH]))
    state = bits_to_int(key[TAG_WIDTH:2 * TAG_WIDTH]) or 1
    pad = bits_to_int(key[2 * TAG_WIDTH:KEY_BITS])
    digest = kernels.lfsr_hash(np.asarray(message, dtype=np.uint8), poly & _MASK, state, TAG_WIDTH)
    return AuthTag(tag=digest ^ pad, key_id=key_id)


@dataclass
class AuthKeyPool:
    """Pre-shared authentication key material, handed out one key per tag.

    Both parties hold an identical pool. ``refresh`` installs fresh material
    and starts a new epoch; a key id may be consumed only once per epoch.
    """

    material: np.ndarray
    epoch: int = 0
    _next: int = 0
    _used: set = field(default_factory=set)

    @property
    def remaining_keys(self):
        return (self.material.size - self._next * KEY_BITS) // KEY_BITS

    @property
    def consumed_bits(self):
        return len(self._used) * KEY_BITS

    def _key(self, index):
        start = index * KEY_BITS
        if start + KEY_BITS > self.material.size:
            raise KeyReuseError(f"authentication key pool exhausted in epoch {self.epoch}")
        return self.material[start:start + KEY_BITS]

    def _consume(self, key_id):
        if key_id in self._used:
            raise KeyReuseError(f"authentication key {key_id} already used")
        self._used.add(key_id)

    def next_key_id(self):
        key_id = f"e{self.epoch}-k{self._next}"
        self._next += 1
        return key_id

    def sign(self, message):
        key_id = self.next_key_id()
        return self.sign_with(message, key_id)

    def sign_with(self, message, key_id):
        epoch, index = _parse_id(key_id)
        if epoch != self.epoch:
            raise KeyReuseError(f"key {key_id} belongs to another epoch")
        key = self._key(index)
        self._consume(key_id)
        # keep both parties' cursors in step: the next fresh key follows any consumed one
        self._next = max(self._next, index + 1)
        return lfsr_toeplitz_auth(message, key, key_id)

    def verify(self, message, tag):
        expected = self.sign_with(message, tag.key_id)
        if expected.tag != tag.tag:
            raise AuthenticationError(f"tag mismatch under key {tag.key_id}")
        return True

    def refresh(self, material):
        self.material = np.asarray(material, dtype=np.uint8)
        self.epoch += 1
        self._next = 0
        self._used = set()


def _parse_id(key_id):
    e, _, k = key_id.partition("-")
    return int(e[1:]), int(k[1:])
