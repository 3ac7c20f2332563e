"""Toeplitz-matrix privacy amplification.

Seed orientation: the m x n matrix has ``T[i, j] = seed[j - i]`` on and above
the diagonal and ``T[i, j] = seed[n + i - j - 1]`` below it. Row 0 is
``seed[:n]`` and column 0 reads ``seed[n], seed[n+1], ...`` downwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels


@dataclass(frozen=True)
class PASpec:
    pa_factor: float
    seed: np.ndarray
    input_len: int
    output_len: int

    def __post_init__(self):
        if not 0 <= self.pa_factor <= 1:
            raise ValueError(f"pa_factor must be in [0, 1], got {self.pa_factor}")
        if self.output_len != math.floor(self.pa_factor * self.input_len):
            raise ValueError("output_len must equal floor(pa_factor * input_len)")
        expected = self.input_len + self.output_len - 1 if self.output_len else 0
        if len(self.seed) != expected:
            raise ValueError(f"seed must hold n + m - 1 = {expected} bits, got {len(self.seed)}")

    @classmethod
    def build(cls, pa_factor, input_len, rng):
        m = math.floor(pa_factor * input_len)
        seed = rng.integers(0, 2, size=input_len + m - 1 if m else 0, dtype=np.uint8)
        return cls(pa_factor, seed, input_len, m)


def compute_pa_factor(corrected_rate, estimated_final_rate):
    if corrected_rate <= 0:
        raise ValueError(f"corrected_rate must be > 0, got {corrected_rate}")
    return min(max(estimated_final_rate / corrected_rate, 0.0), 1.0)


def toeplitz_pa(bits, spec):
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size != spec.input_len:
        raise ValueError(f"input has {bits.size} bits, spec expects {spec.input_len}")
    if spec.output_len == 0:
        return np.zeros(0, dtype=np.uint8)
    if len(spec.seed) != spec.input_len + spec.output_len - 1:
        raise ValueError("seed length must be n + m - 1")
    return kernels.toeplitz_hash(np.asarray(spec.seed, dtype=np.uint8), bits, spec.output_len)
