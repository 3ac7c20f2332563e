"""Frequency (monobit) and runs tests for bit sequences."""

import math

import numpy as np
from scipy.special import erfc


def monobit_p_value(bits):
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.size
    s = abs(int(np.sum(2 * bits - 1)))
    return float(erfc(s / math.sqrt(2.0 * n)))


def runs_p_value(bits):
    """Runs test; returns 0.0 when the frequency pre-test fails."""
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.size
    pi = bits.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0
    runs = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
    num = abs(runs - 2.0 * n * pi * (1 - pi))
    return float(erfc(num / (2.0 * math.sqrt(2.0 * n) * pi * (1 - pi))))
