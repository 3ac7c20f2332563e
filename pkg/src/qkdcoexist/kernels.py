"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
reference implementation is loaded. Set ``QKDCOEXIST_PUREPY=1`` to force the
fallback (the test-suite runs both).
"""

import os

from . import _purepy

BACKENDS = {"purepy": _purepy}

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None
else:
    BACKENDS["compiled"] = _kernels

if os.environ.get("QKDCOEXIST_PUREPY") == "1" or _kernels is None:
    BACKEND = "purepy"
else:
    BACKEND = "compiled"

_impl = BACKENDS[BACKEND]

crc64 = _impl.crc64
# above this many matrix entries the O(N log N) FFT product beats the word-packed loop
TOEPLITZ_FFT_CUTOFF = 1 << 27


def toeplitz_hash(seed, x, m):
    if m * len(x) > TOEPLITZ_FFT_CUTOFF:
        return _purepy.toeplitz_hash(seed, x, m)
    return _impl.toeplitz_hash(seed, x, m)


lfsr_hash = _impl.lfsr_hash
block_parity_syndrome = _impl.block_parity_syndrome
dead_time_filter = _impl.dead_time_filter


def get_backend(name):
    """Return the kernel module registered under ``name``."""
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {sorted(BACKENDS)}") from None
