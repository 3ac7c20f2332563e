import numpy as np
import pytest

from qkdcoexist import kernels


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    return kernels.get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def naive_toeplitz(seed, x, m):
    """Explicit m x n matrix over GF(2), built entry by entry."""
    n = len(x)
    t = np.zeros((m, n), dtype=np.uint8)
    for i in range(m):
        for j in range(n):
            t[i, j] = seed[j - i] if j >= i else seed[n + i - j - 1]
    return (t.astype(np.int64) @ np.asarray(x, dtype=np.int64)) % 2


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[number])
