"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--quick]

Prints one line per kernel and size with the best wall time of each backend
and the speed-up, then the Toeplitz sizes on both sides of the FFT cutoff.
"""

import argparse
import sys
import timeit

import numpy as np

from qkdcoexist import _purepy, kernels


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def _cases(quick):
    rng = np.random.default_rng(1)
    scale = 10 if quick else 1
    n = 200_000 // scale
    data = rng.integers(0, 256, n, dtype=np.uint8).tobytes()
    yield "crc64", f"{n} bytes", lambda b: (lambda: b.crc64(data))

    bits = rng.integers(0, 2, 500_000 // scale, dtype=np.uint8)
    yield "block_parity_syndrome", f"{bits.size} bits, k=5", lambda b: (lambda: b.block_parity_syndrome(bits, 5))

    msg = rng.integers(0, 2, 50_000 // scale, dtype=np.uint8)
    yield "lfsr_hash", f"{msg.size} bits", lambda b: (lambda: b.lfsr_hash(msg, 0x1B, 0x12345, 64))

    for n_in in (2_048, 16_384) if quick else (2_048, 16_384, 65_536):
        m = n_in // 2
        seed = rng.integers(0, 2, n_in + m - 1, dtype=np.uint8)
        x = rng.integers(0, 2, n_in, dtype=np.uint8)
        yield "toeplitz_hash", f"n={n_in}, m={m}", lambda b, s=seed, x=x, m=m: (lambda: b.toeplitz_hash(s, x, m))

    n_slots = 5_000_000 // scale
    n_ev = n_slots // 200
    slots = np.sort(rng.choice(n_slots, n_ev, replace=False)).astype(np.int64)
    dets = rng.integers(0, 4, n_ev).astype(np.int64)
    causes = np.zeros(n_ev, dtype=np.int64)
    ap_u, ap_delay = rng.random(n_ev), rng.geometric(0.01, n_ev) - 1
    ex_u, ex_delay = rng.random(n_ev), rng.geometric(0.01, n_ev) - 1

    def dead(b):
        return lambda: b.dead_time_filter(slots, dets, causes, 625, 0.005, ap_u, ap_delay, ex_u, ex_delay,
                                          n_slots, 4, 4)

    yield "dead_time_filter", f"{n_ev} events", dead


def _fft_crossover(repeat, quick):
    """Word-packed loop against the FFT product around the dispatch cutoff."""
    if "compiled" not in kernels.BACKENDS:
        return
    rng = np.random.default_rng(2)
    compiled = kernels.BACKENDS["compiled"]
    sizes = (1 << 14, 1 << 16) if quick else (1 << 14, 1 << 16, 1 << 17, 400_000)
    print(f"\ntoeplitz dispatch (cutoff {kernels.TOEPLITZ_FFT_CUTOFF:.3g} entries)")
    for n in sizes:
        m = int(0.6 * n)
        seed = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
        x = rng.integers(0, 2, n, dtype=np.uint8)
        t_loop = _best(lambda: compiled.toeplitz_hash(seed, x, m), repeat)
        t_fft = _best(lambda: _purepy.toeplitz_hash(seed, x, m), repeat)
        side = "fft" if m * n > kernels.TOEPLITZ_FFT_CUTOFF else "loop"
        print(f"  n={n:>7} m={m:>7} entries={m * n:9.3g}  loop {t_loop * 1e3:9.2f} ms  "
              f"fft {t_fft * 1e3:9.2f} ms  dispatch={side}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller inputs")
    args = ap.parse_args(argv)

    names = sorted(kernels.BACKENDS)
    print(f"backends: {', '.join(names)} (active: {kernels.BACKEND})")
    if "compiled" not in names:
        print("compiled extension not built; timing the fallback only", file=sys.stderr)
    for kernel, label, make in _cases(args.quick):
        times = {name: _best(make(kernels.BACKENDS[name]), args.repeat) for name in names}
        cols = "  ".join(f"{name} {t * 1e3:9.3f} ms" for name, t in times.items())
        speed = f"  x{times['purepy'] / times['compiled']:.1f}" if "compiled" in times else ""
        print(f"{kernel:<22} {label:<20} {cols}{speed}")
    _fft_crossover(args.repeat, args.quick)


if __name__ == "__main__":
    main()
