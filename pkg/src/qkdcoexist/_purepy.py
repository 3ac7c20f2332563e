"""Reference (numpy / pure Python) implementations of the hot kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature
and bit-exact output. ``qkdcoexist.kernels`` picks one at import time.
"""

import numpy as np

CRC64_ECMA_POLY = 0x42F0E1EBA9EA3693
_MASK64 = (1 << 64) - 1


def _crc64_table():
    table = []
    for byte in range(256):
        crc = byte << 56
        for _ in range(8):
            if crc & (1 << 63):
                crc = ((crc << 1) ^ CRC64_ECMA_POLY) & _MASK64
            else:
                crc = (crc << 1) & _MASK64
        table.append(crc)
    return table


_TABLE = _crc64_table()


def crc64(data, crc=0):
    """CRC-64/ECMA-182: MSB-first, init 0, no final xor."""
    table = _TABLE
    for byte in bytes(data):
        crc = table[((crc >> 56) ^ byte) & 0xFF] ^ ((crc << 8) & _MASK64)
    return crc


def toeplitz_hash(seed, x, m):
    """m x n Toeplitz product over GF(2) via FFT correlation.

    Row 0 of the matrix is ``seed[:n]``; entries below the diagonal come from
    ``seed[n:]`` so that ``T[i, 0] = seed[n + i - 1]`` for ``i >= 1``.
    """
    x = np.asarray(x, dtype=np.uint8)
    seed = np.asarray(seed, dtype=np.uint8)
    n = x.size
    if m == 0 or n == 0:
        return np.zeros(m, dtype=np.uint8)
    # t[d + m - 1] is the entry on diagonal d = j - i, d in [-(m-1), n-1]
    t = np.concatenate([seed[n:][::-1], seed[:n]]).astype(np.float64)
    size = 1
    while size < t.size + n:
        size <<= 1
    # out[i] = sum_j t[j - i + m - 1] x[j]: correlate t with x
    ft = np.fft.rfft(t, size)
    fx = np.fft.rfft(x[::-1].astype(np.float64), size)
    full = np.fft.irfft(ft * fx, size)
    # correlation lag for row i lands at index (n - 1) + (m - 1) - i
    idx = (n - 1) + (m - 1) - np.arange(m)
    counts = np.rint(full[idx]).astype(np.int64)
    return (counts & 1).astype(np.uint8)


def lfsr_hash(msg, poly, state, width):
    """XOR of the successive LFSR states selected by the message bits.

    ``poly`` holds the low ``width`` feedback coefficients (bit i = c_i) and
    ``state`` the initial window (bit i = s_i). Returns the hash as an int.
    """
    mask = (1 << width) - 1
    acc = 0
    s = state & mask
    top = width - 1
    for bit in np.asarray(msg, dtype=np.uint8).tolist():
        if bit:
            acc ^= s
        fb = bin(s & poly).count("1") & 1
        s = (s >> 1) | (fb << top)
    return acc


def block_parity_syndrome(bits, k):
    """Parity and position-XOR syndrome for consecutive 2**k-bit blocks."""
    bits = np.asarray(bits, dtype=np.uint8)
    bs = 1 << k
    nb = bits.size // bs
    blocks = bits[: nb * bs].reshape(nb, bs)
    parity = (blocks.sum(axis=1, dtype=np.int64) & 1).astype(np.uint8)
    if nb == 0:
        return parity, np.zeros(0, dtype=np.int64)
    pos = np.arange(bs, dtype=np.int64)
    syndrome = np.bitwise_xor.reduce(np.where(blocks == 1, pos, 0), axis=1)
    return parity, syndrome.astype(np.int64)


def dead_time_filter(slots, dets, causes, dead_slots, ap_prob, ap_u, ap_delay,
                     extra_u, extra_delay, n_slots, n_det, ap_cause):
    """Sequential per-detector dead-time veto with afterpulse injection.

    Candidate events must be sorted by slot. A registered click on a detector
    blocks that detector for ``dead_slots`` slots (minimum one: a detector
    clicks at most once per slot) and, with probability ``ap_prob``, schedules
    one afterpulse at ``slot + dead_slots + delay``. A detector holds at most
    one pending afterpulse; a newer registered click replaces it. Cascaded
    afterpulses draw from ``extra_u`` / ``extra_delay`` in order.
    """
    gap = max(int(dead_slots), 1)
    last = [-(1 << 62)] * n_det
    pend = [-1] * n_det
    out_s, out_d, out_c = [], [], []
    extra_i = 0
    n_extra = len(extra_u)

    def register(s, d, c, u, delay):
        out_s.append(s)
        out_d.append(d)
        out_c.append(c)
        last[d] = s
        if u < ap_prob:
            pend[d] = s + dead_slots + delay
        else:
            pend[d] = -1

    def flush(d, upto):
        nonlocal extra_i
        while 0 <= pend[d] <= upto:
            ps = pend[d]
            pend[d] = -1
            if ps < n_slots and ps - last[d] >= gap:
                if extra_i < n_extra:
                    u, delay = extra_u[extra_i], int(extra_delay[extra_i])
                    extra_i += 1
                else:
                    u, delay = 1.0, 0
                register(ps, d, ap_cause, u, delay)

    slots_l = np.asarray(slots).tolist()
    dets_l = np.asarray(dets).tolist()
    causes_l = np.asarray(causes).tolist()
    u_l = np.asarray(ap_u).tolist()
    delay_l = np.asarray(ap_delay).tolist()
    for e in range(len(slots_l)):
        s, d = slots_l[e], dets_l[e]
        flush(d, s)
        if s - last[d] >= gap:
            register(s, d, causes_l[e], u_l[e], delay_l[e])
    for d in range(n_det):
        flush(d, n_slots - 1)
    return (np.asarray(out_s, dtype=np.int64),
            np.asarray(out_d, dtype=np.int64),
            np.asarray(out_c, dtype=np.int64))
