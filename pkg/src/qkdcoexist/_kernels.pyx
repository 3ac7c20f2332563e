# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_purepy``; outputs are bit-identical."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t, uint8_t

cnp.import_array()

cdef uint64_t CRC64_ECMA_POLY = 0x42F0E1EBA9EA3693ULL
cdef uint64_t _TABLE[256]


cdef void _init_table():
    cdef int byte, _
    cdef uint64_t crc
    for byte in range(256):
        crc = (<uint64_t>byte) << 56
        for _ in range(8):
            if crc & (1ULL << 63):
                crc = (crc << 1) ^ CRC64_ECMA_POLY
            else:
                crc = crc << 1
        _TABLE[byte] = crc


_init_table()


def crc64(data, crc=0):
    cdef const uint8_t[:] buf = np.frombuffer(bytes(data), dtype=np.uint8)
    cdef uint64_t c = <uint64_t>crc
    cdef Py_ssize_t i, n = buf.shape[0]
    for i in range(n):
        c = _TABLE[((c >> 56) ^ buf[i]) & 0xFF] ^ (c << 8)
    return int(c)


cdef extern from *:
    int __builtin_parityll(unsigned long long) nogil


cdef inline int _parity64(uint64_t v) nogil:
    return __builtin_parityll(v)


def toeplitz_hash(seed, x, Py_ssize_t m):
    """Word-packed Toeplitz product; row i is the bit window t[m-1-i : m-1-i+n]."""
    x_arr = np.ascontiguousarray(x, dtype=np.uint8)
    seed_arr = np.ascontiguousarray(seed, dtype=np.uint8)
    cdef Py_ssize_t n = x_arr.shape[0]
    out = np.zeros(m, dtype=np.uint8)
    if m == 0 or n == 0:
        return out
    t_arr = np.concatenate([seed_arr[n:][::-1], seed_arr[:n]]).astype(np.uint8)
    cdef Py_ssize_t tlen = t_arr.shape[0]
    cdef Py_ssize_t nw = (n + 63) // 64
    # x packed little-endian within words: bit b of word w is x[64 w + b]
    cdef cnp.ndarray[uint64_t, ndim=1] xw = np.zeros(nw, dtype=np.uint64)
    cdef const uint8_t[:] xv = x_arr
    cdef const uint8_t[:] tv = t_arr
    cdef uint8_t[:] ov = out
    cdef Py_ssize_t i, j, w, b, base
    for j in range(n):
        if xv[j]:
            xw[j >> 6] |= (1ULL << (j & 63))
    # tw[p] holds bits t[p .. p+63] (bit b = t[p + b]); built for every start p
    cdef cnp.ndarray[uint64_t, ndim=1] tw = np.zeros(tlen + 64, dtype=np.uint64)
    cdef uint64_t acc
    cdef cnp.ndarray[uint64_t, ndim=1] tpad = np.zeros(tlen + 64, dtype=np.uint64)
    for j in range(tlen):
        tpad[j] = tv[j]
    # rolling window: tw[p] = sum_b tpad[p+b] << b
    acc = 0
    for b in range(64):
        acc |= tpad[b] << b
    tw[0] = acc
    for j in range(1, tlen):
        acc = (acc >> 1) | (tpad[j + 63] << 63)
        tw[j] = acc
    cdef uint64_t par
    with nogil:
        for i in range(m):
            base = m - 1 - i
            par = 0
            for w in range(nw):
                par ^= tw[base + 64 * w] & xw[w]
            ov[i] = _parity64(par)
    return out


def lfsr_hash(msg, uint64_t poly, uint64_t state, int width):
    cdef const uint8_t[:] mv = np.ascontiguousarray(msg, dtype=np.uint8)
    cdef uint64_t mask = (~0ULL) if width == 64 else ((1ULL << width) - 1)
    cdef uint64_t s = state & mask
    cdef uint64_t acc = 0
    cdef uint64_t fb
    cdef int top = width - 1
    cdef Py_ssize_t j, n = mv.shape[0]
    with nogil:
        for j in range(n):
            if mv[j]:
                acc ^= s
            fb = _parity64(s & poly)
            s = (s >> 1) | (fb << top)
    return int(acc)


def block_parity_syndrome(bits, int k):
    cdef const uint8_t[:] bv = np.ascontiguousarray(bits, dtype=np.uint8)
    cdef Py_ssize_t bs = 1 << k
    cdef Py_ssize_t nb = bv.shape[0] // bs
    parity = np.zeros(nb, dtype=np.uint8)
    syndrome = np.zeros(nb, dtype=np.int64)
    cdef uint8_t[:] pv = parity
    cdef int64_t[:] sv = syndrome
    cdef Py_ssize_t blk, p, off
    cdef int par
    cdef int64_t syn
    with nogil:
        for blk in range(nb):
            off = blk * bs
            par = 0
            syn = 0
            for p in range(bs):
                if bv[off + p]:
                    par ^= 1
                    syn ^= p
            pv[blk] = par
            sv[blk] = syn
    return parity, syndrome


def dead_time_filter(slots, dets, causes, int64_t dead_slots, double ap_prob,
                     ap_u, ap_delay, extra_u, extra_delay, int64_t n_slots,
                     int n_det, int ap_cause):
    cdef const int64_t[:] sv = np.ascontiguousarray(slots, dtype=np.int64)
    cdef const int64_t[:] dv = np.ascontiguousarray(dets, dtype=np.int64)
    cdef const int64_t[:] cv = np.ascontiguousarray(causes, dtype=np.int64)
    cdef const double[:] uv = np.ascontiguousarray(ap_u, dtype=np.float64)
    cdef const int64_t[:] lv = np.ascontiguousarray(ap_delay, dtype=np.int64)
    cdef const double[:] xu = np.ascontiguousarray(extra_u, dtype=np.float64)
    cdef const int64_t[:] xl = np.ascontiguousarray(extra_delay, dtype=np.int64)
    cdef Py_ssize_t n_ev = sv.shape[0]
    cdef Py_ssize_t n_extra = xu.shape[0]
    cdef Py_ssize_t cap = 2 * n_ev + n_extra + 16
    out_s_arr = np.empty(cap, dtype=np.int64)
    out_d_arr = np.empty(cap, dtype=np.int64)
    out_c_arr = np.empty(cap, dtype=np.int64)
    cdef int64_t[:] os = out_s_arr
    cdef int64_t[:] od = out_d_arr
    cdef int64_t[:] oc = out_c_arr
    last_arr = np.full(n_det, -(1 << 62), dtype=np.int64)
    pend_arr = np.full(n_det, -1, dtype=np.int64)
    cdef int64_t[:] last = last_arr
    cdef int64_t[:] pend = pend_arr
    cdef int64_t gap = dead_slots if dead_slots > 1 else 1
    cdef Py_ssize_t nout = 0, extra_i = 0, e
    cdef int64_t s, ps, d, upto
    cdef double u
    cdef int64_t delay
    with nogil:
        for e in range(n_ev + n_det):
            if e < n_ev:
                s = sv[e]
                d = dv[e]
                upto = s
            else:
                d = e - n_ev
                upto = n_slots - 1
            # flush pending afterpulses on this detector up to `upto`
            while pend[d] >= 0 and pend[d] <= upto:
                ps = pend[d]
                pend[d] = -1
                if ps < n_slots and ps - last[d] >= gap:
                    if extra_i < n_extra:
                        u = xu[extra_i]
                        delay = xl[extra_i]
                        extra_i += 1
                    else:
                        u = 1.0
                        delay = 0
                    os[nout] = ps
                    od[nout] = d
                    oc[nout] = ap_cause
                    nout += 1
                    last[d] = ps
                    if u < ap_prob:
                        pend[d] = ps + dead_slots + delay
                    else:
                        pend[d] = -1
            if e < n_ev and s - last[d] >= gap:
                os[nout] = s
                od[nout] = d
                oc[nout] = cv[e]
                nout += 1
                last[d] = s
                if uv[e] < ap_prob:
                    pend[d] = s + dead_slots + lv[e]
                else:
                    pend[d] = -1
    return out_s_arr[:nout].copy(), out_d_arr[:nout].copy(), out_c_arr[:nout].copy()
