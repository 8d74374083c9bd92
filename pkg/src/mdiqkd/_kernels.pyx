# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pulse kernels. Same stream layout and arithmetic as _pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, expm1
from libc.stdint cimport uint64_t, int64_t, uint8_t

cnp.import_array()

BACKEND = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef uint64_t SEED_SALT = 0x632BE59BD9B4E019ULL
cdef double TWO_PI = 6.283185307179586
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


cdef inline double unif(uint64_t state, int slot) noexcept nogil:
    return <double>(mix(state + <uint64_t>(slot + 1) * GOLDEN) >> 11) * INV53


cdef inline uint64_t key_of(object seed):
    cdef uint64_t s = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    return mix(s * GOLDEN + SEED_SALT)


cdef inline void choose(uint64_t st, int offset, double pz, double ps, double pd,
                        int* basis, int* bit, int* inten) noexcept nogil:
    cdef double u
    basis[0] = 1 if unif(st, offset) >= pz else 0
    bit[0] = 1 if unif(st, offset + 1) >= 0.5 else 0
    u = unif(st, offset + 2)
    if u < ps:
        inten[0] = 0
    elif u < ps + pd:
        inten[0] = 1
    else:
        inten[0] = 2


cdef inline int herald(uint64_t st, double ar0, double ai0, double ar1, double ai1,
                       double br0, double bi0, double br1, double bi1,
                       double so, double nu) noexcept nogil:
    cdef double theta = TWO_PI * unif(st, 6)
    cdef double c = cos(theta)
    cdef double s = sin(theta)
    cdef double rr, ri, cross, base, p1e, p1l, p2e, p2l
    cdef bint k1e, k1l, k2e, k2l
    # early bin
    rr = br0 * c - bi0 * s
    ri = br0 * s + bi0 * c
    cross = so * (ar0 * rr + ai0 * ri)
    base = 0.5 * (ar0 * ar0 + ai0 * ai0 + br0 * br0 + bi0 * bi0)
    p1e = -expm1(-(base + cross + nu))
    p2e = -expm1(-(base - cross + nu))
    # late bin
    rr = br1 * c - bi1 * s
    ri = br1 * s + bi1 * c
    cross = so * (ar1 * rr + ai1 * ri)
    base = 0.5 * (ar1 * ar1 + ai1 * ai1 + br1 * br1 + bi1 * bi1)
    p1l = -expm1(-(base + cross + nu))
    p2l = -expm1(-(base - cross + nu))
    k1e = unif(st, 7) < p1e
    k1l = unif(st, 8) < p1l
    k2e = unif(st, 9) < p2e
    k2l = unif(st, 10) < p2l
    return 1 if ((k1e and k2l and not k1l and not k2e) or (k1l and k2e and not k1e and not k2l)) else 0


def draw_choices(seed, start, Py_ssize_t n, double p_z, double p_signal, double p_decoy, int offset):
    cdef uint64_t key = key_of(seed)
    cdef uint64_t base = <uint64_t>start
    cdef cnp.ndarray[uint8_t] basis = np.empty(n, dtype=np.uint8)
    cdef cnp.ndarray[uint8_t] bit = np.empty(n, dtype=np.uint8)
    cdef cnp.ndarray[uint8_t] inten = np.empty(n, dtype=np.uint8)
    cdef uint8_t[::1] vb = basis, vt = bit, vi = inten
    cdef Py_ssize_t r
    cdef int b, t, i
    cdef uint64_t st
    with nogil:
        for r in range(n):
            st = mix(key + (base + <uint64_t>r) * GOLDEN)
            choose(st, offset, p_z, p_signal, p_decoy, &b, &t, &i)
            vb[r] = b
            vt[r] = t
            vi[r] = i
    return basis, bit, inten


def measure(seed, start, pulses_a, pulses_b, double overlap, double nu):
    cdef double[:, ::1] pa = np.ascontiguousarray(pulses_a, dtype=np.complex128).view(np.float64)
    cdef double[:, ::1] pb = np.ascontiguousarray(pulses_b, dtype=np.complex128).view(np.float64)
    cdef Py_ssize_t n = pa.shape[0]
    cdef uint64_t key = key_of(seed)
    cdef uint64_t base = <uint64_t>start
    cdef double so = sqrt(overlap)
    out = np.empty(n, dtype=np.uint8)
    cdef uint8_t[::1] vo = out
    cdef Py_ssize_t r
    cdef uint64_t st
    with nogil:
        for r in range(n):
            st = mix(key + (base + <uint64_t>r) * GOLDEN)
            vo[r] = herald(st, pa[r, 0], pa[r, 1], pa[r, 2], pa[r, 3],
                           pb[r, 0], pb[r, 1], pb[r, 2], pb[r, 3], so, nu)
    return out


def simulate_counts(seed, start, Py_ssize_t n, amp_a, amp_b, probs_a, probs_b, double overlap, double nu):
    cdef double[:, :, :, ::1] A = np.ascontiguousarray(amp_a, dtype=np.complex128).view(np.float64)
    cdef double[:, :, :, ::1] B = np.ascontiguousarray(amp_b, dtype=np.complex128).view(np.float64)
    cdef double pza = probs_a[0], psa = probs_a[1], pda = probs_a[2]
    cdef double pzb = probs_b[0], psb = probs_b[1], pdb = probs_b[2]
    counts = np.zeros((2, 3, 3, 3), dtype=np.int64)
    cdef int64_t[:, :, :, ::1] C = counts
    cdef uint64_t key = key_of(seed)
    cdef uint64_t base = <uint64_t>start
    cdef double so = sqrt(overlap)
    cdef Py_ssize_t r
    cdef uint64_t st
    cdef int ba, ta, ia, bb, tb, ib, psi
    with nogil:
        for r in range(n):
            st = mix(key + (base + <uint64_t>r) * GOLDEN)
            choose(st, 0, pza, psa, pda, &ba, &ta, &ia)
            choose(st, 3, pzb, psb, pdb, &bb, &tb, &ib)
            if ba != bb:
                continue
            C[ba, ia, ib, 0] += 1
            psi = herald(st, A[ba, ta, ia, 0], A[ba, ta, ia, 1], A[ba, ta, ia, 2], A[ba, ta, ia, 3],
                         B[bb, tb, ib, 0], B[bb, tb, ib, 1], B[bb, tb, ib, 2], B[bb, tb, ib, 3], so, nu)
            if psi:
                C[ba, ia, ib, 1] += 1
                if ta == tb:
                    C[ba, ia, ib, 2] += 1
    return counts
