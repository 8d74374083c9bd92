"""Vectorised numpy implementation of the pulse kernels.

Mirrors ``_kernels.pyx`` operation for operation so both backends draw the
same random numbers and, up to libm rounding, the same clicks.

Random stream: a counter-based SplitMix64. Round ``r`` owns the state
``s_r = mix(key + r * GOLDEN)`` and its ``k``-th uniform is
``mix(s_r + (k + 1) * GOLDEN) >> 11`` scaled to [0, 1). Draw slots:
0-2 Alice (basis, bit, intensity), 3-5 Bob, 6 relative phase, 7-10 clicks
for (detector 0, early), (0, late), (1, early), (1, late).
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0x632BE59BD9B4E019)
_TWO_PI = 6.283185307179586
_INV53 = 1.0 / 9007199254740992.0


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int) -> np.uint64:
    with np.errstate(over="ignore"):
        return _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * GOLDEN + _SEED_SALT)


def round_states(seed: int, start: int, n: int) -> np.ndarray:
    key = stream_key(seed)
    idx = np.arange(n, dtype=np.uint64) + np.uint64(start)
    with np.errstate(over="ignore"):
        return _mix(key + idx * GOLDEN)


def uniforms(states: np.ndarray, slot: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = _mix(states + np.uint64(slot + 1) * GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


def draw_choices(seed, start, n, p_z, p_signal, p_decoy, offset):
    """Basis, bit and intensity index arrays for one End Node."""
    s = round_states(seed, start, n)
    basis = (uniforms(s, offset) >= p_z).astype(np.uint8)
    bit = (uniforms(s, offset + 1) >= 0.5).astype(np.uint8)
    u = uniforms(s, offset + 2)
    intensity = np.where(u < p_signal, 0, np.where(u < p_signal + p_decoy, 1, 2)).astype(np.uint8)
    return basis, bit, intensity


def measure(seed, start, pulses_a, pulses_b, overlap, nu):
    """psi-minus flags for arriving pulses, arrays of shape ``(n, 2)`` complex."""
    n = pulses_a.shape[0]
    s = round_states(seed, start, n)
    theta = _TWO_PI * uniforms(s, 6)
    c = np.cos(theta)
    sn = np.sin(theta)
    so = np.sqrt(overlap)
    ar, ai = pulses_a.real, pulses_a.imag
    br, bi = pulses_b.real, pulses_b.imag
    # b * exp(i theta)
    rr = br * c[:, None] - bi * sn[:, None]
    ri = br * sn[:, None] + bi * c[:, None]
    cross = so * (ar * rr + ai * ri)
    base = 0.5 * (ar * ar + ai * ai + br * br + bi * bi)
    p1 = -np.expm1(-(base + cross + nu))
    p2 = -np.expm1(-(base - cross + nu))
    k1e = uniforms(s, 7) < p1[:, 0]
    k1l = uniforms(s, 8) < p1[:, 1]
    k2e = uniforms(s, 9) < p2[:, 0]
    k2l = uniforms(s, 10) < p2[:, 1]
    psi = (k1e & k2l & ~k1l & ~k2e) | (k1l & k2e & ~k1e & ~k2l)
    return psi.astype(np.uint8)


def simulate_counts(seed, start, n, amp_a, amp_b, probs_a, probs_b, overlap, nu):
    """Per-cell ``(sent, psi_minus, errors)`` counts, shape ``(2, 3, 3, 3)`` int64.

    ``amp_a``/``amp_b`` are arriving amplitudes indexed
    ``[basis, bit, intensity, bin]``; ``probs`` are ``(p_z, p_signal, p_decoy)``.
    """
    ba, ta, ia = draw_choices(seed, start, n, probs_a[0], probs_a[1], probs_a[2], 0)
    bb, tb, ib = draw_choices(seed, start, n, probs_b[0], probs_b[1], probs_b[2], 3)
    pa = amp_a[ba, ta, ia]
    pb = amp_b[bb, tb, ib]
    psi = measure(seed, start, pa, pb, overlap, nu).astype(bool)
    counts = np.zeros((2, 3, 3, 3), dtype=np.int64)
    same = ba == bb
    cell = (ba.astype(np.int64) * 3 + ia) * 3 + ib
    err = psi & (ta == tb)
    counts[..., 0] = np.bincount(cell[same], minlength=18).reshape(2, 3, 3)
    counts[..., 1] = np.bincount(cell[same & psi], minlength=18).reshape(2, 3, 3)
    counts[..., 2] = np.bincount(cell[same & err], minlength=18).reshape(2, 3, 3)
    return counts
