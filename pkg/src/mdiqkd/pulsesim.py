"""Pulse-by-pulse Monte Carlo of the three-node link.

Every round draws both End Nodes' choices, a uniform relative laser phase and
four independent click decisions from a counter-based stream keyed by
``(seed, round_index)``. Because no state is carried between rounds, any
partition of the rounds across threads reproduces the same counts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import backend
from .forward import ScenarioConfig, _node_amplitudes, coincidence_rule
from .model import Basis, BsmOutcome, GainTable, Intensity

CHUNK = 1 << 18


@dataclass(frozen=True)
class Choice:
    basis: Basis
    bit: int
    intensity: Intensity


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    alice_choice: Choice
    bob_choice: Choice
    outcome: BsmOutcome


@dataclass(frozen=True)
class SimSummary:
    """Per-cell ``(sent, psi_minus, errors)`` counts, shape ``(2, 3, 3, 3)``."""

    rounds: int
    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.shape != (2, 3, 3, 3):
            raise ValueError("counts must have shape (2, 3, 3, 3)")
        sent, psi, err = counts[..., 0], counts[..., 1], counts[..., 2]
        if np.any(counts < 0) or sent.sum() > self.rounds or np.any(psi > sent) or np.any(err > psi):
            raise ValueError("inconsistent simulation counts")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def sent(self) -> np.ndarray:
        return self.counts[..., 0]

    @property
    def psi_minus(self) -> np.ndarray:
        return self.counts[..., 1]

    @property
    def errors(self) -> np.ndarray:
        return self.counts[..., 2]

    def merge(self, other: "SimSummary") -> "SimSummary":
        return SimSummary(self.rounds + other.rounds, self.counts + other.counts)

    def __eq__(self, other):
        if not isinstance(other, SimSummary):
            return NotImplemented
        return self.rounds == other.rounds and np.array_equal(self.counts, other.counts)


@dataclass(frozen=True)
class EmpiricalTable:
    table: GainTable
    gain_stderr: np.ndarray
    error_stderr: np.ndarray
    low_statistics: np.ndarray  # cells without any psi-minus event
    empty: np.ndarray  # cells never sent


def _kernel_args(scenario: ScenarioConfig):
    ta, tb = scenario.transmittances()
    amp_a = _node_amplitudes(scenario.alice, ta)
    amp_b = _node_amplitudes(scenario.bob, tb)
    pa = (scenario.alice.p_basis, scenario.alice.p_intensity[0], scenario.alice.p_intensity[1])
    pb = (scenario.bob.p_basis, scenario.bob.p_intensity[0], scenario.bob.p_intensity[1])
    return amp_a, amp_b, pa, pb, scenario.detection.overlap, scenario.detection.noise_mean


def simulate_round(scenario: ScenarioConfig, seed: int, round_index: int = 0, kernels=None) -> RoundRecord:
    """One round, replaying exactly what :func:`simulate_batch` draws for it."""
    k = kernels or backend.get()
    amp_a, amp_b, pa, pb, overlap, nu = _kernel_args(scenario)
    ba, ta, ia = (int(x[0]) for x in k.draw_choices(seed, round_index, 1, *pa, 0))
    bb, tb, ib = (int(x[0]) for x in k.draw_choices(seed, round_index, 1, *pb, 3))
    psi = k.measure(seed, round_index, amp_a[ba, ta, ia][None, :], amp_b[bb, tb, ib][None, :], overlap, nu)
    return RoundRecord(
        round_index,
        Choice(Basis(ba), ta, Intensity(ia)),
        Choice(Basis(bb), tb, Intensity(ib)),
        BsmOutcome(int(psi[0])),
    )


def _chunks(start: int, rounds: int, chunk: int):
    pos = start
    end = start + rounds
    while pos < end:
        n = min(chunk, end - pos)
        yield pos, n
        pos += n


def simulate_batch(
    scenario: ScenarioConfig,
    rounds: int,
    seed: int,
    start: int = 0,
    threads: int | None = None,
    kernels=None,
) -> SimSummary:
    """Aggregate ``rounds`` consecutive rounds beginning at ``start``."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if start < 0 or start + rounds > 2**63:
        raise ValueError("round indices must stay below 2**63")
    k = kernels or backend.get()
    args = _kernel_args(scenario)
    threads = threads or backend.thread_count()
    jobs = list(_chunks(start, rounds, CHUNK))

    def run(job):
        pos, n = job
        return k.simulate_counts(seed, pos, n, *args)

    if threads == 1 or len(jobs) == 1:
        parts = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, jobs))
    counts = np.zeros((2, 3, 3, 3), dtype=np.int64)
    for part in parts:  # fixed partition order
        counts += part
    return SimSummary(rounds, counts)


def empirical_gain_table(summary: SimSummary, *, strict: bool = False) -> EmpiricalTable:
    """Gains and QBERs with binomial standard errors.

    Cells with no psi-minus report ``E = 0.5`` and are flagged; cells never
    sent are flagged as ``empty`` (and raise when ``strict``).
    """
    sent = summary.sent.astype(float)
    psi = summary.psi_minus.astype(float)
    err = summary.errors.astype(float)
    empty = sent == 0
    if strict and np.any(empty):
        raise ValueError(f"{int(empty.sum())} cells were never sent")
    with np.errstate(invalid="ignore", divide="ignore"):
        Q = np.where(empty, 0.0, psi / np.where(empty, 1.0, sent))
        E = np.where(psi > 0, err / np.where(psi > 0, psi, 1.0), 0.5)
        q_se = np.where(empty, np.inf, np.sqrt(Q * (1 - Q) / np.where(empty, 1.0, sent)))
        e_se = np.where(psi > 0, np.sqrt(E * (1 - E) / np.where(psi > 0, psi, 1.0)), np.inf)
    return EmpiricalTable(GainTable(Q, E), q_se, e_se, psi == 0, empty)


def oracle_deviations(summary: SimSummary, model: GainTable, raw_err=None) -> tuple[np.ndarray, np.ndarray]:
    """Deviation of the empirical counts from model cells in binomial sigmas.

    Returns ``(gain_z, error_z)``; sigma comes from the model probability so
    that cells with tiny expected counts are judged fairly.
    """
    sent = summary.sent.astype(float)
    psi = summary.psi_minus.astype(float)
    err = summary.errors.astype(float)
    Q = model.Q
    E = model.E
    gain_z = np.zeros_like(Q)
    error_z = np.zeros_like(Q)
    for idx in np.ndindex(Q.shape):
        n, q = sent[idx], Q[idx]
        if n > 0:
            sd = math.sqrt(max(n * q * (1 - q), 1e-300))
            gain_z[idx] = (psi[idx] - n * q) / sd if q > 0 else (0.0 if psi[idx] == 0 else math.inf)
        if psi[idx] > 0:
            e = E[idx]
            sd = math.sqrt(max(psi[idx] * e * (1 - e), 1e-300))
            error_z[idx] = (err[idx] - psi[idx] * e) / sd if 0 < e < 1 else (0.0 if err[idx] == psi[idx] * e else math.inf)
    return gain_z, error_z


def expected_sent(scenario: ScenarioConfig, rounds: int) -> np.ndarray:
    """Expected sent counts per cell from the choice probabilities."""
    pz_a, pz_b = scenario.alice.p_basis, scenario.bob.p_basis
    basis_w = np.array([pz_a * pz_b, (1 - pz_a) * (1 - pz_b)])
    ia = np.array(scenario.alice.p_intensity)
    ib = np.array(scenario.bob.p_intensity)
    return rounds * basis_w[:, None, None] * ia[None, :, None] * ib[None, None, :]


def verify_round(record: RoundRecord, clicks) -> bool:
    """Consistency of a record's outcome with a click pattern."""
    return coincidence_rule(clicks) == record.outcome
