"""Analytic gains and QBERs of the Bell-state measurement.

Alice's and Bob's weak coherent time-bin pulses meet on a 50:50 beam
splitter. Bob's field is split into a component matched to Alice's mode
(amplitude scaled by ``sqrt(overlap)``) that interferes with relative phase
``theta`` and an orthogonal remainder that adds incoherently. Each of the four
(detector, bin) windows is a threshold detector with Poissonian light plus
Poissonian noise, and a psi-minus is heralded on exactly one click per
detector in opposite bins. The unknown relative phase of the two free-running
lasers is averaged over a uniform grid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .model import (
    Basis,
    BsmOutcome,
    DetectionConfig,
    GainTable,
    Intensity,
    LinkConfig,
    QubitSpec,
    SourceConfig,
    db_to_transmittance,
)

DEFAULT_ORDER = 64
MAX_ORDER = 4096
CONVERGENCE_RTOL = 1e-10


class QuadratureError(RuntimeError):
    """Phase quadrature failed to converge below the order cap."""


@dataclass(frozen=True)
class ScenarioConfig:
    alice: SourceConfig
    bob: SourceConfig
    link: LinkConfig
    detection: DetectionConfig

    def with_loss(self, total_db: float, asymmetry_db: float | None = None) -> "ScenarioConfig":
        """Same scenario at another total loss, keeping the Alice/Bob asymmetry."""
        if asymmetry_db is None:
            asymmetry_db = self.link.loss_db_alice - self.link.loss_db_bob
        return replace(self, link=LinkConfig.split(total_db, asymmetry_db))

    def transmittances(self) -> tuple[float, float]:
        eta = self.detection.det_efficiency
        return (
            db_to_transmittance(self.link.loss_db_alice) * eta,
            db_to_transmittance(self.link.loss_db_bob) * eta,
        )


@dataclass(frozen=True)
class CellProbabilities:
    gain: float
    error_rate: float


def pulse_amplitudes(spec: QubitSpec, mu: float) -> tuple[complex, complex]:
    """Early and late coherent amplitudes of a pulse with mean photon number ``mu``."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    early = math.sqrt(mu * spec.m)
    late = math.sqrt(mu * (1.0 - spec.m)) * complex(math.cos(spec.phi), math.sin(spec.phi))
    return complex(early), late


def beamsplitter_intensities(alice_amp, bob_amp, overlap: float, theta: float) -> np.ndarray:
    """Mean photon numbers ``[detector, bin]`` behind the beam splitter.

    ``alice_amp`` and ``bob_amp`` hold the (early, late) amplitudes arriving
    at the beam splitter. Detector 0 is the "+" output, detector 1 the "-".
    """
    if not 0.0 <= overlap <= 1.0:
        raise ValueError("overlap must lie in [0, 1]")
    a = np.asarray(alice_amp, dtype=complex)
    b = np.asarray(bob_amp, dtype=complex)
    matched = math.sqrt(overlap) * np.exp(1j * theta) * b
    orth = 0.5 * (1.0 - overlap) * np.abs(b) ** 2
    d1 = 0.5 * np.abs(a + matched) ** 2 + orth
    d2 = 0.5 * np.abs(a - matched) ** 2 + orth
    return np.stack([d1, d2])


def click_probability(mean_photons, noise_mean):
    """Threshold-detector click probability for Poissonian light plus noise."""
    total = np.add(mean_photons, noise_mean)
    if np.any(total < 0):
        raise ValueError("photon and noise means must be >= 0")
    out = -np.expm1(-total)
    return float(out) if np.ndim(out) == 0 else out


def coincidence_rule(clicks) -> BsmOutcome:
    """psi-minus iff each detector clicked in exactly one bin and the bins differ."""
    c = np.asarray(clicks, dtype=bool)
    if c.shape != (2, 2):
        raise ValueError("clicks must be a 2x2 (detector, bin) array")
    if c[0].sum() == 1 and c[1].sum() == 1 and c[0, 0] != c[1, 0]:
        return BsmOutcome.PSI_MINUS
    return BsmOutcome.NO_DETECTION


def _node_amplitudes(source: SourceConfig, transmittance: float) -> np.ndarray:
    """Amplitudes at the beam splitter, shape ``(basis, bit, intensity, bin)``."""
    amp = np.zeros((2, 2, 3, 2), dtype=complex)
    for b in Basis:
        for bit in (0, 1):
            for i in Intensity:
                e, l = pulse_amplitudes(source.spec(b, bit, i), source.mu[i] * transmittance)
                amp[b, bit, i] = (e, l)
    return amp


def _psi_minus(alpha, beta, overlap: float, nu: float, theta):
    """psi-minus probability for broadcast amplitude arrays ``(..., bin)``.

    ``theta`` broadcasts against the leading axes; the result has the
    broadcast shape without the bin axis.
    """
    phase = np.exp(1j * np.asarray(theta))[..., None]
    cross = math.sqrt(overlap) * np.real(np.conj(alpha) * beta * phase)
    base = 0.5 * (np.abs(alpha) ** 2 + np.abs(beta) ** 2)
    p1 = -np.expm1(-(base + cross + nu))
    p2 = -np.expm1(-(base - cross + nu))
    q1 = 1.0 - p1
    q2 = 1.0 - p2
    early, late = 0, 1
    return (
        p1[..., early] * p2[..., late] * q1[..., late] * q2[..., early]
        + p1[..., late] * p2[..., early] * q1[..., early] * q2[..., late]
    )


def _table_at_order(alpha, beta, overlap, nu, order):
    """Gain and error probability arrays ``(basis, ia, ib)`` at a quadrature order."""
    theta = 2.0 * np.pi * np.arange(order) / order
    # axes: basis, bit_a, bit_b, ia, ib, theta, bin
    a = alpha[:, :, None, :, None, None, :]
    b = beta[:, None, :, None, :, None, :]
    psi = _psi_minus(a, b, overlap, nu, theta[None, None, None, None, None, :]).mean(axis=-1)
    gain = psi.mean(axis=(1, 2))
    same = np.array([[1.0, 0.0], [0.0, 1.0]])
    err = (psi * same[None, :, :, None, None]).sum(axis=(1, 2)) / 4.0
    return gain, err


def _converged_table(scenario: ScenarioConfig, order: int):
    ta, tb = scenario.transmittances()
    alpha = _node_amplitudes(scenario.alice, ta)
    beta = _node_amplitudes(scenario.bob, tb)
    overlap = scenario.detection.overlap
    nu = scenario.detection.noise_mean
    gain, err = _table_at_order(alpha, beta, overlap, nu, order)
    while True:
        gain2, err2 = _table_at_order(alpha, beta, overlap, nu, 2 * order)
        scale_g = np.maximum(np.abs(gain2), 1e-300)
        scale_e = np.maximum(np.abs(err2), 1e-300)
        if np.all(np.abs(gain2 - gain) <= CONVERGENCE_RTOL * scale_g) and np.all(
            np.abs(err2 - err) <= CONVERGENCE_RTOL * scale_e
        ):
            return gain, err
        order *= 2
        if 2 * order > MAX_ORDER:
            raise QuadratureError(f"phase quadrature not converged at order {order}")
        gain, err = gain2, err2


def _error_rates(scenario: ScenarioConfig, gain, err) -> np.ndarray:
    E = np.empty_like(gain)
    for b, ia, ib in itertools.product(Basis, Intensity, Intensity):
        dark_side = scenario.alice.mu[ia] == 0.0 or scenario.bob.mu[ib] == 0.0
        if gain[b, ia, ib] <= 0.0 or dark_side:
            # a silent side carries no bit correlation
            E[b, ia, ib] = 0.5
        else:
            E[b, ia, ib] = min(max(err[b, ia, ib] / gain[b, ia, ib], 0.0), 1.0)
    return E


def cell_probabilities(
    scenario: ScenarioConfig, basis: Basis, ia: Intensity, ib: Intensity, order: int = DEFAULT_ORDER
) -> CellProbabilities:
    table = full_gain_table(scenario, order=order)
    return CellProbabilities(table.gain(basis, ia, ib), table.error(basis, ia, ib))


def full_gain_table(scenario: ScenarioConfig, order: int = DEFAULT_ORDER) -> GainTable:
    """All 18 cells, with the quadrature order doubled until converged."""
    gain, err = _converged_table(scenario, order)
    gain = np.clip(gain, 0.0, 1.0)
    return GainTable(gain, _error_rates(scenario, gain, err))


def raw_gain_table(scenario: ScenarioConfig, order: int = DEFAULT_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Gain and error-event probabilities without the 0.5 reporting convention."""
    return _converged_table(scenario, order)


# -- single-photon pair reference -------------------------------------------------


def _normalised(spec: QubitSpec) -> np.ndarray:
    return np.array(pulse_amplitudes(spec, 1.0))


def _pair_outcomes(psi_a, psi_b, overlap):
    """Distribution of photon positions for one photon from each side.

    Returns a list of ``(probability, cells)`` where cells is a tuple of
    ``(detector, bin)`` hits. Partial distinguishability is a mixture of the
    fully indistinguishable and fully distinguishable cases.
    """
    cells = [(d, t) for d in (0, 1) for t in (0, 1)]
    out = {}
    sign = (1.0, -1.0)
    # distinguishable: independent 50:50 routing
    for (da, ta), (db, tb) in itertools.product(cells, cells):
        p = 0.25 * abs(psi_a[ta]) ** 2 * abs(psi_b[tb]) ** 2
        key = tuple(sorted({(da, ta), (db, tb)}))
        out[key] = out.get(key, 0.0) + (1.0 - overlap) * p
    # indistinguishable: amplitudes of the symmetric two-photon output state
    amps = {}
    for (da, ta), (db, tb) in itertools.product(cells, cells):
        amp = 0.5 * psi_a[ta] * psi_b[tb] * sign[db]
        key = tuple(sorted([(da, ta), (db, tb)]))
        amps[key] = amps.get(key, 0.0) + amp
    for key, amp in amps.items():
        # (c^dag)^2 |0> = sqrt(2) |2>
        p = abs(amp) ** 2 * (2.0 if key[0] == key[1] else 1.0)
        hit = tuple(sorted(set(key)))
        out[hit] = out.get(hit, 0.0) + overlap * p
    return out


def _single_outcomes(psi):
    out = {}
    for d in (0, 1):
        for t in (0, 1):
            out[((d, t),)] = out.get(((d, t),), 0.0) + 0.5 * abs(psi[t]) ** 2
    return out


def _heralds(hit, nu):
    """Probability that a photon hit set plus noise yields a psi-minus."""
    pn = -math.expm1(-nu)
    total = 0.0
    for pattern in (((0, 0), (1, 1)), ((0, 1), (1, 0))):
        prob = 1.0
        for cell in [(d, t) for d in (0, 1) for t in (0, 1)]:
            lit = cell in hit
            if cell in pattern:
                prob *= 1.0 if lit else pn
            else:
                prob *= 0.0 if lit else 1.0 - pn
        total += prob
    return total


def single_photon_pair_yield(scenario: ScenarioConfig, basis: Basis, intensity: Intensity = Intensity.SIGNAL):
    """Yield ``Y11`` and error rate ``e11`` for exactly one photon per side.

    Uses the qubit specs of ``intensity`` and the same loss, efficiency,
    overlap and noise as the coherent-state model. Returns ``(Y11, e11)``.
    """
    ta, tb = scenario.transmittances()
    nu = scenario.detection.noise_mean
    overlap = scenario.detection.overlap
    gain = err = 0.0
    for bit_a, bit_b in itertools.product((0, 1), (0, 1)):
        psi_a = _normalised(scenario.alice.spec(basis, bit_a, intensity))
        psi_b = _normalised(scenario.bob.spec(basis, bit_b, intensity))
        p = 0.0
        for hit, w in _pair_outcomes(psi_a, psi_b, overlap).items():
            p += ta * tb * w * _heralds(set(hit), nu)
        for hit, w in _single_outcomes(psi_a).items():
            p += ta * (1 - tb) * w * _heralds(set(hit), nu)
        for hit, w in _single_outcomes(psi_b).items():
            p += (1 - ta) * tb * w * _heralds(set(hit), nu)
        p += (1 - ta) * (1 - tb) * _heralds(set(), nu)
        gain += p / 4
        if bit_a == bit_b:
            err += p / 4
    return gain, (err / gain if gain > 0 else 0.5)
