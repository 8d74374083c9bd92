"""Shared domain types and elementary math.

Everything here is an immutable value or a pure function. Index conventions
used throughout the package:

* ``Basis``: ``Z`` = 0, ``X`` = 1
* ``Intensity``: ``SIGNAL`` = 0, ``DECOY`` = 1, ``VACUUM`` = 2
* bit 0 is ``|early>`` / ``|+>``, bit 1 is ``|late>`` / ``|->``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Mapping

import numpy as np

__all__ = [
    "Basis",
    "Intensity",
    "BsmOutcome",
    "QubitSpec",
    "SourceConfig",
    "LinkConfig",
    "DetectionConfig",
    "GainTable",
    "binary_entropy",
    "db_to_transmittance",
    "poisson_pn",
]


class Basis(IntEnum):
    Z = 0
    X = 1


class Intensity(IntEnum):
    SIGNAL = 0
    DECOY = 1
    VACUUM = 2

    @property
    def label(self) -> str:
        return "sdv"[self]

    @classmethod
    def from_label(cls, label: str) -> "Intensity":
        key = label.strip().lower()
        for item in cls:
            if key in (item.label, item.name.lower()):
                return item
        raise ValueError(f"unknown intensity label {label!r}")


class BsmOutcome(IntEnum):
    NO_DETECTION = 0
    PSI_MINUS = 1


def binary_entropy(p: float) -> float:
    """Binary Shannon entropy in bits, with 0 log 0 := 0."""
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"binary_entropy domain is [0, 1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def db_to_transmittance(loss_db: float) -> float:
    if loss_db < 0 or math.isnan(loss_db):
        raise ValueError(f"loss must be >= 0 dB, got {loss_db}")
    return 10.0 ** (-loss_db / 10.0)


def poisson_pn(mu: float, n: int) -> float:
    """Poisson probability of ``n`` photons for mean ``mu``."""
    if mu < 0:
        raise ValueError(f"mean photon number must be >= 0, got {mu}")
    if n < 0 or int(n) != n:
        raise ValueError(f"photon number must be a non-negative integer, got {n}")
    n = int(n)
    if mu == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(-mu + n * math.log(mu) - math.lgamma(n + 1))


@dataclass(frozen=True)
class QubitSpec:
    """Prepared time-bin state sqrt(m)|early> + exp(i phi) sqrt(1-m)|late>."""

    m: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.m <= 1.0:
            raise ValueError(f"QubitSpec.m must lie in [0, 1], got {self.m}")
        if not math.isfinite(self.phi):
            raise ValueError("QubitSpec.phi must be finite")
        object.__setattr__(self, "phi", math.fmod(self.phi, 2 * math.pi) % (2 * math.pi))


def ideal_specs() -> dict[tuple[Basis, int, Intensity], QubitSpec]:
    ideal = {
        (Basis.Z, 0): QubitSpec(1.0, 0.0),
        (Basis.Z, 1): QubitSpec(0.0, 0.0),
        (Basis.X, 0): QubitSpec(0.5, 0.0),
        (Basis.X, 1): QubitSpec(0.5, math.pi),
    }
    return {(b, bit, i): s for (b, bit), s in ideal.items() for i in Intensity}


@dataclass(frozen=True)
class SourceConfig:
    """One End Node's weak-coherent-pulse source.

    ``mu`` is indexed by :class:`Intensity`; ``specs`` maps
    ``(basis, bit, intensity)`` to the prepared :class:`QubitSpec`.
    ``p_basis`` is the probability of choosing Z.
    """

    mu: tuple[float, float, float] = (0.3, 0.04, 0.0)
    specs: Mapping[tuple[Basis, int, Intensity], QubitSpec] = field(default_factory=ideal_specs)
    p_basis: float = 0.5
    p_intensity: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        mu = tuple(float(x) for x in self.mu)
        p_int = tuple(float(x) for x in self.p_intensity)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "p_intensity", p_int)
        if len(mu) != 3 or len(p_int) != 3:
            raise ValueError("mu and p_intensity need one entry per intensity")
        if not (mu[0] > mu[1] > mu[2] >= 0.0):
            raise ValueError(f"need mu_signal > mu_decoy > mu_vacuum >= 0, got {mu}")
        if not 0.0 <= self.p_basis <= 1.0:
            raise ValueError("p_basis must lie in [0, 1]")
        if any(not 0.0 <= p <= 1.0 for p in p_int) or abs(sum(p_int) - 1.0) > 1e-12:
            raise ValueError(f"intensity probabilities must sum to 1, got {p_int}")
        missing = [
            (b, bit, i) for b in Basis for bit in (0, 1) for i in Intensity if (b, bit, i) not in self.specs
        ]
        if missing:
            raise ValueError(f"missing qubit specs for {missing}")

    def spec(self, basis: Basis, bit: int, intensity: Intensity) -> QubitSpec:
        return self.specs[(Basis(basis), int(bit), Intensity(intensity))]

    def with_mu(self, mu) -> "SourceConfig":
        return replace(self, mu=tuple(mu))


@dataclass(frozen=True)
class LinkConfig:
    loss_db_alice: float
    loss_db_bob: float

    def __post_init__(self):
        if self.loss_db_alice < 0 or self.loss_db_bob < 0:
            raise ValueError("link losses must be >= 0 dB")

    @property
    def total_db(self) -> float:
        return self.loss_db_alice + self.loss_db_bob

    @classmethod
    def split(cls, total_db: float, asymmetry_db: float = 0.0) -> "LinkConfig":
        """Split a total loss, Alice's arm carrying ``asymmetry_db`` more than Bob's."""
        return cls(total_db / 2 + asymmetry_db / 2, total_db / 2 - asymmetry_db / 2)


@dataclass(frozen=True)
class DetectionConfig:
    """Center Node detection. Rates are per detector time-bin window stream."""

    det_efficiency: float = 1.0
    dark_rate: float = 0.0
    noise_rate: float = 0.0
    window: float = 400e-12
    visibility: float = 1.0
    qubit_rate: float = 100e6

    def __post_init__(self):
        if not 0.0 <= self.det_efficiency <= 1.0:
            raise ValueError("det_efficiency must lie in [0, 1]")
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError("visibility must lie in [0, 1]")
        if self.dark_rate < 0 or self.noise_rate < 0:
            raise ValueError("count rates must be >= 0")
        if self.window <= 0 or self.qubit_rate <= 0:
            raise ValueError("window and qubit_rate must be > 0")

    @property
    def noise_mean(self) -> float:
        """Mean noise counts per detector window."""
        return (self.dark_rate + self.noise_rate) * self.window

    @property
    def overlap(self) -> float:
        # mode overlap is identified with the interference visibility
        return self.visibility


class GainTable:
    """Gains ``Q`` and error rates ``E`` indexed ``[basis, intensity_a, intensity_b]``."""

    __slots__ = ("Q", "E")

    def __init__(self, Q, E):
        Q = np.array(Q, dtype=float)
        E = np.array(E, dtype=float)
        if Q.shape != (2, 3, 3) or E.shape != (2, 3, 3):
            raise ValueError(f"gain table needs shape (2, 3, 3), got {Q.shape} and {E.shape}")
        for name, arr in (("Q", Q), ("E", E)):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
                raise ValueError(f"all {name} cells must lie in [0, 1]")
        Q.setflags(write=False)
        E.setflags(write=False)
        self.Q = Q
        self.E = E

    def gain(self, basis, ia, ib) -> float:
        return float(self.Q[basis, ia, ib])

    def error(self, basis, ia, ib) -> float:
        return float(self.E[basis, ia, ib])

    def cells(self):
        """Yield ``(basis, ia, ib, Q, E)`` in canonical order."""
        for b in Basis:
            for ia in Intensity:
                for ib in Intensity:
                    yield b, ia, ib, float(self.Q[b, ia, ib]), float(self.E[b, ia, ib])

    def __eq__(self, other):
        if not isinstance(other, GainTable):
            return NotImplemented
        return np.array_equal(self.Q, other.Q) and np.array_equal(self.E, other.E)

    def __repr__(self):
        return f"GainTable(Q_ss^Z={self.Q[0, 0, 0]:.3e}, Q_ss^X={self.Q[1, 0, 0]:.3e})"
