"""Scenario -> gain table -> decoy bounds -> key rate, and sweeps over it."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

from . import decoy
from .coexistence import NoiseModel, apply_coexistence, noise_rate
from .forward import ScenarioConfig, full_gain_table
from .model import Intensity, SourceConfig


def uniform_states(source: SourceConfig) -> SourceConfig:
    """Give every intensity the signal-level qubit states.

    Decoy analysis presumes the prepared state does not depend on the
    intensity. Tables generated with intensity-dependent states violate that
    premise, which the bounding program reports as infeasible.
    """
    specs = {(b, bit, i): source.spec(b, bit, Intensity.SIGNAL) for (b, bit, i) in source.specs}
    return replace(source, specs=specs)


def decoy_consistent(scenario: ScenarioConfig) -> ScenarioConfig:
    return replace(scenario, alice=uniform_states(scenario.alice), bob=uniform_states(scenario.bob))


def key_rate(scenario: ScenarioConfig, f: float = decoy.F_EC, *, consistent: bool = True) -> decoy.DecoyResult:
    """Decoy analysis of the scenario's own analytic gain table."""
    sc = decoy_consistent(scenario) if consistent else scenario
    table = full_gain_table(sc)
    return decoy.analyze(table, sc.alice.mu, sc.bob.mu, f)


@dataclass(frozen=True)
class SweepPoint:
    axis: float
    R: float
    R_clamped: float
    noise_cps: float
    error: str | None = None


def loss_sweep(scenario: ScenarioConfig, losses, asymmetry_db: float | None = None, f: float = decoy.F_EC):
    """Key rate versus total loss; failures are recorded per point."""
    points = []
    noise = (scenario.detection.dark_rate + scenario.detection.noise_rate) * 4
    for L in losses:
        try:
            res = key_rate(scenario.with_loss(L, asymmetry_db), f)
            points.append(SweepPoint(L, res.R, res.R_clamped, noise))
        except (decoy.InfeasibleError, ArithmeticError, ValueError) as exc:
            points.append(SweepPoint(L, math.nan, math.nan, noise, str(exc)))
    _check_monotone(points)
    return points


def power_sweep(scenario: ScenarioConfig, model: NoiseModel, powers, f: float = decoy.F_EC):
    """Key rate versus per-node data launch power (W)."""
    points = []
    for P in powers:
        cps = noise_rate(model, P)
        try:
            res = key_rate(apply_coexistence(scenario, model, P), f)
            points.append(SweepPoint(P, res.R, res.R_clamped, cps))
        except (decoy.InfeasibleError, ArithmeticError, ValueError) as exc:
            points.append(SweepPoint(P, math.nan, math.nan, cps, str(exc)))
    _check_monotone(points)
    return points


def _check_monotone(points) -> bool:
    vals = [p.R_clamped for p in points if p.error is None]
    ok = all(b <= a * (1 + 1e-9) + 1e-300 for a, b in zip(vals, vals[1:]))
    if not ok:
        warnings.warn("key rate is not monotone non-increasing along the sweep", RuntimeWarning, stacklevel=3)
    return ok
