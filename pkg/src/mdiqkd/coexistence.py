"""WDM channel plan and classical-light noise budget.

Bright IP data channels sharing the fiber leak photons into the 1310 nm
quantum channel. The leakage is modelled phenomenologically: detector noise
grows linearly with the per-node data launch power and is shared equally by
the four (detector, time-bin) windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .forward import ScenarioConfig

QUANTUM_NM = 1310.0
WINDOW_STREAMS = 4
PLANCK = 6.62607015e-34
LIGHT_SPEED = 299792458.0


class Direction(str, Enum):
    CO = "co"
    COUNTER = "counter"


class Role(str, Enum):
    QUANTUM = "quantum"
    DATA = "data"
    CONTROL = "control"
    STABILIZATION = "stabilization"


@dataclass(frozen=True)
class Channel:
    name: str
    wavelength_nm: float
    launch_power: float  # W
    direction: Direction
    role: Role

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "role", Role(self.role))
        if self.wavelength_nm <= 0:
            raise ValueError(f"channel {self.name}: wavelength must be positive")
        if self.launch_power < 0:
            raise ValueError(f"channel {self.name}: launch power must be >= 0")
        if self.role is Role.DATA and self.launch_power <= 0:
            raise ValueError(f"data channel {self.name} needs a positive launch power")


@dataclass(frozen=True)
class ChannelPlan:
    channels: tuple[Channel, ...]

    def __post_init__(self):
        chans = tuple(self.channels)
        object.__setattr__(self, "channels", chans)
        quantum = [c for c in chans if c.role is Role.QUANTUM]
        if len(quantum) != 1 or quantum[0].wavelength_nm != QUANTUM_NM:
            raise ValueError("plan needs exactly one quantum channel at 1310 nm")
        names = [c.name for c in chans]
        if len(set(names)) != len(names):
            raise ValueError("channel names must be unique")

    def noisy_channels(self) -> list[Channel]:
        """Co-propagating data channels; counter-propagating light is ignored."""
        return [c for c in self.channels if c.role is Role.DATA and c.direction is Direction.CO]

    def data_launch_power(self) -> float:
        """Average launch power of the co-propagating data channels (W)."""
        noisy = self.noisy_channels()
        return sum(c.launch_power for c in noisy) / len(noisy) if noisy else 0.0

    def with_data_power(self, power: float) -> "ChannelPlan":
        return ChannelPlan(
            tuple(replace(c, launch_power=power) if c.role is Role.DATA else c for c in self.channels)
        )


def default_plan(data_launch_power: float = 4.68e-6) -> ChannelPlan:
    return ChannelPlan(
        (
            Channel("quantum", 1310.0, 0.0, Direction.CO, Role.QUANTUM),
            Channel("HBN", 1550.12, data_launch_power, Direction.CO, Role.DATA),
            Channel("LBN", 1510.0, data_launch_power, Direction.CO, Role.DATA),
            Channel("control", 1548.0, 1e-3, Direction.COUNTER, Role.CONTROL),
            Channel("stabilization", 1310.0, 1e-3, Direction.COUNTER, Role.STABILIZATION),
        )
    )


@dataclass(frozen=True)
class IsolationBudget:
    wdm_isolation: float = 50.0  # dB
    filter_isolation: float = 45.0  # dB
    filter_bandwidth: float = 2.0  # nm

    def __post_init__(self):
        if self.wdm_isolation < 0 or self.filter_isolation < 0 or self.filter_bandwidth <= 0:
            raise ValueError("isolations must be >= 0 dB and bandwidth > 0")

    @property
    def total_db(self) -> float:
        return self.wdm_isolation + self.filter_isolation

    def residual_leakage(self, launch_power: float) -> float:
        """Direct classical leakage reaching a detector (W)."""
        return launch_power * 10 ** (-self.total_db / 10)


@dataclass(frozen=True)
class NoiseModel:
    base_dark_rate: float = 0.0  # counts/s over all windows
    raman_slope: float = 0.0  # counts/s per W of per-node launch power

    def __post_init__(self):
        if self.base_dark_rate < 0 or self.raman_slope < 0:
            raise ValueError("noise model parameters must be >= 0")


def noise_rate(model: NoiseModel, launch_power_per_node: float) -> float:
    """Background counts/s summed over all detector windows."""
    if launch_power_per_node < 0:
        raise ValueError("launch power must be >= 0")
    return model.base_dark_rate + model.raman_slope * launch_power_per_node


def received_power(launch: float, loss_db: float) -> float:
    if launch < 0:
        raise ValueError("launch power must be >= 0")
    return launch * 10 ** (-loss_db / 10)


def channel_capacity_estimate(total_power_budget: float, per_channel_launch: float, rtol: float = 1e-3) -> int:
    """Whole channels fitting in a power budget.

    ``rtol`` absorbs rounding in quoted per-channel powers, which are
    typically given to three or four digits.
    """
    if per_channel_launch <= 0:
        raise ValueError("per-channel launch power must be > 0")
    if total_power_budget <= 0:
        return 0
    return int(math.floor(total_power_budget / per_channel_launch * (1 + rtol)))


def photon_flux_floor(qubit_rate: float, wavelength_nm: float = QUANTUM_NM) -> float:
    """Power of one photon per qubit slot (W)."""
    return PLANCK * LIGHT_SPEED / (wavelength_nm * 1e-9) * qubit_rate


def leakage_is_negligible(budget: IsolationBudget, launch_powers, qubit_rate: float) -> bool:
    floor = photon_flux_floor(qubit_rate)
    return all(budget.residual_leakage(p) < floor for p in launch_powers)


def apply_coexistence(scenario: ScenarioConfig, model: NoiseModel, launch_power: float) -> ScenarioConfig:
    """Scenario whose per-window dark and noise rates follow the noise law."""
    det = replace(
        scenario.detection,
        dark_rate=model.base_dark_rate / WINDOW_STREAMS,
        noise_rate=model.raman_slope * launch_power / WINDOW_STREAMS,
    )
    return replace(scenario, detection=det)


@dataclass
class RamanFit:
    slope: float
    ratios: dict = field(default_factory=dict)  # launch power -> (model, target)
    residual: float = 0.0


def key_rate_ratios(scenario, model, powers, reference, rate_fn) -> np.ndarray:
    r0 = rate_fn(apply_coexistence(scenario, model, reference))
    return np.array([rate_fn(apply_coexistence(scenario, model, p)) / r0 for p in powers])


def fit_raman_slope(
    scenario: ScenarioConfig,
    base_dark_rate: float,
    reference_power: float,
    powers,
    target_ratios,
    rate_fn,
    slope_max: float = 1e12,
) -> RamanFit:
    """Slope whose key-rate ratios best match the targets in log space.

    ``rate_fn`` maps a scenario to its clamped key rate. The search is a
    bounded scalar minimisation over ``log10(slope)``.
    """
    from scipy.optimize import minimize_scalar

    powers = list(powers)
    targets = np.asarray(target_ratios, dtype=float)

    def cost(log_slope):
        model = NoiseModel(base_dark_rate, 10**log_slope)
        ratios = key_rate_ratios(scenario, model, powers, reference_power, rate_fn)
        ratios = np.maximum(ratios, 1e-12)
        return float(np.sum(np.log(ratios / targets) ** 2))

    res = minimize_scalar(cost, bounds=(0.0, math.log10(slope_max)), method="bounded", options={"xatol": 1e-6})
    slope = 10**res.x
    model = NoiseModel(base_dark_rate, slope)
    got = key_rate_ratios(scenario, model, powers, reference_power, rate_fn)
    return RamanFit(slope, {p: (float(g), float(t)) for p, g, t in zip(powers, got, targets)}, float(res.fun))
