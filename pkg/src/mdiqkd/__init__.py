"""Simulation and analysis toolkit for an MDI-QKD network coexisting with IP data traffic."""

from .backend import BACKEND
from .config import RunConfig, bundled
from .decoy import DecoyResult, analyze
from .forward import ScenarioConfig, full_gain_table
from .model import Basis, BsmOutcome, DetectionConfig, GainTable, Intensity, LinkConfig, QubitSpec, SourceConfig
from .pipeline import key_rate, loss_sweep, power_sweep
from .pulsesim import empirical_gain_table, simulate_batch
from .session import run_session

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Basis",
    "BsmOutcome",
    "DecoyResult",
    "DetectionConfig",
    "GainTable",
    "Intensity",
    "LinkConfig",
    "QubitSpec",
    "RunConfig",
    "ScenarioConfig",
    "SourceConfig",
    "analyze",
    "bundled",
    "empirical_gain_table",
    "full_gain_table",
    "key_rate",
    "loss_sweep",
    "power_sweep",
    "run_session",
    "simulate_batch",
]
