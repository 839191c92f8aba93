"""Transmit/defer/power policies for a D2D pair underlaying a cellular uplink,
plus a slotted simulator to evaluate them."""

from .channel import LinkRatios, RadioParams, Topology
from .multipower import MultiPowerModel
from .sim import SimConfig, SimOutcome, run_simulation
from .strategies import StrategyConfig, StrategyKind

__all__ = [
    "LinkRatios",
    "MultiPowerModel",
    "RadioParams",
    "SimConfig",
    "SimOutcome",
    "StrategyConfig",
    "StrategyKind",
    "Topology",
    "run_simulation",
]
__version__ = "0.1.0"
