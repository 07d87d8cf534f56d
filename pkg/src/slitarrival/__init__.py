"""Arrival-time statistics for a two-slit matter-wave experiment."""
from .model import (GaussianPacket1D, TwoSlitState, UnitSystem, alpha_from_mass,
                    current_at, momentum_amplitude, packet_amplitude, state_amplitude,
                    state_gradient)
from .screens import JointDistribution, ScreenGeometry, SpaceTimeGrid, TimeDistribution

__version__ = "0.1.0"

__all__ = [
    "GaussianPacket1D", "TwoSlitState", "UnitSystem", "alpha_from_mass", "current_at",
    "momentum_amplitude", "packet_amplitude", "state_amplitude", "state_gradient",
    "JointDistribution", "ScreenGeometry", "SpaceTimeGrid", "TimeDistribution",
]
