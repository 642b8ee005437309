"""Energy-efficient joint power and rate control with delay QoS on a CDMA uplink."""

from .efficiency import (
    DEFAULT,
    EfficiencyFunction,
    ExponentialEfficiency,
    OptimalSir,
    optimal_sir,
)
from .game import (
    EquilibriumSolution,
    SystemParams,
    UserProfile,
    best_response,
    best_response_dynamics,
    equilibrium,
    size_of,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT",
    "EfficiencyFunction",
    "EquilibriumSolution",
    "ExponentialEfficiency",
    "OptimalSir",
    "SystemParams",
    "UserProfile",
    "best_response",
    "best_response_dynamics",
    "equilibrium",
    "optimal_sir",
    "size_of",
]
