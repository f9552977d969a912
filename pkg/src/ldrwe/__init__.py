"""Large-deviation rates, tilted measures and path oracles for random walks
in dynamic random environments."""

from .averaged import RateSolution, log_mgf, rate_averaged
from .environment import EnvironmentSpec, KernelMixture, StepKernel
from .geometry import StepSet, build_geometry
from .quenched import jensen_gap, rate_quenched

__all__ = [
    "EnvironmentSpec",
    "KernelMixture",
    "RateSolution",
    "StepKernel",
    "StepSet",
    "build_geometry",
    "jensen_gap",
    "log_mgf",
    "rate_averaged",
    "rate_quenched",
]
