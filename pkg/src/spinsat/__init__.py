"""Time-optimal saturation of a dissipative spin-1/2 with singular extremals."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    NormalizedParams,
    PhysicalParams,
    PlanarState,
    admissibility_bound,
    normalize,
    singular_control,
    singular_locus,
)
from .synthesis import (  # noqa: E402
    ControlSchedule,
    asymptotic_times,
    inversion_recovery,
    simulate_schedule,
    sweep_ratio,
    synthesize_optimal,
)

__all__ = [
    "ControlSchedule",
    "NormalizedParams",
    "PhysicalParams",
    "PlanarState",
    "admissibility_bound",
    "asymptotic_times",
    "inversion_recovery",
    "normalize",
    "simulate_schedule",
    "singular_control",
    "singular_locus",
    "sweep_ratio",
    "synthesize_optimal",
]
