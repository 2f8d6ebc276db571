"""Zero-range process: rate models, equilibrium measures and exact dynamics."""

from .dynamics import (
    Event,
    Probes,
    Sample,
    ZrpConfiguration,
    draw_occupancies,
    run,
    sample_equilibrium,
    step,
)
from .rates import (
    EquilibriumProfile,
    LinearGrowthWarning,
    RateModel,
    SeriesDivergenceError,
    constant_rate,
    linear_rate,
    parse_rate_model,
    solve_fugacity,
    step_rate,
    table_rate,
)
from .replicas import simulate_replicas

__all__ = [
    "Event",
    "Probes",
    "Sample",
    "ZrpConfiguration",
    "draw_occupancies",
    "run",
    "sample_equilibrium",
    "step",
    "EquilibriumProfile",
    "LinearGrowthWarning",
    "RateModel",
    "SeriesDivergenceError",
    "constant_rate",
    "linear_rate",
    "parse_rate_model",
    "solve_fugacity",
    "step_rate",
    "table_rate",
    "simulate_replicas",
]
