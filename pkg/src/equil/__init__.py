"""Construction and diagnostics of relative equilibria near a channel shear."""

__version__ = "0.1.0"

from .grid import ChannelGrid, Field, gradient, integrate, load_field, save_field
from .penalty import PenaltyFamily
from .poisson import PoissonSolution, solve
from .variational import (
    AdmissibleSpec,
    EnergyBreakdown,
    SolveReport,
    SolverOptions,
    energy,
    maximize,
    steiner,
    trial_ellipse,
)

__all__ = [
    "__version__",
    "ChannelGrid",
    "Field",
    "PenaltyFamily",
    "PoissonSolution",
    "AdmissibleSpec",
    "EnergyBreakdown",
    "SolveReport",
    "SolverOptions",
    "integrate",
    "gradient",
    "solve",
    "energy",
    "maximize",
    "steiner",
    "trial_ellipse",
    "save_field",
    "load_field",
]
