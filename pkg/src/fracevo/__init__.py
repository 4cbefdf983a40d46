"""Fractional evolution equations with bounded perturbations."""

from .closedform import (solve_classical_nonpermutable, solve_classical_permutable,
                         solve_nonpermutable, solve_permutable)
from .errors import (BoundViolation, ConfigError, DimensionMismatch, FracEvoError,
                     GridTooCoarse, NonConvergence, NotPermutable)
from .families import (cosine_family, estimate_envelope, rl_family, rl_family_derivative,
                       sine_family)
from .grid import TimeGrid, Trajectory
from .mlfunc import ml_matrix, ml_scalar
from .operators import Forcing, GrowthEnvelope, SeriesControl, TimeDependentOperator
from .oracle import IvpSpec, adams_solve, residual
from .perturb import (perturbed_cosine, perturbed_sine, particular_solution, solve_ivp,
                      verify_growth_bounds)

__version__ = "0.1.0"
