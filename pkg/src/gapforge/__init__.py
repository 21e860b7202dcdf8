"""Rainbow-ladder quark gap equation: spectral criticality, bounds, certificates and solver."""
from .errors import (BracketError, ConfigError, ConvergenceError, DomainError, GapForgeError,
                     SplitViolation)
from .gluon_models import GluonKernel, perturbative, range_model, simplest
from .quadrature import AngularRule, RadialGrid, angular_integrate, radial_grid
from .quark_state import QuarkState, TailSpec, WeightFunction

__version__ = "0.1.0"
