"""Partially separable adaptive regularization for objectives with ``|U_i x|^q`` terms.

Minimizes ``sum_N f_i(U_i x) + sum_H |U_i x|^q`` over a closed convex set with
a high-order adaptive regularization method that counts every function and
derivative evaluation.
"""

import logging

from .driver import SolverConfig, SolveResult, solve
from .errors import (ConfigError, ContractViolation, PsarpError, ProblemParseError, SolveFailure,
                     StepFailure)
from .feasible import Ball, Box, Halfspaces, Intersection, Product, Slab
from .problem import ElementMap, Problem, coordinate_map, unit_row

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"

__all__ = ["SolverConfig", "SolveResult", "solve", "Problem", "ElementMap", "coordinate_map", "unit_row",
           "Box", "Ball", "Slab", "Halfspaces", "Intersection", "Product", "PsarpError", "ConfigError",
           "ContractViolation", "ProblemParseError", "SolveFailure", "StepFailure"]
