"""MILP modelling, a simplex-based branch and bound, and LP-file exchange."""

from nnplan.milp.bnb import LPRelaxation, SolveOptions, solve, solve_lp_relaxation
from nnplan.milp.model import (BINARY, CONTINUOUS, MilpModel, ModelError, SolveResult,
                               relative_gap)

__all__ = ["BINARY", "CONTINUOUS", "LPRelaxation", "MilpModel", "ModelError", "SolveOptions",
           "SolveResult", "relative_gap", "solve", "solve_lp_relaxation"]
