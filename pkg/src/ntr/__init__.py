"""Nonsmooth trust-region method for composite problems ``f + phi``."""

from .core import (CallCounter, CompositeProblem, LinearOracle, NonFiniteError,
                   QuadraticOracle, SmoothOracle, UsageError, ZeroOracle, eval_psi,
                   finite_diff_check)
from .regularizers import DiagonalMetric, GroupLasso, L1Norm, LinfNorm, make_regularizer
from .directions import (NaturalResidual, NormalMap, ScaledNaturalResidual,
                         natural_residual, normal_map_g, pseudo_gradient, stopping_residual)
from .subproblem import (QuadraticModel, cauchy_point, cg_steihaug, reduced_lasso_step,
                         regularized_step)
from .solver import InvariantError, SolveReport, TrConfig, solve

__version__ = "0.1.0"

__all__ = [
    "CallCounter",
    "CompositeProblem",
    "LinearOracle",
    "NonFiniteError",
    "QuadraticOracle",
    "SmoothOracle",
    "UsageError",
    "ZeroOracle",
    "eval_psi",
    "finite_diff_check",
    "DiagonalMetric",
    "GroupLasso",
    "L1Norm",
    "LinfNorm",
    "make_regularizer",
    "NaturalResidual",
    "NormalMap",
    "ScaledNaturalResidual",
    "natural_residual",
    "normal_map_g",
    "pseudo_gradient",
    "stopping_residual",
    "QuadraticModel",
    "cauchy_point",
    "cg_steihaug",
    "reduced_lasso_step",
    "regularized_step",
    "InvariantError",
    "SolveReport",
    "TrConfig",
    "solve",
]
