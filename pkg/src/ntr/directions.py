"""Pseudo-gradients ``g(x) = u(x) d(x)`` and the stationarity residual."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import UsageError
from .regularizers import as_diag


@dataclass
class DirectionOutput:
    """``g = u * d`` with ``u <= 0``; ``u``, ``d``, ``g`` vanish together."""

    g: np.ndarray
    u: float
    d: np.ndarray

    @classmethod
    def zero(cls, n):
        return cls(np.zeros(n), 0.0, np.zeros(n))


@dataclass(frozen=True)
class NormalMap:
    """Steepest-descent pseudo-gradient via the normal map."""


@dataclass(frozen=True)
class NaturalResidual:
    """``g = F_nat``; ``d`` has unit length in the metric norm."""

    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise UsageError("lambda must be positive")


@dataclass(frozen=True)
class ScaledNaturalResidual:
    """``g = lam * F_nat``; ``d`` has unit Euclidean length."""

    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise UsageError("lambda must be positive")


def _gradient(problem, x, grad):
    return problem.grad(x) if grad is None else grad


def normal_map_g(problem, x, grad=None):
    """Steepest-descent pseudo-gradient ``grad f(x) + P_{dphi(x)}(-grad f(x))``.

    This is the minimum-norm element of the subdifferential of ``psi`` at
    ``x``; ``u = -||g||`` equals the directional derivative along ``d``.
    """
    gf = _gradient(problem, x, grad)
    g = gf + problem.regularizer.subdiff_project(x, -gf)
    ng = float(np.linalg.norm(g))
    if ng == 0.0:
        return DirectionOutput.zero(x.size)
    return DirectionOutput(g, -ng, -g / ng)


def natural_residual(problem, x, lam, grad=None):
    """``F_nat(x) = x - prox^lam(x - grad f(x) / lam)``.

    ``lam`` may be a positive scalar or a positive diagonal.
    """
    lamv = as_diag(lam, x.size)
    gf = _gradient(problem, x, grad)
    return x - problem.regularizer.prox(x - gf / lamv, lamv)


def pseudo_gradient(problem, x, kind, grad=None):
    if isinstance(kind, NormalMap):
        return normal_map_g(problem, x, grad)
    if isinstance(kind, (NaturalResidual, ScaledNaturalResidual)):
        F = natural_residual(problem, x, kind.lam, grad)
        nF = float(np.linalg.norm(F))
        if nF == 0.0:
            return DirectionOutput.zero(x.size)
        if isinstance(kind, NaturalResidual):
            nlam = np.sqrt(kind.lam) * nF
            return DirectionOutput(F, -nlam, -F / nlam)
        return DirectionOutput(kind.lam * F, -kind.lam * nF, -F / nF)
    raise UsageError(f"unknown pseudo-gradient kind {kind!r}")


def stopping_residual(problem, x, lam, grad=None):
    """``lam * ||F_nat^lam(x)||``."""
    return float(lam * np.linalg.norm(natural_residual(problem, x, lam, grad)))
