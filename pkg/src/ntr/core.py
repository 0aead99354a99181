"""Problem abstraction: smooth oracles, composite problems, operator accounting."""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass

import numpy as np


class UsageError(ValueError):
    """Raised when an operation is called outside its contract."""


class NonFiniteError(ArithmeticError):
    """Raised when an oracle produces NaN or Inf."""


def check_finite(v, what="value"):
    """Return ``v`` unchanged, raising :class:`NonFiniteError` on NaN/Inf."""
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"non-finite {what} produced by oracle")
    return v


class CallCounter:
    """Tally of expensive operator applications (``N_A``).

    Increments are atomic.  Inside :meth:`paused` nothing is counted, which
    is how diagnostics avoid polluting the tally.
    """

    def __init__(self):
        self._count = 0
        self._paused = 0
        self._lock = threading.Lock()

    @property
    def count(self):
        return self._count

    def add(self, k=1):
        if k < 0:
            raise UsageError("call counts only increase")
        with self._lock:
            if not self._paused:
                self._count += k

    def reset(self):
        with self._lock:
            self._count = 0

    @contextlib.contextmanager
    def paused(self):
        with self._lock:
            self._paused += 1
        try:
            yield self
        finally:
            with self._lock:
                self._paused -= 1


class SmoothOracle:
    """Base class for the smooth part ``f``.

    Subclasses implement :meth:`value`, :meth:`grad` and :meth:`hvp` and
    charge ``self.counter`` for every expensive operator application.
    :meth:`value_and_grad` may be overridden when sharing work is cheaper.
    """

    dim: int

    def __init__(self, dim):
        self.dim = int(dim)
        self.counter = CallCounter()

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hvp(self, x, v):
        raise NotImplementedError

    def value_and_grad(self, x):
        return self.value(x), self.grad(x)


class ZeroOracle(SmoothOracle):
    """``f = 0``."""

    def value(self, x):
        return 0.0

    def grad(self, x):
        return np.zeros(self.dim)

    def hvp(self, x, v):
        return np.zeros(self.dim)


class QuadraticOracle(SmoothOracle):
    """``f(x) = 0.5 x'Qx + c'x + const`` with a dense symmetric ``Q``.

    Every product with ``Q`` adds one to the counter.
    """

    def __init__(self, Q, c=None, const=0.0):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise UsageError("Q must be square")
        super().__init__(Q.shape[0])
        self.Q = 0.5 * (Q + Q.T)
        self.c = np.zeros(self.dim) if c is None else np.asarray(c, dtype=float)
        self.const = float(const)

    def _Qx(self, x):
        self.counter.add()
        return self.Q @ x

    def value(self, x):
        return float(0.5 * x @ self._Qx(x) + self.c @ x + self.const)

    def grad(self, x):
        return self._Qx(x) + self.c

    def value_and_grad(self, x):
        Qx = self._Qx(x)
        return float(0.5 * x @ Qx + self.c @ x + self.const), Qx + self.c

    def hvp(self, x, v):
        return self._Qx(v)


class LinearOracle(QuadraticOracle):
    """``f(x) = c'x``; the Hessian vanishes and products with it are free."""

    def __init__(self, c):
        c = np.asarray(c, dtype=float)
        super().__init__(np.zeros((c.size, c.size)), c)

    def _Qx(self, x):
        return np.zeros(self.dim)


class CompositeProblem:
    """``psi = f + phi`` with a smooth oracle and a regularizer.

    Parameters
    ----------
    smooth : SmoothOracle
    regularizer : ntr.regularizers.Regularizer
    """

    def __init__(self, smooth, regularizer):
        if regularizer.dim is not None and regularizer.dim != smooth.dim:
            raise UsageError(
                f"dimension mismatch: smooth {smooth.dim}, regularizer {regularizer.dim}")
        self.smooth = smooth
        self.regularizer = regularizer
        self.dim = smooth.dim

    @property
    def counter(self):
        return self.smooth.counter

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise UsageError(f"expected a vector of length {self.dim}, got shape {x.shape}")
        return check_finite(x, "point")

    def f(self, x):
        return float(check_finite(self.smooth.value(x), "f"))

    def grad(self, x):
        return check_finite(self.smooth.grad(x), "gradient")

    def f_and_grad(self, x):
        fx, gx = self.smooth.value_and_grad(x)
        check_finite(fx, "f")
        return float(fx), check_finite(gx, "gradient")

    def hvp(self, x, v):
        return check_finite(self.smooth.hvp(x, v), "Hessian-vector product")

    def psi(self, x):
        return self.f(x) + self.regularizer.value(x)


def eval_psi(problem, x):
    """Evaluate ``f(x) + phi(x)``."""
    x = problem.check_point(x)
    return problem.psi(x)


@dataclass
class FiniteDiffReport:
    max_grad_err: float
    max_hvp_err: float
    grad_scale: float
    hvp_scale: float


def finite_diff_check(problem, x, h=1e-5, n_dirs=None, rng=None):
    """Compare analytic derivatives of ``f`` with central differences.

    The gradient is checked coordinate-wise (all coordinates when the
    dimension is at most 50, otherwise ``n_dirs`` random ones) and the
    Hessian-vector product along ``n_dirs`` random unit directions.
    Operator calls made here are not counted.

    Returns
    -------
    FiniteDiffReport
        Absolute maxima of the errors plus the magnitudes they should be
        compared with (``max |grad|`` and ``max |hvp|``).
    """
    if h <= 0:
        raise UsageError("h must be positive")
    rng = np.random.default_rng(rng)
    x = np.asarray(x, dtype=float)
    n = x.size
    smooth = problem.smooth if isinstance(problem, CompositeProblem) else problem
    if n_dirs is None:
        n_dirs = min(n, 10)
    coords = np.arange(n) if n <= 50 else rng.choice(n, size=n_dirs, replace=False)
    with smooth.counter.paused():
        g = smooth.grad(x)
        grad_err = 0.0
        for i in coords:
            e = np.zeros(n)
            e[i] = h
            fd = (smooth.value(x + e) - smooth.value(x - e)) / (2 * h)
            grad_err = max(grad_err, abs(fd - g[i]))
        hvp_err = 0.0
        hvp_scale = 0.0
        for _ in range(n_dirs):
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            fd = (smooth.grad(x + h * v) - smooth.grad(x - h * v)) / (2 * h)
            hv = smooth.hvp(x, v)
            hvp_err = max(hvp_err, float(np.max(np.abs(fd - hv))))
            hvp_scale = max(hvp_scale, float(np.max(np.abs(hv))))
    return FiniteDiffReport(float(grad_err), hvp_err, float(np.max(np.abs(g))), hvp_scale)
