"""Test problems: partial-DCT Lasso and tanh-loss classification."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct, idct

from ..core import CompositeProblem, SmoothOracle, UsageError
from ..regularizers import L1Norm


class PartialDCT:
    """``A x = dct(x)[J]`` with the orthonormal DCT-II.

    Each :meth:`apply` or :meth:`adjoint` adds one to ``counter`` when set.
    """

    def __init__(self, n, idx, counter=None):
        self.n = int(n)
        self.idx = np.asarray(idx, dtype=int)
        self.m = self.idx.size
        self.counter = counter

    def _tick(self):
        if self.counter is not None:
            self.counter.add()

    def apply(self, x):
        self._tick()
        return dct(x, type=2, norm="ortho")[self.idx]

    def adjoint(self, y):
        self._tick()
        z = np.zeros(self.n)
        z[self.idx] = y
        return idct(z, type=2, norm="ortho")

    def todense(self):
        return dct(np.eye(self.n), type=2, norm="ortho", axis=0)[self.idx]


class LeastSquaresOracle(SmoothOracle):
    """``f(x) = 0.5 ||A x - b||^2`` for an operator with ``apply``/``adjoint``.

    The operator's counter is shared with this oracle, so ``value`` costs
    one call and ``grad``/``value_and_grad``/``hvp`` cost two.
    """

    def __init__(self, op, b):
        super().__init__(op.n)
        op.counter = self.counter
        self.op = op
        self.b = np.asarray(b, dtype=float)

    def value(self, x):
        r = self.op.apply(x) - self.b
        return 0.5 * float(r @ r)

    def grad(self, x):
        return self.op.adjoint(self.op.apply(x) - self.b)

    def value_and_grad(self, x):
        r = self.op.apply(x) - self.b
        return 0.5 * float(r @ r), self.op.adjoint(r)

    def hvp(self, x, v):
        return self.op.adjoint(self.op.apply(v))


@dataclass
class LassoInstance:
    n: int
    m: int
    idx: np.ndarray
    b: np.ndarray
    x_hat: np.ndarray
    dynamic_range: float
    sigma: float
    mu: float
    seed: int

    def operator(self):
        return PartialDCT(self.n, self.idx)

    def problem(self):
        return CompositeProblem(LeastSquaresOracle(self.operator(), self.b), L1Norm(self.mu))

    def to_json(self, path=None):
        d = {"kind": "lasso", "n": self.n, "m": self.m, "idx": self.idx.tolist(),
             "b": self.b.tolist(), "x_hat": self.x_hat.tolist(),
             "dynamic_range": self.dynamic_range, "sigma": self.sigma,
             "mu": self.mu, "seed": self.seed}
        text = json.dumps(d)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, src):
        d = json.loads(src) if src.lstrip().startswith("{") else json.load(open(src))
        return cls(d["n"], d["m"], np.array(d["idx"], dtype=int), np.array(d["b"]),
                   np.array(d["x_hat"]), d["dynamic_range"], d["sigma"], d["mu"], d["seed"])


def gen_lasso(n=4096, m=512, d=20.0, sigma=0.1, mu=None, seed=0):
    """Random sparse-recovery Lasso instance with a partial DCT operator.

    ``ceil(n/40)`` nonzeros at random positions with values
    ``+-10**(d*u/20)``, ``u ~ U[0, 1]``; ``m`` random DCT rows; Gaussian
    noise with covariance ``sigma * I``.  ``mu`` defaults to
    ``0.1 * ||A^T b||_inf``.
    """
    if m > n:
        raise UsageError("need m <= n")
    if d < 0:
        raise UsageError("dynamic range must be nonnegative")
    rng = np.random.default_rng(seed)
    k = math.ceil(n / 40)
    pos = rng.choice(n, size=k, replace=False)
    signs = rng.choice([-1.0, 1.0], size=k)
    mags = 10.0 ** (d * rng.uniform(0.0, 1.0, size=k) / 20.0)
    x_hat = np.zeros(n)
    x_hat[pos] = signs * mags
    idx = np.sort(rng.choice(n, size=m, replace=False))
    op = PartialDCT(n, idx)
    b = op.apply(x_hat) + math.sqrt(sigma) * rng.standard_normal(m)
    if mu is None:
        mu = 0.1 * float(np.max(np.abs(op.adjoint(b))))
    return LassoInstance(n, m, idx, b, x_hat, float(d), float(sigma), float(mu), seed)


class TanhOracle(SmoothOracle):
    """``f(x) = mean(1 - tanh(b_i a_i'x))``.

    Products with the data matrix or its transpose each cost one call.  The
    curvature weights of the last point are cached so repeated Hessian
    products at the same point cost two calls each.
    """

    def __init__(self, X, y):
        X = np.asarray(X, dtype=float)
        super().__init__(X.shape[1])
        self.X = X
        self.y = np.asarray(y, dtype=float)
        self.N = X.shape[0]
        self._key = None
        self._z = None

    def _margins(self, x):
        if self._key is not None and np.array_equal(self._key, x):
            return self._z
        self.counter.add()
        z = self.y * (self.X @ x)
        self._key, self._z = x.copy(), z
        return z

    def value(self, x):
        return float(np.mean(1.0 - np.tanh(self._margins(x))))

    def grad(self, x):
        return self.value_and_grad(x)[1]

    def value_and_grad(self, x):
        z = self._margins(x)
        th = np.tanh(z)
        w = -(1.0 - th * th) * self.y / self.N
        self.counter.add()
        return float(np.mean(1.0 - th)), self.X.T @ w

    def hvp(self, x, v):
        z = self._margins(x)
        th = np.tanh(z)
        w = 2.0 * (1.0 - th * th) * th / self.N
        self.counter.add(2)
        return self.X.T @ (w * (self.X @ v))


@dataclass
class ClassificationInstance:
    X: np.ndarray
    y: np.ndarray
    mu: float = 0.01

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def n(self):
        return self.X.shape[1]

    def problem(self):
        return CompositeProblem(TanhOracle(self.X, self.y), L1Norm(self.mu))

    def to_json(self, path=None):
        text = json.dumps({"kind": "classification", "X": self.X.tolist(),
                           "y": self.y.tolist(), "mu": self.mu})
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, src):
        d = json.loads(src) if src.lstrip().startswith("{") else json.load(open(src))
        return cls(np.array(d["X"], dtype=float), np.array(d["y"], dtype=float), d["mu"])


def tanh_oracle(instance):
    return TanhOracle(instance.X, instance.y)


def gen_classification(N=2000, n=100, flip=0.05, mu=0.01, seed=0):
    """Linearly separable data with a fraction ``flip`` of labels flipped."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(n)
    X = rng.standard_normal((N, n)) / math.sqrt(n)
    y = np.sign(X @ w)
    y[y == 0] = 1.0
    flips = rng.random(N) < flip
    y[flips] *= -1.0
    return ClassificationInstance(X, y, mu)


def load_instance(path):
    """Read a JSON instance snapshot written by ``to_json``."""
    try:
        with open(path) as fh:
            text = fh.read()
        kind = json.loads(text).get("kind")
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read instance {path}: {exc}") from None
    if kind == "lasso":
        return LassoInstance.from_json(text)
    if kind == "classification":
        return ClassificationInstance.from_json(text)
    raise UsageError(f"{path}: unknown instance kind {kind!r}")


class LibsvmParseError(ValueError):
    pass


def load_libsvm(path, scale=False, mu=0.01):
    """Read a LIBSVM text file into a dense :class:`ClassificationInstance`.

    Labels ``0``/``1`` are mapped to ``-1``/``+1``.  With ``scale`` each
    column is divided by its largest absolute value.
    """
    labels, rows, width = [], [], 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            try:
                lab = float(tok[0])
                row = {}
                for t in tok[1:]:
                    k, v = t.split(":")
                    k = int(k)
                    if k < 1:
                        raise ValueError("feature indices start at 1")
                    row[k - 1] = float(v)
            except ValueError as exc:
                raise LibsvmParseError(f"{path}:{lineno}: malformed line ({exc})") from None
            if lab not in (-1.0, 0.0, 1.0):
                raise LibsvmParseError(f"{path}:{lineno}: label {tok[0]!r} is not binary")
            labels.append(1.0 if lab > 0 else -1.0)
            rows.append(row)
            if row:
                width = max(width, max(row) + 1)
    if not rows:
        raise UsageError(f"{path}: no data")
    X = np.zeros((len(rows), width))
    for i, row in enumerate(rows):
        for j, v in row.items():
            X[i, j] = v
    if scale:
        s = np.abs(X).max(axis=0)
        s[s == 0] = 1.0
        X /= s
    return ClassificationInstance(X, np.array(labels), mu)
