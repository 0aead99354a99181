"""Nonsmooth convex terms with prox, subdifferential projection, stepsize
safeguards, stratification and truncation.

Three norms are provided: :class:`L1Norm`, :class:`GroupLasso` and
:class:`LinfNorm`, each scaled by a positive weight ``mu``.  The safeguard
and truncation geometry depends only on the breakpoints of the norm and is
therefore independent of ``mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import UsageError

UNIT_TOL = 1e-12
TIE_TOL = 1e-12


@dataclass(frozen=True)
class DiagonalMetric:
    """Positive diagonal metric ``Lambda = diag(diag)``."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float)
        if np.any(~(d > 0)):
            raise UsageError("metric entries must be strictly positive")
        object.__setattr__(self, "diag", d)

    @classmethod
    def scalar(cls, lam, n):
        return cls(np.full(n, float(lam)))

    def norm(self, v):
        return float(np.sqrt(np.sum(self.diag * v * v)))


def as_diag(metric, n):
    """Turn a scalar, array or :class:`DiagonalMetric` into a length-``n`` array."""
    if isinstance(metric, DiagonalMetric):
        d = metric.diag
    else:
        d = np.asarray(metric, dtype=float)
        if d.ndim == 0:
            d = np.full(n, float(d))
    if d.shape != (n,):
        raise UsageError(f"metric has shape {d.shape}, expected ({n},)")
    if np.any(~(d > 0)):
        raise UsageError("metric entries must be strictly positive")
    return d


def _check_unit(d):
    nd = np.linalg.norm(d)
    if abs(nd - 1.0) > UNIT_TOL:
        raise UsageError(f"direction must have unit norm, got {nd!r}")


def project_simplex(v, radius=1.0):
    """Euclidean projection onto ``{u >= 0, sum(u) = radius}`` (sort based)."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return v.copy()
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - radius
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def project_l1_ball(v, radius=1.0):
    """Euclidean projection onto ``{w : ||w||_1 <= radius}``."""
    v = np.asarray(v, dtype=float)
    if np.abs(v).sum() <= radius:
        return v.copy()
    return np.sign(v) * project_simplex(np.abs(v), radius)


class Regularizer:
    """Interface shared by the norms below.

    Attributes
    ----------
    mu : float
        Positive weight.
    dim : int or None
        Dimension, when fixed at construction.
    delta, kappa : float
        Truncation constants: ``T(x, a)`` is defined for ``0 < a <= delta``
        and moves points by at most ``kappa * a``.
    """

    delta = math.inf
    polyhedral = True

    def __init__(self, mu=1.0, dim=None):
        if not mu > 0:
            raise UsageError("weight mu must be positive")
        self.mu = float(mu)
        self.dim = None if dim is None else int(dim)

    # subclasses override everything below
    def value(self, x):
        raise NotImplementedError

    def decrease(self, x, s):
        """``phi(x) - phi(x + s)``; subclasses may avoid cancellation."""
        return self.value(x) - self.value(x + s)

    def prox(self, z, metric=1.0):
        raise NotImplementedError

    def curvature(self, x, v):
        """Hessian of ``phi`` along its smooth stratum through ``x``, applied to ``v``.

        Zero for polyhedral norms, which are affine on each stratum.
        """
        return np.zeros_like(np.asarray(v, dtype=float))

    def tangent_project(self, x, v):
        """Orthogonal projection of ``v`` onto the directions along which the
        stratum through ``x`` can be followed to first order (identity unless
        the stratum ties coordinates together)."""
        return np.array(v, dtype=float)

    def subdiff_project(self, x, v):
        raise NotImplementedError

    def gamma_max(self, x, d):
        raise NotImplementedError

    def gamma_dir(self, x, d):
        return self.gamma_max(x, d)

    def gamma(self, x):
        raise NotImplementedError

    def stratum_index(self, x):
        raise NotImplementedError

    def num_strata(self, n):
        """``m``: the index of the deepest stratum for dimension ``n``."""
        raise NotImplementedError

    def kappa(self, n):
        raise NotImplementedError

    def _truncate(self, x, a):
        raise NotImplementedError

    def truncate(self, x, a):
        """Truncation operator ``T(x, a)``.

        Returns ``x`` itself when ``gamma(x) >= a``; otherwise a point in a
        deeper stratum with ``gamma >= a`` within ``kappa * a`` of ``x``.
        """
        if not (0 < a <= self.delta):
            raise UsageError(f"truncation level must lie in (0, delta], got {a!r}")
        x = np.asarray(x, dtype=float)
        if self.gamma(x) >= a:
            return x.copy()
        return self._truncate(x, a)


def _l1_breakpoint(x, d):
    mask = (x != 0) & (x * d < 0)
    if not mask.any():
        return math.inf
    return float(np.min(-x[mask] / d[mask]))


class L1Norm(Regularizer):
    """``phi(x) = mu * ||x||_1``.

    Strata count zero coordinates (``m = n``); truncation zeroes every
    coordinate below the level.
    """

    def value(self, x):
        return self.mu * float(np.abs(x).sum())

    def decrease(self, x, s):
        return self.mu * float((np.abs(x) - np.abs(x + s)).sum())

    def prox(self, z, metric=1.0):
        z = np.asarray(z, dtype=float)
        thr = self.mu / as_diag(metric, z.size)
        return np.sign(z) * np.maximum(np.abs(z) - thr, 0.0)

    def prox_active(self, z, metric=1.0):
        """Mask of coordinates where the prox is locally the identity."""
        z = np.asarray(z, dtype=float)
        return np.abs(z) > self.mu / as_diag(metric, z.size)

    def subdiff_project(self, x, v):
        return np.where(x != 0, self.mu * np.sign(x), np.clip(v, -self.mu, self.mu))

    def gamma_max(self, x, d):
        _check_unit(d)
        return _l1_breakpoint(x, d)

    def gamma(self, x):
        nz = np.abs(x[x != 0])
        return float(nz.min()) if nz.size else math.inf

    def stratum_index(self, x):
        return int(np.count_nonzero(x == 0))

    def num_strata(self, n):
        return n

    def kappa(self, n):
        return math.sqrt(n)

    def _truncate(self, x, a):
        return np.where(np.abs(x) >= a, x, 0.0)


class GroupLasso(Regularizer):
    """``phi(x) = mu * sum_i ||x_{G_i}||_2`` over a partition into groups.

    Parameters
    ----------
    groups : sequence
        Either ``(start, stop)`` pairs of contiguous ranges or index arrays.
        Together they must partition ``{0, ..., n-1}``.
    sigma : float
        Exponent of the direction-dependent safeguard.
    """

    polyhedral = False

    def __init__(self, groups, mu=1.0, sigma=1.0):
        idx = []
        for g in groups:
            if isinstance(g, tuple) and len(g) == 2 and all(isinstance(t, (int, np.integer)) for t in g):
                idx.append(np.arange(g[0], g[1]))
            else:
                idx.append(np.asarray(g, dtype=int).ravel())
        if not idx:
            raise UsageError("at least one group is required")
        allidx = np.concatenate(idx)
        n = allidx.size
        if np.any(np.sort(allidx) != np.arange(n)) or any(i.size == 0 for i in idx):
            raise UsageError("groups must partition {0, ..., n-1} into nonempty sets")
        super().__init__(mu, n)
        self.groups = idx
        self.sigma = float(sigma)
        # group id per coordinate, for vectorised reductions
        self._gid = np.empty(n, dtype=int)
        for k, i in enumerate(idx):
            self._gid[i] = k

    @property
    def n_groups(self):
        return len(self.groups)

    def group_norms(self, x):
        return np.sqrt(np.bincount(self._gid, weights=x * x, minlength=self.n_groups))

    def value(self, x):
        return self.mu * float(self.group_norms(x).sum())

    def prox(self, z, metric=1.0):
        z = np.asarray(z, dtype=float)
        lam = as_diag(metric, z.size)
        y = np.zeros_like(z)
        for i in self.groups:
            y[i] = self._prox_group(z[i], lam[i])
        return y

    def _prox_group(self, z, lam):
        # minimise mu*||y|| + 0.5*sum(lam*(y-z)^2)
        mu = self.mu
        lz = lam * z
        if np.linalg.norm(lz) <= mu:
            return np.zeros_like(z)
        if np.ptp(lam) == 0:
            nz = np.linalg.norm(z)
            return (1.0 - mu / (lam[0] * nz)) * z
        # y_j = lam_j z_j r / (lam_j r + mu) with r = ||y||; solve for r
        def h(r):
            return np.linalg.norm(lz / (lam * r + mu)) - 1.0
        r = brentq(h, 0.0, np.linalg.norm(z), xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return lz * r / (lam * r + mu)

    def curvature(self, x, v):
        # mu * (I - u u^T) / ||x_G|| on every nonzero group, u = x_G / ||x_G||
        out = np.zeros_like(np.asarray(v, dtype=float))
        for i in self.groups:
            nx = np.linalg.norm(x[i])
            if nx > 0:
                u = x[i] / nx
                out[i] = self.mu * (v[i] - u * (u @ v[i])) / nx
        return out

    def subdiff_project(self, x, v):
        w = np.empty_like(v, dtype=float)
        for i in self.groups:
            nx = np.linalg.norm(x[i])
            if nx > 0:
                w[i] = self.mu * x[i] / nx
            else:
                nv = np.linalg.norm(v[i])
                w[i] = v[i] if nv <= self.mu else self.mu * v[i] / nv
        return w

    def gamma_max(self, x, d):
        _check_unit(d)
        best = math.inf
        for i in self.groups:
            xi, di = x[i], d[i]
            nx = np.linalg.norm(xi)
            dd = di @ di
            if nx == 0 or dd == 0:
                continue
            t = -(xi @ di) / dd
            if t > 0 and np.linalg.norm(xi + t * di) <= 1e-12 * nx:
                best = min(best, t)
        return best

    def gamma_dir(self, x, d):
        best = self.gamma_max(x, d)
        for i in self.groups:
            xi, di = x[i], d[i]
            nx = np.linalg.norm(xi)
            nd = np.linalg.norm(di)
            if nx == 0 or nd == 0:
                continue
            theta = float(np.clip(xi @ di / (nx * nd), -1.0, 1.0))
            den = 1.0 - theta * theta
            if den > 0:
                best = min(best, nx ** (1.0 + self.sigma) / den)
            if theta < 0:
                best = min(best, nx / (-2.0 * theta))
        return best

    def gamma(self, x):
        nrm = self.group_norms(x)
        nz = nrm[nrm > 0]
        return float(nz.min()) if nz.size else math.inf

    def stratum_index(self, x):
        return int(np.count_nonzero(self.group_norms(x) == 0))

    def num_strata(self, n=None):
        return self.n_groups

    def kappa(self, n=None):
        return math.sqrt(self.n_groups)

    def _truncate(self, x, a):
        keep = self.group_norms(x) >= a
        return np.where(keep[self._gid], x, 0.0)


class LinfNorm(Regularizer):
    """``phi(x) = mu * ||x||_inf``.

    Stratum ``i`` holds points whose maximum modulus is attained by at least
    ``i + 1`` coordinates; the deepest stratum ``n`` is the origin.  Ties are
    detected with absolute tolerance ``TIE_TOL``.
    """

    def value(self, x):
        return self.mu * float(np.max(np.abs(x))) if np.size(x) else 0.0

    def prox(self, z, metric=1.0):
        # y_j = sign(z_j) min(|z_j|, t) with sum_j lam_j (|z_j| - t)_+ = mu
        z = np.asarray(z, dtype=float)
        lam = as_diag(metric, z.size)
        az = np.abs(z)
        if lam @ az <= self.mu:
            return np.zeros_like(z)
        order = np.argsort(-az)
        a_s, l_s = az[order], lam[order]
        cl = np.cumsum(l_s)
        cla = np.cumsum(l_s * a_s)
        # on the piece where the top k entries are clipped: t = (cla_k - mu) / cl_k
        t = (cla - self.mu) / cl
        nxt = np.append(a_s[1:], 0.0)
        k = int(np.argmax(t >= nxt))
        return np.sign(z) * np.minimum(az, t[k])

    def _max_set(self, x):
        ax = np.abs(x)
        top = ax.max()
        return ax >= top - TIE_TOL, top

    def tangent_project(self, x, v):
        # coordinates attaining the max move together: v_K -> s <s, v_K> / |K|
        v = np.array(v, dtype=float)
        if not np.any(x):
            return v
        K, _ = self._max_set(x)
        s = np.sign(x[K])
        v[K] = s * (s @ v[K]) / K.sum()
        return v

    def subdiff_project(self, x, v):
        v = np.asarray(v, dtype=float)
        if not np.any(x):
            return project_l1_ball(v, self.mu)
        K, _ = self._max_set(x)
        s = np.sign(x[K])
        w = np.zeros_like(v)
        w[K] = s * project_simplex(s * v[K], self.mu)
        return w

    def gamma_max(self, x, d):
        # t -> max_j |x_j + t d_j| is the upper envelope of the 2n lines
        # +-(x_j + t d_j); return its first kink after t = 0.
        _check_unit(d)
        c = np.concatenate([x, -x])
        s = np.concatenate([d, -d])
        top = c.max()
        on = c >= top - TIE_TOL
        s_act = s[on].max()
        steeper = s > s_act
        if not steeper.any():
            return math.inf
        t = (top - c[steeper]) / (s[steeper] - s_act)
        t = t[t > 0]
        return float(t.min()) if t.size else math.inf

    def gamma(self, x):
        n = x.size
        if not np.any(x):
            return math.inf
        K, top = self._max_set(x)
        if K.all():
            # a single coordinate kinks when it crosses zero
            return top if n == 1 else 2.0 * top
        return float(top - np.abs(x[~K]).max())

    def stratum_index(self, x):
        if not np.any(x):
            return x.size
        K, _ = self._max_set(x)
        return int(K.sum()) - 1

    def num_strata(self, n):
        return n

    def kappa(self, n):
        return math.sqrt(n)

    def _truncate(self, x, a):
        K, top = self._max_set(x)
        if K.all():
            return np.zeros_like(x)
        lift = np.abs(x) > top - a
        sgn = np.where(x >= 0, 1.0, -1.0)
        y = np.where(lift, sgn * top, x)
        if self.gamma(y) < a:
            # every coordinate was lifted but the common modulus is too small
            return np.zeros_like(x)
        return y


def make_regularizer(kind, mu=1.0, groups=None, sigma=1.0):
    """Build a regularizer from a short name: ``l1``, ``group`` or ``linf``."""
    kind = kind.lower()
    if kind in ("l1", "lasso"):
        return L1Norm(mu)
    if kind in ("group", "group_lasso", "grouplasso"):
        if groups is None:
            raise UsageError("group lasso needs a group partition")
        return GroupLasso(groups, mu, sigma)
    if kind in ("linf", "l_inf", "inf"):
        return LinfNorm(mu)
    raise UsageError(f"unknown regularizer {kind!r}")
