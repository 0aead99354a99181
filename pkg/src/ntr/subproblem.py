"""Trust-region subproblem solvers for the quadratic model

    m(s) = psi + <g, s> + 0.5 <s, B s>,   ||s|| <= Delta,

where ``B`` is a linear operator that need not be symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .core import UsageError


@dataclass
class QuadraticModel:
    """Quadratic model ``m(s)``.

    ``B`` applies the second-order term.  When ``symmetric`` is false,
    ``BT`` must apply its transpose so that the symmetric part can be formed.
    """

    psi: float
    g: np.ndarray
    B: Callable[[np.ndarray], np.ndarray]
    symmetric: bool = True
    BT: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def dim(self):
        return self.g.size

    def apply_sym(self, v):
        if self.symmetric:
            return self.B(v)
        if self.BT is None:
            raise UsageError("asymmetric model needs a transpose apply")
        return 0.5 * (self.B(v) + self.BT(v))

    def reduction(self, s, Bs=None):
        """``m(0) - m(s)``; ``Bs`` may be passed to save an operator apply."""
        if Bs is None:
            Bs = self.B(s)
        return float(-(self.g @ s) - 0.5 * (s @ Bs))

    def value(self, s):
        return self.psi - self.reduction(s)


@dataclass
class SubproblemSolution:
    s: np.ndarray
    predicted_reduction: float
    hit_boundary: bool = False
    inner_iterations: int = 0
    t_k: float = 0.0
    flag: str = "converged"
    Bs: Optional[np.ndarray] = None


def cauchy_point(model, delta):
    """Minimiser of ``m(-t g)`` over ``0 <= t <= delta / ||g||``."""
    if not delta > 0:
        raise UsageError("trust-region radius must be positive")
    g = model.g
    ng = float(np.linalg.norm(g))
    if ng == 0.0:
        raise UsageError("Cauchy point undefined for g = 0")
    Bg = model.B(g)
    gBg = float(g @ Bg)
    tmax = delta / ng
    t = tmax if gBg <= 0 else min(ng * ng / gBg, tmax)
    s = -t * g
    pred = t * ng * ng - 0.5 * t * t * gBg
    return SubproblemSolution(s, pred, hit_boundary=t == tmax, flag="cauchy", Bs=-t * Bg)


def _to_boundary(z, d, delta):
    # tau >= 0 with ||z + tau d|| = delta
    a = d @ d
    b = 2.0 * (z @ d)
    c = z @ z - delta * delta
    disc = max(b * b - 4.0 * a * c, 0.0)
    return (-b + np.sqrt(disc)) / (2.0 * a)


def cg_steihaug(model, delta, tol=1e-6, max_iter=None):
    """Truncated conjugate gradients on the symmetric part of ``B``.

    Stops on the trust-region boundary, at negative curvature, or when the
    residual drops below ``tol * ||g||``.  The first iterate is a Cauchy-type
    step along ``-g``, so the model decrease is at least the Cauchy decrease.
    """
    if not delta > 0:
        raise UsageError("trust-region radius must be positive")
    g = model.g
    n = g.size
    ng = float(np.linalg.norm(g))
    if ng == 0.0:
        raise UsageError("CG-Steihaug called with g = 0")
    if max_iter is None:
        max_iter = 2 * n
    z = np.zeros(n)
    Bz = np.zeros(n)
    r = g.copy()
    d = -r
    rr = float(r @ r)

    def done(z, Bz, boundary, it, flag):
        pred = float(-(g @ z) - 0.5 * (z @ Bz))
        return SubproblemSolution(z, pred, boundary, it, 0.0, flag, Bz)

    for it in range(1, max_iter + 1):
        Bd = model.apply_sym(d)
        dBd = float(d @ Bd)
        if dBd <= 0:
            tau = _to_boundary(z, d, delta)
            return done(z + tau * d, Bz + tau * Bd, True, it, "negative_curvature")
        alpha = rr / dBd
        z_new = z + alpha * d
        if np.linalg.norm(z_new) >= delta:
            tau = _to_boundary(z, d, delta)
            return done(z + tau * d, Bz + tau * Bd, True, it, "boundary")
        z, Bz = z_new, Bz + alpha * Bd
        r = r + alpha * Bd
        rr_new = float(r @ r)
        if np.sqrt(rr_new) <= tol * ng:
            return done(z, Bz, False, it, "converged")
        d = -r + (rr_new / rr) * d
        rr = rr_new
    return done(z, Bz, False, max_iter, "max_iter")


def _cg(apply, b, tol, max_iter, curvature_floor=None):
    """Plain CG for ``K x = b`` with ``K`` symmetric.

    Returns ``(x, iterations, flag)``.  If ``curvature_floor(d, Kd)`` is
    given and returns False for a search direction, the solve stops with
    flag ``"indefinite"``.
    """
    return _cg_residual(apply, b, tol, max_iter, curvature_floor)[:3]


def _cg_residual(apply, b, tol, max_iter, curvature_floor=None):
    # as _cg, additionally returning the recursively updated residual b - K x
    x = np.zeros_like(b)
    r = b.copy()
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        return x, 0, "converged", r
    d = r.copy()
    rr = float(r @ r)
    for it in range(1, max_iter + 1):
        Kd = apply(d)
        dKd = float(d @ Kd)
        if curvature_floor is not None and not curvature_floor(d, Kd):
            return x, it, "indefinite", r
        if dKd <= 0:
            return x, it, "negative_curvature", r
        alpha = rr / dKd
        x = x + alpha * d
        r = r - alpha * Kd
        rr_new = float(r @ r)
        if np.sqrt(rr_new) <= tol * nb:
            return x, it, "converged", r
        d = r + (rr_new / rr) * d
        rr = rr_new
    return x, max_iter, "max_iter", r


def project_to_region(p, delta):
    """``min(delta, ||p||) * p / ||p||``."""
    npn = float(np.linalg.norm(p))
    if npn <= delta:
        return p.copy(), False
    return (delta / npn) * p, True


def regularized_step(model, delta, lam1, lam2, cg_tol=None, max_iter=None,
                     t0=0.0, t_init=1e-8, t_factor=10.0, max_retries=5):
    """Regularised Newton step projected onto the trust region.

    Solves ``(B + t I) p = -g`` until the residual is at most
    ``lam1 / (2 (lam1 + lam2)) * ||g||`` (tightened to ``cg_tol * ||g||``
    when given), then returns ``s = min(delta, ||p||) p / ||p||``.
    Whenever ``0.5 <h, B h> + t ||h||^2 < lam1 ||h||^2`` is observed, ``t``
    is raised (first to ``t_init``, then by ``t_factor``) and the solve
    restarted; after ``max_retries`` raises the Cauchy point is returned.
    """
    g = model.g
    n = g.size
    ng = float(np.linalg.norm(g))
    if ng == 0.0:
        raise UsageError("regularized step called with g = 0")
    rel = lam1 / (2.0 * (lam1 + lam2))
    if cg_tol is not None:
        rel = min(rel, cg_tol)
    if max_iter is None:
        max_iter = 2 * n
    t = float(t0)
    total = 0
    for attempt in range(max_retries + 1):
        def floor(h, Kh, t=t):
            hh = h @ h
            # Kh = (B + t I) h
            return 0.5 * (h @ Kh - t * hh) + t * hh >= lam1 * hh

        if model.symmetric:
            p, it, flag = _cg(lambda v, t=t: model.B(v) + t * v, -g, rel, max_iter, floor)
        else:
            op = LinearOperator((n, n), matvec=lambda v, t=t: model.B(v) + t * v, dtype=float)
            p, info = gmres(op, -g, rtol=rel, atol=0.0, maxiter=max_iter, restart=min(n, 50))
            it = max_iter if info > 0 else 0
            flag = "converged" if info == 0 else "max_iter"
            if np.any(p) and not floor(p, model.B(p) + t * p):
                flag = "indefinite"
        total += it
        if flag in ("indefinite", "negative_curvature"):
            t = t_init if t == 0 else t * t_factor
            continue
        if not np.any(p):
            break
        s, boundary = project_to_region(p, delta)
        Bs = model.B(s)
        return SubproblemSolution(s, model.reduction(s, Bs), boundary, total, t, flag, Bs)
    sol = cauchy_point(model, delta)
    sol.flag = "fallback"
    sol.inner_iterations = total
    return sol


def reduced_newton_step(hvp, F, lam, active, t=0.0, tol=1e-10, max_iter=None,
                        full_output=False):
    """Block-eliminated solve of ``(J + t I) p = -F`` with

        J = [[H_II / lam, H_IO / lam], [0, I]],

    ``I`` the ``active`` mask and ``O`` its complement.  ``hvp`` applies the
    full Hessian ``H``; each CG product applies it once to a vector
    supported on ``I``.

    Returns ``(p, iterations, flag)``; with ``full_output`` also ``J p``,
    recovered from the CG residual without another Hessian product.
    """
    F = np.asarray(F, dtype=float)
    n = F.size
    act = np.asarray(active, dtype=bool)
    p = np.zeros(n)
    p[~act] = -F[~act] / (1.0 + t)
    resid = np.zeros(n)
    usable = True
    it, flag = 0, "converged"
    if act.any():
        rhs = -F[act]
        if np.any(p[~act]):
            rhs = rhs - hvp(p)[act] / lam
        buf = np.zeros(n)

        def apply(v):
            buf[:] = 0.0
            buf[act] = v
            return hvp(buf)[act] / lam + t * v

        if max_iter is None:
            max_iter = int(act.sum()) * 2 + 10
        pI, it, flag, r = _cg_residual(apply, rhs, tol, max_iter)
        if flag == "negative_curvature" and not np.any(pI):
            # no usable curvature: fall back to the right-hand side direction
            pI, usable = rhs, False
        resid[act] = r
        p[act] = pI
    if full_output:
        # (J + t I) p = -F - resid, the residual living on I only
        return p, it, flag, (-F - t * p - resid) if usable else None
    return p, it, flag


reduced_lasso_step = reduced_newton_step


def estimate_norm(apply, n, iters=20, rng=0):
    """Power-method estimate of the spectral norm of a symmetric operator."""
    rng = np.random.default_rng(rng)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = apply(v)
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


@dataclass
class QualityReport:
    sufficient_decrease_ok: bool
    cauchy_fraction_ok: bool
    reduction: float
    cauchy_reduction: float
    decrease_bound: float


def check_quality(model, s, s_C, ell, gamma1, gamma2, delta):
    """Check the model-decrease conditions for a step.

    ``s`` and ``s_C`` are arrays or :class:`SubproblemSolution` objects;
    ``ell`` maps ``||s||`` into ``[0, 1]``.  The first condition asks for
    ``m(0)-m(s) >= gamma1/2 ||g|| min(delta, gamma2 ||g||)``, the second for
    ``m(0)-m(s) >= (1 - ell(||s||)) (m(0)-m(s_C))``.
    """
    def red(x):
        if isinstance(x, SubproblemSolution):
            return x.predicted_reduction, x.s
        return model.reduction(x), x

    r, sv = red(s)
    rc, _ = red(s_C)
    ng = float(np.linalg.norm(model.g))
    bound = 0.5 * gamma1 * ng * min(delta, gamma2 * ng)
    slack = 1e-12 * max(1.0, abs(model.psi))
    dec_ok = r >= bound - slack
    frac_ok = r >= (1.0 - ell(float(np.linalg.norm(sv)))) * rc - slack
    return QualityReport(bool(dec_ok), bool(frac_ok), r, rc, bound)
