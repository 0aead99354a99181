"""Nonsmooth trust-region method with stepsize safeguards and truncation.

The main entry point is :func:`solve`.  The building blocks (ratio tests,
radius updates, the safeguarded step and the truncation loop) are exposed
as separate functions so they can be tested in isolation.
"""

from __future__ import annotations

import json
import math
import time
import zlib
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, List, Optional

import numpy as np

from .core import NonFiniteError, UsageError
from .directions import (NaturalResidual, NormalMap, ScaledNaturalResidual,
                         natural_residual, pseudo_gradient)
from .regularizers import L1Norm
from .subproblem import (QuadraticModel, SubproblemSolution, cauchy_point,
                         cg_steihaug, check_quality, estimate_norm,
                         project_to_region, reduced_newton_step,
                         regularized_step)


class InvariantError(RuntimeError):
    """An internal invariant of the method was violated."""


MODELS = ("semismooth", "hessian")
SUBSOLVERS = ("reduced", "cg_steihaug", "regularized", "cauchy")
DIRECTIONS = ("scaled_natural", "natural", "normal_map")


@dataclass
class TrConfig:
    """Parameters of the trust-region method.

    ``model="semismooth"`` uses ``g = lam * F_nat`` and ``B = lam * J`` with
    ``J`` the generalized Jacobian of the natural residual (l1 only);
    ``model="hessian"`` uses ``B = Hessian of f`` with the pseudo-gradient
    chosen by ``direction``.

    Notes on the less obvious fields:

    ``t_reg``, ``t_res``, ``t_max``
        Regularisation of the reduced Newton system,
        ``t_k = min(t_max, t_reg + t_res * r_k / r_0)`` with ``r`` the
        stopping residual.  It vanishes at the rate of the residual, so it
        does not slow the local rate, and it makes the system solvable when
        the active block of the Hessian is singular.
    ``orthant_align``, ``orthant_clip``
        Sign-consistency of the reduced Newton step for the l1 norm: drop
        components that would move a zero coordinate against ``-grad f``
        and (with ``orthant_clip``) stop coordinates at zero instead of
        letting them change sign.
    ``lambda_rule``
        ``"lipschitz"`` sets ``lam = ||dgrad|| / ||dx||`` after a successful
        step, ``"ratio"`` its reciprocal; see :func:`adaptive_lambda`.
    ``restrict_hessian``
        With ``model="hessian"``, compress the Hessian to the coordinates
        where the pseudo-gradient is nonzero, ``B = D H D``.  Without it, a
        Newton-type step leaves the current stratum (e.g. makes zero groups
        nonzero) and can fail to be a descent direction for ``psi``.
    ``cg_rel``, ``cg_power``, ``cg_max_iter``
        Inner CG stops at relative residual
        ``cg_rel * min(1, ||g||**cg_power)``.
    """

    eta: float = 0.05
    eta1: float = 0.25
    eta2: float = 0.75
    r1: float = 0.25
    r2: float = 2.0
    delta0: float = 1.0
    delta_max: float = 1e3
    gamma1: Optional[float] = None
    gamma2: Optional[float] = None
    eps0: float = 0.1
    eps_ratio: float = 0.5
    ell: str = "zero"
    zeta: float = 1e-8
    model: str = "semismooth"
    direction: str = "scaled_natural"
    subsolver: str = "reduced"
    lam0: float = 1.0
    adaptive_lambda: bool = True
    lambda_rule: str = "lipschitz"
    lam_min: float = 1e-3
    lam_max: float = 1e3
    eps_stop: float = 1e-6
    max_iterations: int = 500
    check_safeguard_decrease: bool = True
    truncation: bool = True
    t_reg: float = 0.0
    t_res: float = 1.0
    t_max: float = math.inf
    orthant_align: bool = True
    orthant_clip: bool = True
    reg_lam1: float = 1e-4
    reg_lam2: float = 1e4
    cg_rel: float = 1e-2
    cg_power: float = 1.0
    cg_max_iter: Optional[int] = None
    monitor_quality: bool = False
    restrict_hessian: bool = True

    def __post_init__(self):
        if not 0 < self.eta < self.eta1 < self.eta2 < 1:
            raise UsageError("need 0 < eta < eta1 < eta2 < 1")
        if not 0 < self.r1 < 1 < self.r2:
            raise UsageError("need 0 < r1 < 1 < r2")
        if not 0 < self.delta0 <= self.delta_max:
            raise UsageError("need 0 < delta0 <= delta_max")
        if not self.eps0 > 0 or not 0 < self.eps_ratio < 1:
            raise UsageError("epsilon sequence must be positive, decreasing and summable")
        if not 0 < self.lam_min <= self.lam0 <= self.lam_max:
            raise UsageError("need 0 < lam_min <= lam0 <= lam_max")
        if self.ell not in ("zero", "piecewise"):
            raise UsageError("ell must be 'zero' or 'piecewise'")
        if self.model not in MODELS:
            raise UsageError(f"model must be one of {MODELS}")
        if self.subsolver not in SUBSOLVERS:
            raise UsageError(f"subsolver must be one of {SUBSOLVERS}")
        if self.direction not in DIRECTIONS:
            raise UsageError(f"direction must be one of {DIRECTIONS}")
        if self.subsolver == "reduced" and self.model != "semismooth":
            raise UsageError("the reduced Newton solver needs the semismooth model")
        if not self.eps_stop > 0 or self.max_iterations < 0:
            raise UsageError("eps_stop must be positive and max_iterations nonnegative")
        if self.lambda_rule not in ("lipschitz", "ratio"):
            raise UsageError("lambda_rule must be 'lipschitz' or 'ratio'")
        if self.t_reg < 0 or self.t_res < 0 or not self.t_max > 0:
            raise UsageError("regularisation parameters must be nonnegative")

    def eps(self, s):
        return self.eps0 * self.eps_ratio ** s

    @property
    def eps_sum(self):
        return self.eps0 / (1.0 - self.eps_ratio)

    def ell_fn(self):
        if self.ell == "zero":
            return lambda r: 0.0
        # the piecewise rule uses 1 above zeta; clamped to the admissible 1/2
        return lambda r: 0.0 if r < self.zeta else 0.5

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class TrState:
    x: np.ndarray
    delta: float
    counters: np.ndarray
    lam: float
    iteration: int = 0


@dataclass
class TruncationEvent:
    stratum: int
    eps: float
    shift: float


@dataclass
class IterationRecord:
    iteration: int
    step_kind: str
    rho1: Optional[float]
    rho2: Optional[float]
    alpha: Optional[float]
    delta_before: float
    delta_after: float
    g_norm: float
    residual: float
    lam: float
    psi_before: float
    psi_trial: float
    psi_after: float
    n_truncations: int
    truncation_strata: List[int]
    truncation_eps: List[float]
    truncation_shift: float
    n_calls: int
    inner_iterations: int
    support_size: int
    support_id: str
    sufficient_decrease_ok: Optional[bool] = None
    cauchy_fraction_ok: Optional[bool] = None

    @property
    def accepted(self):
        return self.step_kind != "rejected"

    def as_row(self):
        d = asdict(self)
        d["truncation_strata"] = " ".join(map(str, self.truncation_strata))
        d["truncation_eps"] = " ".join(f"{e:.6g}" for e in self.truncation_eps)
        return d


@dataclass
class SolveReport:
    x: np.ndarray
    status: str
    records: List[IterationRecord] = field(default_factory=list)
    n_calls: int = 0
    wall_time: float = 0.0
    residual: float = math.nan
    psi: float = math.nan
    lam: float = 1.0
    iterations: int = 0
    total_shift: float = 0.0
    shift_bound: float = math.inf
    method: str = "ntr"
    final_support_id: str = ""
    history: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.status == "converged"

    def to_dict(self, include_x=True):
        d = {
            "method": self.method,
            "status": self.status,
            "iterations": self.iterations,
            "n_calls": self.n_calls,
            "wall_time": self.wall_time,
            "residual": self.residual,
            "psi": self.psi,
            "lam": self.lam,
            "total_shift": self.total_shift,
            "shift_bound": self.shift_bound,
            "records": [asdict(r) for r in self.records],
            "history": self.history,
        }
        if include_x:
            d["x"] = self.x.tolist()
        return d

    def to_json(self, path=None, include_x=True):
        text = json.dumps(self.to_dict(include_x), default=_json_default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def write_csv(self, path):
        import csv

        names = [f.name for f in fields(IterationRecord)]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=names)
            w.writeheader()
            for r in self.records:
                w.writerow(r.as_row())


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


# ---------------------------------------------------------------------------
# building blocks


def _ratio(actual, predicted, scale):
    # scale: magnitude of the quantities the reduction was computed from;
    # predicted reductions below roundoff at that magnitude count as failure
    if not predicted > 1e-14 * scale:
        return -math.inf
    return actual / predicted


def actual_reduction(reg, x, s, psi_x, psi_t, grad_x, grad_t):
    """``psi(x) - psi(x + s)`` and the magnitude it was computed from.

    Differencing two nearly equal objective values loses every digit once
    the reduction falls to roundoff level relative to ``|psi|``.  In that
    regime the smooth part is taken from the trapezoidal rule
    ``-<grad f(x) + grad f(x+s), s> / 2`` (exact for quadratics) and the
    nonsmooth part from :meth:`Regularizer.decrease`, and the returned scale
    is the size of these terms rather than ``|psi|``.  A trial point whose
    evaluated objective is larger than ``psi(x)`` always reports the direct
    (negative) difference, so accepted steps never raise the stored ``psi``.
    """
    direct = psi_x - psi_t
    if abs(direct) > 1e-8 * (1.0 + abs(psi_x)) or direct < 0:
        return direct, 1.0 + abs(psi_x)
    df = -0.5 * float((grad_x + grad_t) @ s)
    dphi = reg.decrease(x, s)
    return df + dphi, abs(df) + abs(dphi)


def ratio_rho1(problem, x, s, model, psi_x=None, pred=None, psi_trial=None):
    """Actual over predicted reduction for the full step ``s``.

    A predicted reduction of at most ``1e-14 * (1 + |psi(x)|)`` yields
    ``-inf``.
    """
    psi_x = problem.psi(x) if psi_x is None else psi_x
    pred = model.reduction(s) if pred is None else pred
    psi_trial = problem.psi(x + s) if psi_trial is None else psi_trial
    return _ratio(psi_x - psi_trial, pred, 1.0 + abs(psi_x))


def ratio_rho2(problem, x, alpha, sbar, model, psi_x=None, pred=None, psi_trial=None):
    """Actual over predicted reduction for the safeguarded step ``alpha*sbar``."""
    if not alpha > 0:
        raise UsageError("alpha must be positive")
    return ratio_rho1(problem, x, alpha * sbar, model, psi_x, pred, psi_trial)


def _ray_reduction(model, s, Bs, alpha):
    # m(0) - m(alpha * s / ||s||) from cached <g, s> and <s, B s>
    ns = np.linalg.norm(s)
    c = alpha / ns
    return float(-c * (model.g @ s) - 0.5 * c * c * (s @ Bs))


def _unit(s, ns):
    u = s / ns
    # a second pass removes roundoff from badly scaled s
    return u / np.linalg.norm(u)


def safeguarded_step(reg, x, s, s_C, model, check=True, Bs=None):
    """Safeguarded stepsize along ``s`` with a Cauchy fallback.

    ``alpha = min(gamma_dir(x, s/||s||), ||s||)``.  If the model decrease
    along the shortened step is less than ``alpha / (2 ||s||)`` of the full
    decrease (only tested when ``check``), the Cauchy step is used instead.
    ``s_C`` may be an array, a :class:`SubproblemSolution` or a zero-argument
    callable producing one (evaluated only when needed).

    Returns ``(alpha, sbar, used_cauchy)``.
    """
    ns = float(np.linalg.norm(s))
    if ns == 0.0:
        raise UsageError("safeguarded step needs s != 0")
    sbar = _unit(s, ns)
    alpha = min(reg.gamma_dir(x, sbar), ns)
    if not check:
        return alpha, sbar, False
    if Bs is None:
        Bs = model.B(s)
    full = model.reduction(s, Bs)
    if _ray_reduction(model, s, Bs, alpha) >= alpha / (2.0 * ns) * full:
        return alpha, sbar, False
    if callable(s_C):
        s_C = s_C()
    sc = s_C.s if isinstance(s_C, SubproblemSolution) else np.asarray(s_C)
    nsc = float(np.linalg.norm(sc))
    sbar_c = _unit(sc, nsc)
    return min(reg.gamma_dir(x, sbar_c), nsc), sbar_c, True


def update_radius_after_rho1(delta, rho1, config):
    """Radius update after a successful first test."""
    if rho1 > config.eta2:
        return min(config.delta_max, config.r2 * delta)
    return delta


def update_radius_after_rho2(delta, rho2, config):
    """Radius update after the second (safeguarded) test."""
    if rho2 < config.eta1:
        return config.r1 * delta
    if rho2 > config.eta2:
        return min(config.delta_max, config.r2 * delta)
    return delta


def accept_step(x, alpha, sbar, rho2, eta):
    return x + alpha * sbar if rho2 >= eta else x


def truncation_step(reg, x, counters, eps):
    """Repeatedly truncate ``x`` until ``gamma(x) >= eps(c_i)``.

    ``counters`` holds one truncation counter per stratum and is updated in
    place; ``eps`` maps a counter value to a truncation level.  Each pass
    moves ``x`` into a strictly deeper stratum, so at most ``m`` passes run.

    Returns ``(x_new, counters, events)``.
    """
    m = len(counters) - 1
    events = []
    for _ in range(m + 1):
        i = reg.stratum_index(x)
        level = eps(int(counters[i]))
        if reg.gamma(x) >= level:
            return x, counters, events
        x_new = reg.truncate(x, level)
        j = reg.stratum_index(x_new)
        if j <= i:
            raise InvariantError(f"truncation did not deepen the stratum ({i} -> {j})")
        events.append(TruncationEvent(i, level, float(np.linalg.norm(x_new - x))))
        counters[i] += 1
        x = x_new
    raise InvariantError(f"truncation exceeded {m} passes")


def adaptive_lambda(lam, x_new, x_old, grad_new, grad_old, bounds=(1e-3, 1e3),
                    rule="ratio"):
    """Secant update of the metric scalar after a successful step.

    ``rule="ratio"`` gives ``clamp(||dx|| / ||dgrad||)``; ``rule="lipschitz"``
    the reciprocal ``clamp(||dgrad|| / ||dx||)``, a local Lipschitz estimate
    of ``grad f``.  ``lam`` is returned unchanged when either difference
    vanishes.
    """
    num = float(np.linalg.norm(x_new - x_old))
    den = float(np.linalg.norm(grad_new - grad_old))
    if rule == "lipschitz":
        num, den = den, num
    elif rule != "ratio":
        raise UsageError(f"unknown lambda rule {rule!r}")
    if den == 0.0 or num == 0.0 or not np.isfinite(den):
        return lam
    return float(np.clip(num / den, bounds[0], bounds[1]))


def align_to_orthant(x, grad, p, clip_crossing=True):
    """Keep ``x + p`` in the closed orthant selected by ``x`` and ``-grad``.

    Components that would move a zero coordinate against ``-grad_i`` are
    dropped and, with ``clip_crossing``, components that would carry a
    nonzero coordinate through zero stop at zero.  Along the resulting step
    the l1 term is linear.
    """
    bad = (x == 0) & (p * grad > 0)
    cross = (x != 0) & (x * (x + p) < 0) if clip_crossing else None
    if not bad.any() and (cross is None or not cross.any()):
        return p
    q = p.copy()
    q[bad] = 0.0
    if cross is not None:
        q[cross] = -x[cross]
    return q


def support_descriptor(reg, x):
    """Short hash of the active structure of ``x`` (nonzero pattern for l1)."""
    if isinstance(reg, L1Norm):
        key = np.flatnonzero(x)
    elif hasattr(reg, "group_norms"):
        key = np.flatnonzero(reg.group_norms(x))
    else:
        ax = np.abs(x)
        key = np.flatnonzero(ax >= ax.max() - 1e-12) if x.size and ax.max() > 0 else np.array([], int)
    return format(zlib.crc32(np.asarray(key, dtype=np.int64).tobytes()), "08x"), int(key.size)


# ---------------------------------------------------------------------------
# model construction

def _semismooth_model(problem, x, grad, lam, psi_x):
    reg = problem.regularizer
    if not isinstance(reg, L1Norm):
        raise UsageError("the semismooth model is implemented for the l1 norm only")
    u = x - grad / lam
    act = reg.prox_active(u, lam)
    F = x - reg.prox(u, lam)
    g = lam * F

    def B(v):
        out = lam * v
        out[act] = problem.hvp(x, v)[act]
        return out

    def BT(v):
        w = np.where(act, v, 0.0)
        out = problem.hvp(x, w)
        out[~act] += lam * v[~act]
        return out

    return QuadraticModel(psi_x, g, B, symmetric=False, BT=BT), F, act


def _hessian_model(problem, x, grad, lam, psi_x, direction, restrict=True):
    kind = {"scaled_natural": ScaledNaturalResidual(lam),
            "natural": NaturalResidual(lam),
            "normal_map": NormalMap()}[direction]
    out = pseudo_gradient(problem, x, kind, grad)
    reg = problem.regularizer

    def hess(v):
        # f's Hessian plus the curvature of phi along its current stratum
        return problem.hvp(x, v) + reg.curvature(x, v)

    if not restrict:
        return QuadraticModel(psi_x, out.g, hess, symmetric=True)
    # compressed to the stratum's tangent directions and to the coordinates
    # the pseudo-gradient moves: B = D P H P D
    mask = out.g != 0

    def restricted(v):
        w = reg.tangent_project(x, np.where(mask, v, 0.0))
        return np.where(mask, reg.tangent_project(x, hess(w)), 0.0)

    return QuadraticModel(psi_x, out.g, restricted, symmetric=True)


# ---------------------------------------------------------------------------

def solve(problem, config=None, x0=None, callback: Optional[Callable] = None):
    """Minimise ``psi = f + phi`` with the nonsmooth trust-region method.

    Parameters
    ----------
    problem : CompositeProblem
    config : TrConfig, optional
    x0 : array, optional
        Starting point (zeros by default).
    callback : callable, optional
        Called with every :class:`IterationRecord` as it is produced.

    Returns
    -------
    SolveReport
        Stops with status ``converged`` once ``lam * ||F_nat^lam(x)||`` is at
        most ``eps_stop``, ``zero_g`` if the pseudo-gradient vanishes exactly,
        ``stalled`` if the radius underflows so that no nonzero step can be
        represented, and ``max_iter`` otherwise.
    """
    cfg = TrConfig() if config is None else config
    reg = problem.regularizer
    n = problem.dim
    x = np.zeros(n) if x0 is None else problem.check_point(np.array(x0, dtype=float))
    m = reg.num_strata(n)
    shift_bound = m * reg.kappa(n) * cfg.eps_sum
    state = TrState(x, cfg.delta0, np.zeros(m + 1, dtype=int), cfg.lam0)
    counter = problem.counter
    calls0 = counter.count
    ell = cfg.ell_fn()
    t_start = time.perf_counter()

    try:
        f_x, grad = problem.f_and_grad(x)
    except NonFiniteError as exc:
        raise NonFiniteError(f"iteration 0: {exc}") from exc
    psi_x = f_x + reg.value(x)
    records = []
    history = new_history()
    total_shift = 0.0
    status = "max_iter"
    cache = None  # model data reused across rejected iterations
    res0 = None

    def residual_of(x, grad, lam):
        return float(lam * np.linalg.norm(natural_residual(problem, x, lam, grad)))

    for k in range(cfg.max_iterations + 1):
        state.iteration = k
        lam = state.lam
        if cache is None:
            if cfg.model == "semismooth":
                model, F, act = _semismooth_model(problem, x, grad, lam, psi_x)
                res = float(lam * np.linalg.norm(F))
            else:
                model = _hessian_model(problem, x, grad, lam, psi_x, cfg.direction,
                                       cfg.restrict_hessian)
                F = act = None
                res = residual_of(x, grad, lam)
            if res0 is None:
                res0 = max(res, 1e-300)
            cache = {"model": model, "F": F, "act": act, "res": res, "p": None, "lam": lam,
                     "x": x, "grad": grad, "res0": res0}
            _log_iterate(history, res, counter.count - calls0, time.perf_counter() - t_start,
                         psi_x, support_descriptor(reg, x)[0])
        model, res = cache["model"], cache["res"]
        g_norm = float(np.linalg.norm(model.g))
        if res <= cfg.eps_stop:
            status = "converged"
            break
        if g_norm == 0.0:
            status = "zero_g"
            break
        if k == cfg.max_iterations:
            break

        delta = state.delta
        sol = _subproblem(problem, x, cfg, cache, delta, g_norm)
        s, pred, Bs = sol.s, sol.predicted_reduction, sol.Bs
        fallback = sol.flag == "fallback"
        if not (pred > 0 and np.isfinite(pred)) or not np.any(s):
            sol = cauchy_point(model, delta)
            s, pred, Bs = sol.s, sol.predicted_reduction, sol.Bs
            fallback = True
        if not np.linalg.norm(s) > 0:
            # the radius has underflowed: no representable step remains
            status = "stalled"
            break
        if Bs is None:
            Bs = model.B(s)

        dec_ok = frac_ok = None
        if cfg.monitor_quality:
            dec_ok, frac_ok = _monitor(problem, cfg, model, sol, delta, ell)

        try:
            f_t, grad_t = problem.f_and_grad(x + s)
        except NonFiniteError as exc:
            raise NonFiniteError(f"iteration {k}: {exc}") from exc
        psi_t = f_t + reg.value(x + s)
        red, scale = actual_reduction(reg, x, s, psi_x, psi_t, grad, grad_t)
        rho1 = _ratio(red, pred, scale)
        rho2 = alpha = None
        if rho1 >= cfg.eta1:
            x_tilde, psi_tilde, grad_tilde = x + s, psi_t, grad_t
            new_delta = update_radius_after_rho1(delta, rho1, cfg)
            kind = "cauchy-fallback" if fallback else "full"
            executed_pred, executed_red = pred, red
        else:
            cauchy = []

            def make_cauchy():
                cauchy.append(sol if fallback else cauchy_point(model, delta))
                return cauchy[-1]

            alpha, sbar, used_c = safeguarded_step(
                reg, x, s, make_cauchy, model, check=cfg.check_safeguard_decrease, Bs=Bs)
            step = alpha * sbar
            if not used_c and alpha == float(np.linalg.norm(s)):
                pred2, psi2, grad2, red2, scale2 = pred, psi_t, grad_t, red, scale
            else:
                base = cauchy[-1] if used_c else None
                pred2 = (_ray_reduction(model, base.s, base.Bs, alpha) if used_c
                         else _ray_reduction(model, s, Bs, alpha))
                f2, grad2 = problem.f_and_grad(x + step)
                psi2 = f2 + reg.value(x + step)
                red2, scale2 = actual_reduction(reg, x, step, psi_x, psi2, grad, grad2)
            rho2 = _ratio(red2, pred2, scale2)
            new_delta = update_radius_after_rho2(delta, rho2, cfg)
            if rho2 >= cfg.eta:
                x_tilde, psi_tilde, grad_tilde = x + step, psi2, grad2
                kind = "cauchy-fallback" if (used_c or fallback) else "safeguarded"
                executed_pred, executed_red = pred2, red2
            else:
                x_tilde, psi_tilde, grad_tilde = x, psi_x, grad
                kind = "rejected"
        if not 0 < new_delta <= cfg.delta_max:
            raise InvariantError(f"radius {new_delta} left (0, delta_max]")

        events = []
        shift = 0.0
        if kind != "rejected":
            if not executed_red >= 0 or psi_tilde > psi_x:
                raise InvariantError("accepted step increased psi")
            if executed_red < cfg.eta * executed_pred - 1e-12:
                raise InvariantError("accepted step does not certify the ratio test")
            x_new, psi_new, grad_new = x_tilde, psi_tilde, grad_tilde
            if cfg.truncation:
                x_new, _, events = truncation_step(reg, x_tilde, state.counters, cfg.eps)
                if events:
                    shift = float(np.linalg.norm(x_new - x_tilde))
                    total_shift += shift
                    if total_shift > shift_bound * (1 + 1e-12):
                        raise InvariantError("cumulative truncation exceeds its bound")
                    f_new, grad_new = problem.f_and_grad(x_new)
                    psi_new = f_new + reg.value(x_new)
            if cfg.adaptive_lambda:
                state.lam = adaptive_lambda(state.lam, x_new, x, grad_new, grad,
                                            (cfg.lam_min, cfg.lam_max), cfg.lambda_rule)
            x, psi_x, grad = x_new, psi_new, grad_new
            state.x = x
            cache = None
        state.delta = new_delta

        sid, ssize = support_descriptor(reg, x)
        rec = IterationRecord(
            iteration=k, step_kind=kind, rho1=rho1, rho2=rho2, alpha=alpha,
            delta_before=delta, delta_after=new_delta, g_norm=g_norm, residual=res,
            lam=lam, psi_before=model.psi,
            psi_trial=psi_tilde, psi_after=psi_x, n_truncations=len(events),
            truncation_strata=[e.stratum for e in events],
            truncation_eps=[e.eps for e in events], truncation_shift=shift,
            n_calls=counter.count - calls0, inner_iterations=sol.inner_iterations,
            support_size=ssize, support_id=sid, sufficient_decrease_ok=dec_ok, cauchy_fraction_ok=frac_ok)
        records.append(rec)
        if callback is not None:
            callback(rec)

    res = cache["res"] if cache is not None else residual_of(x, grad, state.lam)
    sid, _ = support_descriptor(reg, x)
    return SolveReport(
        x=x, status=status, records=records, n_calls=counter.count - calls0,
        wall_time=time.perf_counter() - t_start, residual=res, psi=psi_x,
        lam=state.lam, iterations=len(records), total_shift=total_shift,
        shift_bound=shift_bound, final_support_id=sid, history=history)


def new_history():
    """Per-iterate trace: residual, calls and time when it was known, psi, support."""
    return {"residual": [], "n_calls": [], "time": [], "psi": [], "support_id": []}


def _log_iterate(history, res, calls, elapsed, psi, sid):
    history["residual"].append(res)
    history["n_calls"].append(calls)
    history["time"].append(elapsed)
    history["psi"].append(psi)
    history["support_id"].append(sid)


def _subproblem(problem, x, cfg, cache, delta, g_norm):
    model = cache["model"]
    if cfg.ell == "piecewise" and delta < cfg.zeta or cfg.subsolver == "cauchy":
        return cauchy_point(model, delta)
    tol = cfg.cg_rel * min(1.0, g_norm ** cfg.cg_power)
    if cfg.subsolver == "reduced":
        if cache["p"] is None:
            p, it, flag, Jp = reduced_newton_step(
                lambda v: problem.hvp(x, v), cache["F"], cache["lam"], cache["act"],
                _t_k(cfg, cache), tol, cfg.cg_max_iter, full_output=True)
            if cfg.orthant_align:
                q = align_to_orthant(x, cache["grad"], p, cfg.orthant_clip)
                if q is not p:
                    p, Jp = q, None
            cache["p"] = (p, it, flag, None if Jp is None else cache["lam"] * Jp)
        p, it, flag, Bp = cache["p"]
        if not np.any(p):
            return SubproblemSolution(p, 0.0, False, it, cfg.t_reg, flag, None)
        np_ = float(np.linalg.norm(p))
        if flag == "negative_curvature":
            # as in CG-Steihaug: follow the last descent direction to the boundary
            s, boundary = (delta / np_) * p, True
        else:
            s, boundary = project_to_region(p, delta)
        Bs = model.B(s) if Bp is None else Bp * (float(np.linalg.norm(s)) / np_)
        return SubproblemSolution(s, model.reduction(s, Bs), boundary, it, cfg.t_reg, flag, Bs)
    if cfg.subsolver == "cg_steihaug":
        return cg_steihaug(model, delta, tol, cfg.cg_max_iter)
    sol = regularized_step(model, delta, cfg.reg_lam1, cfg.reg_lam2, tol, cfg.cg_max_iter,
                           t0=cfg.t_reg)
    # the projected Newton step need not beat the Cauchy point (it keeps its
    # direction however small the region); fall back when it does not
    sc = cauchy_point(model, delta)
    if sol.predicted_reduction < (1.0 - cfg.ell_fn()(float(np.linalg.norm(sol.s)))) * sc.predicted_reduction:
        sc.flag = "cauchy_fallback"
        sc.inner_iterations = sol.inner_iterations
        return sc
    return sol


def _t_k(cfg, cache):
    # scale-free: the stopping residual relative to its initial value
    return min(cfg.t_max, cfg.t_reg + cfg.t_res * cache["res"] / cache["res0"])


def _monitor(problem, cfg, model, sol, delta, ell):
    with problem.counter.paused():
        sc = cauchy_point(model, delta)
        if cfg.gamma1 is not None and cfg.gamma2 is not None:
            g1, g2 = cfg.gamma1, cfg.gamma2
        elif cfg.subsolver == "regularized":
            l1, l2 = cfg.reg_lam1, cfg.reg_lam2
            g1, g2 = l1 / (2 * l2), (l1 + 2 * l2) / (2 * l2 * (l1 + l2))
        else:
            kb = estimate_norm(model.apply_sym, model.dim)
            g1, g2 = 1.0, 1.0 / max(kb, 1e-300)
        q = check_quality(model, sol, sc, ell, g1, g2, delta)
    return q.sufficient_decrease_ok, q.cauchy_fraction_ok
