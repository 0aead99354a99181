"""FISTA baseline, benchmark tables and the local-rate diagnostic."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..core import NonFiniteError, UsageError
from ..directions import natural_residual
from ..solver import (InvariantError, SolveReport, TrConfig, _log_iterate,
                      new_history, solve, support_descriptor)
from .problems import gen_lasso

TOLERANCES = (1e0, 1e-1, 1e-2, 1e-4, 1e-6)
RANGES = (20.0, 40.0, 60.0, 80.0)
CSV_COLUMNS = ["method", "range", "tolerance", "time", "NA", "objective", "residual",
               "iters", "mu", "trials", "failed"]


def fista(problem, L=1.0, eps_stop=1e-6, max_iter=20000, count_stopping=True, x0=None):
    """Accelerated proximal gradient with constant step ``1/L``, no restarts.

    Stops once ``L * ||x - prox^L(x - grad f(x) / L)|| <= eps_stop``, i.e.
    the stopping residual of :func:`ntr.solver.solve` with ``lam = L``.
    Each iteration costs one gradient at the extrapolated point.  The
    stopping test needs the gradient at the iterate itself; its cost is
    included in ``n_calls`` when ``count_stopping`` is true (it is then
    ``iterations + 1`` residual evaluations) and excluded otherwise.  The
    objective recorded in ``history["psi"]`` is the running best.
    """
    if not L > 0:
        raise UsageError("L must be positive")
    reg = problem.regularizer
    counter = problem.counter
    calls0 = counter.count
    x = np.zeros(problem.dim) if x0 is None else problem.check_point(np.array(x0, dtype=float))
    y = x.copy()
    t = 1.0
    history = new_history()
    best = math.inf
    status = "max_iter"
    stop_calls = 0
    t_start = time.perf_counter()

    def check(x):
        nonlocal stop_calls
        c = counter.count
        if count_stopping:
            f, g = problem.f_and_grad(x)
        else:
            with counter.paused():
                f, g = problem.f_and_grad(x)
        stop_calls += counter.count - c
        res = float(L * np.linalg.norm(natural_residual(problem, x, L, g)))
        return f + reg.value(x), res

    k = 0
    while True:
        psi, res = check(x)
        best = min(best, psi)
        _log_iterate(history, res, counter.count - calls0, time.perf_counter() - t_start,
                     best, support_descriptor(reg, x)[0])
        if res <= eps_stop:
            status = "converged"
            break
        if k == max_iter:
            break
        try:
            g = problem.grad(y)
        except NonFiniteError as exc:
            raise NonFiniteError(f"iteration {k}: {exc}") from exc
        x_new = reg.prox(y - g / L, L)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        k += 1

    rep = SolveReport(x=x, status=status, n_calls=counter.count - calls0,
                      wall_time=time.perf_counter() - t_start, residual=res, psi=psi,
                      lam=L, iterations=k, method="fista",
                      final_support_id=history["support_id"][-1], history=history)
    rep.stopping_calls = stop_calls
    return rep


# ---------------------------------------------------------------------------
# run tables

@dataclass
class BenchConfig:
    """Experiment protocol for :func:`run_benchmark`."""

    n: int = 4096
    m: int = 512
    sigma: float = 0.1
    mu: Optional[float] = None
    ranges: Sequence[float] = RANGES
    tolerances: Sequence[float] = TOLERANCES
    trials: int = 5
    seed: int = 0
    methods: Sequence[str] = ("ntr", "fista")
    max_iterations: int = 500
    fista_max_iter: int = 20000
    solver: TrConfig = field(default_factory=TrConfig)

    def __post_init__(self):
        bad = set(self.methods) - {"ntr", "fista"}
        if bad:
            raise UsageError(f"unknown methods {sorted(bad)}")
        if self.trials < 1:
            raise UsageError("need at least one trial")


@dataclass
class RunRow:
    method: str
    range: float
    tolerance: float
    time: float
    NA: float
    objective: float
    residual: float
    iters: float
    mu: float
    trials: int
    failed: int = 0


def first_reach(history, tol):
    """Index of the first logged iterate with residual ``<= tol`` (or None)."""
    for i, r in enumerate(history["residual"]):
        if r <= tol:
            return i
    return None


def _run_one(method, problem, cfg, tol_min):
    if method == "ntr":
        scfg = TrConfig(**{**cfg.solver.__dict__, "eps_stop": tol_min,
                           "max_iterations": cfg.max_iterations})
        return solve(problem, scfg)
    return fista(problem, 1.0, tol_min, cfg.fista_max_iter)


def run_benchmark(config=None, path=None, log=None):
    """Run every (range, trial, method) and tabulate the tolerance crossings.

    For each tolerance the time, operator count, objective and residual are
    read off the run's history at the first iterate meeting it; rows are
    means over trials.  A run that aborts or never reaches a tolerance is
    counted in ``failed`` and left out of that row's means.  Returns the
    list of :class:`RunRow` and writes it to ``path`` as CSV when given.
    ``log`` receives one dict per finished run.
    """
    cfg = BenchConfig() if config is None else config
    tols = sorted(cfg.tolerances, reverse=True)
    rows = []
    for d in cfg.ranges:
        per = {(meth, tol): [] for meth in cfg.methods for tol in tols}
        mus = []
        for trial in range(cfg.trials):
            inst = gen_lasso(cfg.n, cfg.m, d, cfg.sigma, cfg.mu, cfg.seed + trial)
            mus.append(inst.mu)
            for meth in cfg.methods:
                problem = inst.problem()
                try:
                    rep = _run_one(meth, problem, cfg, tols[-1])
                    error = None
                except (NonFiniteError, InvariantError, UsageError) as exc:
                    rep, error = None, f"{type(exc).__name__}: {exc}"
                if log is not None:
                    log({"event": "run", "method": meth, "range": d, "trial": trial,
                         "seed": inst.seed, "status": rep.status if rep else "error",
                         "error": error, "iterations": rep.iterations if rep else None,
                         "n_calls": rep.n_calls if rep else None,
                         "psi": rep.psi if rep else None})
                for tol in tols:
                    i = None if rep is None else first_reach(rep.history, tol)
                    h = rep.history if rep is not None else None
                    per[meth, tol].append(None if i is None else
                                          (h["time"][i], h["n_calls"][i], h["psi"][i],
                                           h["residual"][i], i))
        for meth in cfg.methods:
            for tol in tols:
                got = [r for r in per[meth, tol] if r is not None]
                failed = len(per[meth, tol]) - len(got)
                if got:
                    mean = np.mean(np.array(got, dtype=float), axis=0)
                else:
                    mean = [math.nan] * 5
                rows.append(RunRow(meth, float(d), float(tol), float(mean[0]), float(mean[1]),
                                   float(mean[2]), float(mean[3]), float(mean[4]),
                                   float(np.mean(mus)), cfg.trials, failed))
    if path is not None:
        write_table(rows, path)
    return rows


def write_table(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([r.method, r.range, r.tolerance, f"{r.time:.6f}", f"{r.NA:.1f}",
                        repr(r.objective), repr(r.residual), f"{r.iters:.1f}", repr(r.mu),
                        r.trials, r.failed])


# ---------------------------------------------------------------------------
# local convergence rate

@dataclass
class RateDiagnostic:
    support_stable_from: Optional[int]
    rate_slope: Optional[float]
    tail_points: int
    tail: List[float] = field(default_factory=list)


def rate_slope(residuals, min_points=3):
    """Least-squares slope of ``log r[k+1]`` against ``log r[k]``.

    Uses all positive entries of ``residuals``; returns None when fewer than
    ``min_points`` residuals are available.
    """
    r = np.asarray([v for v in residuals if v > 0 and np.isfinite(v)], dtype=float)
    if r.size < min_points:
        return None
    lx, ly = np.log(r[:-1]), np.log(r[1:])
    if np.ptp(lx) == 0:
        return None
    return float(np.polyfit(lx, ly, 1)[0])


def local_rate_diagnostic(report, min_points=3):
    """Finite identification and the empirical order of the residual tail.

    ``support_stable_from`` is the first logged iterate after which the
    support descriptor never changes; the slope is computed over the
    residuals from that iterate on (see :func:`rate_slope`).  Residuals
    are taken from the report's history, whose last entry is the final
    iterate.
    """
    if isinstance(report, SolveReport):
        hist = report.history
    else:
        hist = report
    ids, res = list(hist["support_id"]), list(hist["residual"])
    if not ids:
        return RateDiagnostic(None, None, 0)
    start = len(ids) - 1
    while start > 0 and ids[start - 1] == ids[-1]:
        start -= 1
    tail = res[start:]
    return RateDiagnostic(start, rate_slope(tail, min_points), len(tail), tail)
