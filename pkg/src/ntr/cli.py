"""Command line interface: ``ntr gen``, ``ntr solve`` and ``ntr bench``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time

import numpy as np

from .bench.harness import BenchConfig, RANGES, TOLERANCES, fista, local_rate_diagnostic, run_benchmark
from .bench.problems import gen_classification, gen_lasso, load_instance, load_libsvm
from .config import load_config
from .core import CompositeProblem, NonFiniteError, UsageError
from .regularizers import make_regularizer
from .solver import InvariantError, solve


class JsonLinesLog:
    """Append one JSON object per line to a file (``-`` for stdout, None to discard)."""

    def __init__(self, path):
        self._fh = None
        if path == "-":
            self._fh = sys.stdout
        elif path is not None:
            self._fh = open(path, "w")

    def __call__(self, record):
        if self._fh is None:
            return
        record = {"t": round(time.time(), 6), **record}
        self._fh.write(json.dumps(record, default=_plain) + "\n")
        self._fh.flush()

    def close(self):
        if self._fh not in (None, sys.stdout):
            self._fh.close()


def _plain(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    raise TypeError(type(o))


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _merge(args, section, names):
    # command-line flags override the config file
    out = dict(section)
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            out[name] = v
    return out


# ---------------------------------------------------------------------------

def build_instance(params):
    """Create or load the instance described by a problem dict."""
    kind = params.get("problem", "lasso")
    if params.get("instance"):
        return load_instance(params["instance"])
    if params.get("data"):
        return load_libsvm(params["data"], scale=params.get("scale", False))
    if kind == "lasso":
        return gen_lasso(params.get("n", 4096), params.get("m", 512), params.get("range", 20.0),
                         params.get("sigma", 0.1), params.get("mu"), params.get("seed", 0))
    if kind == "classification":
        return gen_classification(params.get("N", 2000), params.get("n", 100),
                                  params.get("flip", 0.05), params.get("mu", 0.01),
                                  params.get("seed", 0))
    raise UsageError(f"unknown problem {kind!r}")


def build_problem(instance, reg_params):
    """Composite problem of ``instance`` with the regularizer overridden if requested."""
    problem = instance.problem()
    kind = reg_params.get("regularizer", "l1")
    mu = reg_params.get("mu", problem.regularizer.mu) * reg_params.get("mu_scale", 1.0)
    groups = None
    if kind.lower().startswith("group"):
        size = reg_params.get("group_size", 1)
        groups = [(i, min(i + size, problem.dim)) for i in range(0, problem.dim, size)]
    return CompositeProblem(problem.smooth, make_regularizer(kind, mu, groups))


def cmd_gen(args):
    params = _merge(args, load_config(args.config).problem,
                  ["problem", "n", "m", "range", "sigma", "seed", "N", "flip"])
    if args.mu is not None:
        params["mu"] = args.mu
    inst = build_instance(params)
    inst.to_json(args.output)
    print(f"wrote {params.get('problem', 'lasso')} instance to {args.output}")
    return 0


def cmd_solve(args):
    cfg = load_config(args.config)
    params = _merge(args, cfg.problem, ["problem", "n", "m", "range", "sigma", "seed",
                                      "instance", "data"])
    reg = _merge(args, cfg.regularizer, ["regularizer", "mu"])
    solver_cfg = cfg.solver
    changes = {k: v for k, v in (("eps_stop", args.eps), ("max_iterations", args.max_iter))
               if v is not None}
    if changes:
        solver_cfg = dataclasses.replace(solver_cfg, **changes)
    log = JsonLinesLog(args.log)
    try:
        problem = build_problem(build_instance(params), reg)
        log({"event": "start", "method": args.method, "problem": params, "regularizer": reg,
             "config": dataclasses.asdict(solver_cfg)})
        if args.method == "fista":
            report = fista(problem, 1.0, solver_cfg.eps_stop, args.fista_max_iter)
        else:
            report = solve(problem, solver_cfg,
                           callback=lambda r: log({"event": "iteration", **r.as_row()}))
    except (NonFiniteError, InvariantError) as exc:
        log({"event": "abort", "error": f"{type(exc).__name__}: {exc}"})
        log.close()
        print(f"error: {exc}", file=sys.stderr)
        return 2
    diag = local_rate_diagnostic(report)
    summary = {"event": "done", "status": report.status, "iterations": report.iterations,
               "n_calls": report.n_calls, "psi": report.psi, "residual": report.residual,
               "wall_time": report.wall_time, "support_stable_from": diag.support_stable_from,
               "rate_slope": diag.rate_slope}
    log(summary)
    log.close()
    if args.report:
        report.to_json(args.report)
    if args.csv:
        report.write_csv(args.csv)
    print(f"{args.method}: {report.status} after {report.iterations} iterations, "
          f"N_A={report.n_calls}, psi={report.psi:.12g}, residual={report.residual:.3e}")
    return 0 if report.status == "converged" else 1


def cmd_bench(args):
    cfg = load_config(args.config)
    b = cfg.bench
    p = cfg.problem
    bc = BenchConfig(
        n=args.n or p.get("n", 4096), m=args.m or p.get("m", 512),
        sigma=p.get("sigma", 0.1), mu=cfg.regularizer.get("mu"),
        ranges=args.ranges or b.get("ranges", RANGES),
        tolerances=args.tolerances or b.get("tolerances", TOLERANCES),
        trials=args.trials or int(b.get("trials", 5)),
        seed=args.seed if args.seed is not None else p.get("seed", 0),
        methods=args.methods or b.get("methods", ("ntr", "fista")),
        max_iterations=cfg.solver.max_iterations,
        fista_max_iter=int(b.get("fista_max_iter", 20000)), solver=cfg.solver)
    log = JsonLinesLog(args.log)
    log({"event": "start", "bench": dataclasses.asdict(bc)})
    rows = run_benchmark(bc, args.output, log)
    log({"event": "done", "rows": len(rows)})
    log.close()
    print(f"wrote {len(rows)} rows to {args.output}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="ntr", description="Nonsmooth trust-region solver.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a test instance (JSON)")
    g.add_argument("--problem", choices=["lasso", "classification"])
    g.add_argument("-n", type=int)
    g.add_argument("-m", type=int)
    g.add_argument("-N", type=int, help="number of samples (classification)")
    g.add_argument("--range", type=float, help="dynamic range in dB (lasso)")
    g.add_argument("--sigma", type=float, help="noise variance (lasso)")
    g.add_argument("--flip", type=float, help="label noise (classification)")
    g.add_argument("--mu", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--config")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--instance", help="JSON instance written by 'gen'")
    s.add_argument("--data", help="LIBSVM file (tanh-loss classification)")
    s.add_argument("--problem", choices=["lasso", "classification"])
    s.add_argument("-n", type=int)
    s.add_argument("-m", type=int)
    s.add_argument("--range", type=float)
    s.add_argument("--sigma", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--regularizer", choices=["l1", "group", "linf"])
    s.add_argument("--mu", type=float)
    s.add_argument("--method", choices=["ntr", "fista"], default="ntr")
    s.add_argument("--eps", type=float, help="stopping tolerance")
    s.add_argument("--max-iter", type=int)
    s.add_argument("--fista-max-iter", type=int, default=20000)
    s.add_argument("--config")
    s.add_argument("--report", help="final report (JSON)")
    s.add_argument("--csv", help="per-iteration table (CSV)")
    s.add_argument("--log", help="run log (JSON lines, '-' for stdout)")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="NTR vs FISTA on random Lasso instances")
    b.add_argument("-n", type=int)
    b.add_argument("-m", type=int)
    b.add_argument("--ranges", type=_floats)
    b.add_argument("--tolerances", type=_floats)
    b.add_argument("--trials", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--methods", type=lambda t: t.replace(",", " ").split())
    b.add_argument("--config")
    b.add_argument("-o", "--output", required=True, help="benchmark table (CSV)")
    b.add_argument("--log", help="run log (JSON lines, '-' for stdout)")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ntr {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
