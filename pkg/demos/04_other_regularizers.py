#!/usr/bin/env python3
"""Group lasso, the l-infinity norm, and a tanh-loss classifier from a LIBSVM file.

The semismooth Newton model is specific to the l1 norm.  For the other
regularizers the solver uses the Hessian of f (plus the curvature of the
group norm on nonzero groups) with a truncated-CG or Cauchy subproblem
solver.  This path is general rather than fast: on group lasso the
truncated-CG variant spends far more operator products than FISTA.  On
the l-infinity norm the weight used here (20 mu) converges, but on this
instance weights of mu or 2 mu stop at the 3000-iteration limit while
FISTA still converges.
"""

import os
import tempfile

import numpy as np

from ntr import CompositeProblem, GroupLasso, LinfNorm, TrConfig, solve
from ntr.bench import fista, gen_classification, gen_lasso, load_libsvm


def regularizers():
    inst = gen_lasso(n=256, m=64, d=20.0, seed=0)
    smooth = inst.problem().smooth
    groups = [(i, i + 4) for i in range(0, 256, 4)]
    cases = [("group lasso, 64 groups of 4", GroupLasso(groups, 0.5 * inst.mu)),
             ("l-infinity", LinfNorm(20 * inst.mu))]
    for name, reg in cases:
        ref = fista(CompositeProblem(smooth, reg), 1.0, 1e-6)
        print(f"{name}: FISTA N_A {ref.n_calls}")
        for sub in ("cg_steihaug", "cauchy"):
            cfg = TrConfig(eps_stop=1e-6, max_iterations=3000, model="hessian", subsolver=sub)
            rep = solve(CompositeProblem(smooth, reg), cfg)
            print(f"  {sub:12s} {rep.status} in {rep.iterations} iterations (N_A {rep.n_calls}); "
                  f"|psi gap| {abs(rep.psi - ref.psi):.1e}")
        if isinstance(reg, GroupLasso):
            active = sum(np.any(rep.x[a:b] != 0) for a, b in groups)
            print(f"  {active} of {len(groups)} groups active")
        else:
            top = np.abs(rep.x).max()
            print(f"  {int(np.sum(np.abs(rep.x) == top))} coordinates share the max |x_i| = {top:.4g}")


def classification():
    inst = gen_classification(N=2000, n=100, seed=3)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "train.libsvm")
        with open(path, "w") as fh:
            for xi, yi in zip(inst.X, inst.y):
                feats = " ".join(f"{j + 1}:{v:.17g}" for j, v in enumerate(xi) if v != 0)
                fh.write(f"{int(yi):+d} {feats}\n")
        data = load_libsvm(path)
    rep = solve(data.problem(), TrConfig(eps_stop=1e-4))
    acc = np.mean(np.sign(data.X @ rep.x) == data.y)
    print(f"\ntanh-loss classifier ({data.N} samples, {data.n} features): {rep.status} in "
          f"{rep.iterations} iterations; {np.count_nonzero(rep.x)} nonzero weights; "
          f"training accuracy {acc:.3f}")


if __name__ == "__main__":
    regularizers()
    classification()
