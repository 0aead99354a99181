#!/usr/bin/env python3
"""What truncation does, first by hand and then inside a solve.

Truncation snaps a point onto a deeper stratum (more zeros for the l1
norm) when it sits closer than a threshold to that stratum.  The
threshold shrinks each time a stratum is used, so the total distance the
iterates are moved stays summable.
"""

import numpy as np

from ntr import L1Norm, LinfNorm, TrConfig, solve
from ntr.bench import gen_lasso


def by_hand():
    reg = L1Norm(1.0)
    x = np.array([1.0, 2.0])
    print("l1 truncation of x = (1, 2):")
    for a in (0.5, 1.5, 2.5):
        y = reg.truncate(x, a)
        print(f"  a = {a}: gamma(x) = {reg.gamma(x):.1f} -> {y}  "
              f"(stratum {reg.stratum_index(x)} -> {reg.stratum_index(y)})")

    reg = LinfNorm(1.0)
    x = np.array([3.0, -2.9, 1.0])
    y = reg.truncate(x, 0.5)
    print(f"\nl-inf truncation of {x} with a = 0.5: {y}  "
          f"(entries at the maximum: {int(np.sum(np.abs(x) == np.abs(x).max()))} -> "
          f"{int(np.sum(np.abs(y) == np.abs(y).max()))})")


def in_a_solve():
    inst = gen_lasso(n=4096, m=512, d=60.0, seed=1)
    for trunc in (True, False):
        rep = solve(inst.problem(), TrConfig(eps_stop=1e-6, truncation=trunc))
        events = [(r.iteration, s) for r in rep.records for s in r.truncation_strata]
        print(f"\ntruncation={trunc}: {rep.status} in {rep.iterations} iterations, N_A={rep.n_calls}")
        if trunc:
            print(f"  {len(events)} truncation events, total shift {rep.total_shift:.3e} "
                  f"(bound {rep.shift_bound:.3e})")
            print("  first events (iteration, stratum):", events[:8])


if __name__ == "__main__":
    by_hand()
    in_a_solve()
