import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from ntr.core import CompositeProblem, LinearOracle, QuadraticOracle, ZeroOracle
from ntr.regularizers import GroupLasso, L1Norm, LinfNorm


def brute_prox_1d(phi, z, lam=1.0, width=10.0):
    """Minimise ``phi(y) + lam/2 (y - z)^2`` over a bracket by Brent's method."""
    res = minimize_scalar(lambda y: phi(y) + 0.5 * lam * (y - z) ** 2,
                          bounds=(z - width, z + width), method="bounded",
                          options={"xatol": 1e-12})
    return res.x


def random_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.exp(rng.uniform(0, np.log(cond), n))
    return (Q * ev) @ Q.T


def quad_problem(Q, c, reg):
    return CompositeProblem(QuadraticOracle(Q, c), reg)


def zero_problem(n, reg):
    return CompositeProblem(ZeroOracle(n), reg)


def brute_prox_2d(phi, z, lam=(1.0, 1.0)):
    # nested golden-section search: y1 -> min over y2.  Golden section takes an
    # absolute tolerance below sqrt(eps), which the kinked inner problem needs.
    def inner(y1):
        r = minimize_scalar(lambda y2: phi(np.array([y1, y2])) + 0.5 * lam[1] * (y2 - z[1]) ** 2,
                            bracket=(z[1] - 10, z[1] + 10), method="golden", tol=1e-14)
        return r.fun + 0.5 * lam[0] * (y1 - z[0]) ** 2, r.x

    r = minimize_scalar(lambda y1: inner(y1)[0], bracket=(z[0] - 10, z[0] + 10),
                        method="golden", tol=1e-14)
    return np.array([r.x, inner(r.x)[1]])


def all_regs(n, rng=None):
    sizes = [2, 1] if n == 3 else [1] * n
    starts = np.cumsum([0] + sizes)
    return [L1Norm(1.3), GroupLasso([(int(a), int(b)) for a, b in zip(starts[:-1], starts[1:])], 0.7),
            LinfNorm(1.1)]


def linear_problem(c, reg):
    """f(x) = <c, x>, so grad f = c everywhere."""
    return CompositeProblem(LinearOracle(np.asarray(c, dtype=float)), reg)


def brute_dist(grad, x, mu):
    # dist(0, grad + mu * box) with the box {sgn(x_i)} or [-1, 1]; separable, so
    # search each free coordinate for the smallest |grad_i + mu w|
    parts = []
    for gi, xi in zip(grad, x):
        if xi != 0:
            parts.append(abs(gi + mu * np.sign(xi)))
        else:
            r = minimize_scalar(lambda w: abs(gi + mu * np.clip(w, -1.0, 1.0)),
                                bracket=(-1.0, 1.0), method="golden", tol=1e-15)
            parts.append(r.fun)
    return float(np.linalg.norm(parts))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, echoed in the terminal summary so they survive output capture
ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    def record(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
