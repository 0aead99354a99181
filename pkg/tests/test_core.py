import numpy as np
import pytest

from ntr.core import (CallCounter, CompositeProblem, LinearOracle, NonFiniteError,
                      QuadraticOracle, SmoothOracle, UsageError, ZeroOracle, eval_psi,
                      finite_diff_check)
from ntr.regularizers import GroupLasso, L1Norm, LinfNorm


class TestEvalPsi:
    def test_zero_point(self):
        p = CompositeProblem(QuadraticOracle(np.eye(2)), L1Norm(1.0))
        assert eval_psi(p, np.zeros(2)) == 0.0

    def test_hand_value(self):
        p = CompositeProblem(QuadraticOracle(np.eye(2)), L1Norm(1.0))
        assert eval_psi(p, np.array([1.0, -2.0])) == pytest.approx(5.5)

    def test_linf(self):
        p = CompositeProblem(ZeroOracle(2), LinfNorm(1.0))
        assert eval_psi(p, np.array([3.0, -4.0])) == 4.0

    def test_dimension_mismatch(self):
        p = CompositeProblem(ZeroOracle(2), L1Norm(1.0))
        with pytest.raises(UsageError):
            eval_psi(p, np.zeros(3))

    def test_regularizer_dimension_checked(self):
        with pytest.raises(UsageError):
            CompositeProblem(ZeroOracle(2), GroupLasso([(0, 3)]))


class TestCounter:
    def test_add_and_pause(self):
        c = CallCounter()
        c.add()
        c.add(2)
        with c.paused():
            c.add(10)
        assert c.count == 3
        c.reset()
        assert c.count == 0

    def test_negative_increment_rejected(self):
        with pytest.raises(UsageError):
            CallCounter().add(-1)


class TestFiniteDiff:
    def test_quadratic(self, rng):
        Q = rng.standard_normal((6, 6))
        Q = Q + Q.T
        p = CompositeProblem(QuadraticOracle(Q, rng.standard_normal(6)), L1Norm())
        rep = finite_diff_check(p, rng.standard_normal(6), h=1e-5)
        assert rep.max_grad_err <= 1e-6
        assert rep.max_hvp_err <= 1e-6

    def test_linear_has_zero_hessian(self, rng):
        p = CompositeProblem(LinearOracle(rng.standard_normal(4)), L1Norm())
        assert finite_diff_check(p, rng.standard_normal(4)).max_hvp_err == 0.0

    def test_detects_wrong_gradient(self, rng):
        class Wrong(QuadraticOracle):
            def grad(self, x):
                return 2 * super().grad(x)

        p = CompositeProblem(Wrong(np.eye(3)), L1Norm())
        assert finite_diff_check(p, np.ones(3)).max_grad_err > 0.5

    def test_calls_not_counted(self, rng):
        p = CompositeProblem(QuadraticOracle(np.eye(3)), L1Norm())
        finite_diff_check(p, np.ones(3))
        assert p.counter.count == 0


class TestNonFinite:
    def test_nan_gradient_is_an_error(self):
        class Bad(SmoothOracle):
            def value(self, x):
                return 0.0

            def grad(self, x):
                return np.full(self.dim, np.nan)

        p = CompositeProblem(Bad(2), L1Norm())
        with pytest.raises(NonFiniteError):
            p.grad(np.zeros(2))

    def test_nonfinite_point(self):
        p = CompositeProblem(ZeroOracle(2), L1Norm())
        with pytest.raises(NonFiniteError):
            p.check_point(np.array([np.inf, 0.0]))
