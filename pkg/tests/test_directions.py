import numpy as np
import pytest

from conftest import brute_dist, linear_problem, quad_problem, random_spd, zero_problem
from ntr.core import UsageError
from ntr.directions import (DirectionOutput, NaturalResidual, NormalMap,
                            ScaledNaturalResidual, natural_residual, normal_map_g,
                            pseudo_gradient, stopping_residual)
from ntr.regularizers import GroupLasso, L1Norm, LinfNorm


class TestNormalMap:
    def test_zero_coordinate_inside_box(self):
        out = normal_map_g(linear_problem([0.3], L1Norm(1.0)), np.array([0.0]))
        assert out.g[0] == 0.0

    def test_nonzero_coordinate(self):
        out = normal_map_g(linear_problem([0.5], L1Norm(1.0)), np.array([2.0]))
        assert out.g[0] == pytest.approx(1.5)

    def test_stationary(self):
        out = normal_map_g(linear_problem([0.2, -0.7], L1Norm(1.0)), np.zeros(2))
        assert out.u == 0.0 and not np.any(out.d) and not np.any(out.g)

    def test_minimal_norm_brute_force(self, rng):
        for _ in range(100):
            n = rng.integers(1, 4)
            x = rng.normal(size=n) * (rng.random(n) < 0.5)
            c = rng.normal(scale=2, size=n)
            mu = rng.uniform(0.3, 2)
            out = normal_map_g(linear_problem(c, L1Norm(mu)), x)
            assert np.linalg.norm(out.g) == pytest.approx(brute_dist(c, x, mu), abs=1e-8)

    @pytest.mark.parametrize("reg", [L1Norm(0.8), GroupLasso([(0, 2), (2, 3)], 0.8), LinfNorm(0.8)])
    def test_membership(self, reg, rng):
        # g - grad f lies in the subdifferential: projecting it again is the identity
        for _ in range(50):
            x = rng.normal(size=3) * (rng.random(3) < 0.6)
            c = rng.normal(size=3)
            g = normal_map_g(linear_problem(c, reg), x).g
            w = g - c
            assert np.allclose(reg.subdiff_project(x, w), w, atol=1e-10)


class TestNaturalResidual:
    def test_hand_example(self):
        F = natural_residual(linear_problem([2.0, 0.0], L1Norm(1.0)), np.zeros(2), 1.0)
        assert np.allclose(F, [1.0, 0.0])

    def test_zero_smooth_part(self):
        F = natural_residual(zero_problem(2, L1Norm(1.0)), np.array([0.5, 0.0]), 1.0)
        assert np.allclose(F, [0.5, 0.0])

    def test_stationary(self):
        # x = 1 minimises 0.5 (x - 2)^2 + |x|
        p = quad_problem(np.eye(1), np.array([-2.0]), L1Norm(1.0))
        assert natural_residual(p, np.array([1.0]), 3.0)[0] == pytest.approx(0.0)

    def test_equivalence_with_normal_map(self, rng):
        reg = L1Norm(1.0)
        for _ in range(50):
            x = rng.normal(size=3) * (rng.random(3) < 0.5)
            # stationary: grad f = -mu sgn(x) on the support, inside the box off it
            c = np.where(x != 0, -np.sign(x), rng.uniform(-1, 1, 3))
            if rng.random() < 0.5:
                c = c + rng.normal(size=3)
            p = linear_problem(c, reg)
            F = natural_residual(p, x, 1.7)
            g = normal_map_g(p, x).g
            assert (np.linalg.norm(F) < 1e-12) == (np.linalg.norm(g) < 1e-12)


class TestPseudoGradient:
    def test_stationary_all_kinds(self):
        p = linear_problem([0.2, -0.1], L1Norm(1.0))
        for kind in [NormalMap(), NaturalResidual(1.0), ScaledNaturalResidual(2.0)]:
            out = pseudo_gradient(p, np.zeros(2), kind)
            assert out.u == 0.0 and not np.any(out.g)

    def test_natural_matches(self, rng):
        p = linear_problem([2.0, 0.0], L1Norm(1.0))
        out = pseudo_gradient(p, np.zeros(2), NaturalResidual(1.0))
        assert np.array_equal(out.g, natural_residual(p, np.zeros(2), 1.0))

    def test_scaled(self):
        p = linear_problem([2.0, 0.0], L1Norm(1.0))
        out = pseudo_gradient(p, np.zeros(2), ScaledNaturalResidual(2.0))
        # F = (0.5, 0) for lam = 2, then g = lam * F
        assert np.allclose(out.g, 2.0 * natural_residual(p, np.zeros(2), 2.0))
        assert np.allclose(out.g, out.u * out.d)

    def test_lambda_must_be_positive(self):
        with pytest.raises(UsageError):
            NaturalResidual(0.0)

    @pytest.mark.parametrize("kind", [NormalMap(), NaturalResidual(1.3), ScaledNaturalResidual(0.7)])
    def test_descent(self, kind, rng):
        reg = L1Norm(0.5)
        Q = random_spd(rng, 4)
        for _ in range(200):
            c = rng.normal(size=4)
            p = quad_problem(Q, c, reg)
            x = rng.normal(size=4) * (rng.random(4) < 0.6)
            out = pseudo_gradient(p, x, kind)
            if out.u == 0:
                continue
            assert isinstance(out, DirectionOutput)
            t = 1e-7
            slope = (p.psi(x + t * out.d) - p.psi(x)) / t
            assert slope <= out.u + 1e-4 * (1 + abs(out.u))


class TestStoppingResidual:
    def test_hand_example(self):
        assert stopping_residual(linear_problem([2.0, 0.0], L1Norm(1.0)), np.zeros(2), 1.0) == 1.0

    def test_stationary(self):
        p = quad_problem(np.eye(1), np.array([-2.0]), L1Norm(1.0))
        assert stopping_residual(p, np.array([1.0]), 1.0) == pytest.approx(0.0)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 4.0])
    def test_lambda_scaling_brute_force(self, lam):
        from conftest import brute_prox_1d
        x = np.array([0.3, -1.2])
        p = zero_problem(2, L1Norm(1.0))
        prox = np.array([brute_prox_1d(abs, xi, lam) for xi in x])
        assert stopping_residual(p, x, lam) == pytest.approx(lam * np.linalg.norm(x - prox), abs=1e-6)
