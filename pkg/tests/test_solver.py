import math

import numpy as np
import pytest

from conftest import quad_problem, random_spd
from ntr.bench.problems import gen_classification, gen_lasso
from ntr.core import CompositeProblem, NonFiniteError, QuadraticOracle, UsageError
from ntr.regularizers import GroupLasso, L1Norm, LinfNorm
from ntr.subproblem import QuadraticModel, cauchy_point
from ntr.solver import (TrConfig, _ray_reduction, _semismooth_model,
                        accept_step, actual_reduction, adaptive_lambda, align_to_orthant,
                        ratio_rho1, ratio_rho2, safeguarded_step, solve, truncation_step,
                        update_radius_after_rho1, update_radius_after_rho2)


def exact_model(problem, x):
    """Quadratic model that reproduces a quadratic f exactly (phi linear near x)."""
    Q = problem.smooth.Q
    g = problem.grad(x) + problem.regularizer.mu * np.sign(x)
    return QuadraticModel(problem.psi(x), g, lambda v: Q @ v)


class TestConfig:
    def test_defaults(self):
        cfg = TrConfig()
        assert (cfg.eta, cfg.eta1, cfg.eta2, cfg.r1, cfg.r2) == (0.05, 0.25, 0.75, 0.25, 2.0)
        assert cfg.eps(0) == 0.1 and cfg.eps(3) == pytest.approx(0.0125)

    @pytest.mark.parametrize("kw", [dict(eta=0.25), dict(eta1=0.8), dict(r1=1.0), dict(r2=1.0),
                                    dict(delta0=2e3), dict(eps_ratio=1.0), dict(model="exact"),
                                    dict(lambda_rule="secant"), dict(eps_stop=0.0),
                                    dict(model="hessian")])
    def test_invalid(self, kw):
        with pytest.raises(UsageError):
            TrConfig(**kw)


class TestRatios:
    def test_exact_model(self, rng):
        p = quad_problem(random_spd(rng, 3), rng.normal(size=3), L1Norm(0.1))
        x = np.array([1.0, -2.0, 3.0])
        s = np.array([0.1, 0.2, -0.1])
        assert ratio_rho1(p, x, s, exact_model(p, x)) == pytest.approx(1.0, abs=1e-10)
        assert ratio_rho2(p, x, 0.1, s / np.linalg.norm(s), exact_model(p, x)) == pytest.approx(1.0, abs=1e-10)

    def test_no_change(self):
        p = quad_problem(np.eye(1), np.zeros(1), L1Norm(1.0))
        model = QuadraticModel(0.5, np.array([1.0]), lambda v: 0 * v)
        # psi(1) = 1.5 = psi(-1): no actual decrease, positive predicted decrease
        assert ratio_rho1(p, np.array([1.0]), np.array([-2.0]), model) == 0.0

    def test_degenerate_denominator(self):
        p = quad_problem(np.eye(1), np.zeros(1), L1Norm(1.0))
        model = QuadraticModel(0.0, np.array([1.0]), lambda v: v)
        assert ratio_rho1(p, np.zeros(1), np.array([1.0]), model) == -math.inf

    def test_lasso_double_evaluation(self):
        inst = gen_lasso(16, 8, 20.0, seed=3)
        p = inst.problem()
        x = np.zeros(16)
        f, grad = p.f_and_grad(x)
        model, F, act = _semismooth_model(p, x, grad, 1.0, p.psi(x))
        s = cauchy_point(model, 1.0).s
        r = ratio_rho1(p, x, s, model)
        # independent evaluation: dense A, explicit Jacobian
        A = inst.operator().todense()
        psi = lambda z: 0.5 * np.sum((A @ z - inst.b) ** 2) + inst.mu * np.abs(z).sum()
        H = A.T @ A
        J = np.where(act[:, None], H, np.eye(16))
        pred = -(F @ s) - 0.5 * s @ (J @ s)
        assert r == pytest.approx((psi(x) - psi(x + s)) / pred, abs=1e-10)

    def test_small_alpha_ratio_near_one(self, rng):
        inst = gen_classification(200, 10, seed=1)
        p = inst.problem()
        for _ in range(10):
            # no zero coordinates, so phi is smooth near x
            x = rng.normal(size=10)
            f, grad = p.f_and_grad(x)
            gs = grad + p.regularizer.mu * np.sign(x)
            H = np.array([p.hvp(x, e) for e in np.eye(10)])
            model = QuadraticModel(p.psi(x), gs, lambda v: H @ v)
            sbar = -gs / np.linalg.norm(gs)
            alpha = min(1e-4, 0.5 * p.regularizer.gamma_max(x, sbar))
            assert 0.9 <= ratio_rho2(p, x, alpha, sbar, model) <= 1.1

    def test_alpha_positive(self):
        p = quad_problem(np.eye(1), np.zeros(1), L1Norm(1.0))
        with pytest.raises(UsageError):
            ratio_rho2(p, np.zeros(1), 0.0, np.ones(1), None)

    def test_cancellation_free_reduction(self):
        # a small step on top of a huge objective: the direct difference is lost
        oracle = QuadraticOracle(np.eye(2), np.array([-1.0, 0.0]), const=1e12)
        p = CompositeProblem(oracle, L1Norm(1.0))
        x = np.array([2.0, 0.0])
        s = np.array([-1e-6, 0.0])
        psi = p.psi(x)
        red, scale = actual_reduction(p.regularizer, x, s, psi, p.psi(x + s), p.grad(x),
                                      p.grad(x + s))
        assert red == pytest.approx(2e-6 - 5e-13, rel=1e-9)
        assert scale < 1e-5


class TestSafeguardedStep:
    def test_clipped_at_breakpoint(self):
        model = QuadraticModel(0.0, np.array([1.0, 0.0]), lambda v: 0 * v)
        a, sbar, used = safeguarded_step(L1Norm(), np.array([0.1, 5.0]), np.array([-1.0, 0.0]),
                                         None, model)
        assert a == pytest.approx(0.1) and not used
        assert np.allclose(sbar, [-1.0, 0.0])

    def test_no_breakpoint(self):
        model = QuadraticModel(0.0, np.array([1.0, 1.0]), lambda v: v)
        s = np.array([-0.3, -0.4])
        a, sbar, used = safeguarded_step(L1Norm(), np.array([1.0, 1.0]), s, None, model)
        assert a == pytest.approx(0.5) and not used

    def test_zero_step(self):
        with pytest.raises(UsageError):
            safeguarded_step(L1Norm(), np.ones(2), np.zeros(2), None, None)

    def test_convex_models_pass(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 6))
            M = rng.normal(size=(n, n))
            B = M @ M.T
            model = QuadraticModel(0.0, rng.normal(size=n), lambda v, B=B: B @ v)
            s = rng.normal(size=n)
            ns = np.linalg.norm(s)
            alpha = rng.uniform(0, ns)
            full = model.reduction(s)
            if full <= 0:
                continue
            assert _ray_reduction(model, s, B @ s, alpha) >= alpha / (2 * ns) * full - 1e-12

    def test_fallback_to_cauchy(self):
        # concave along s: stopping early gives less than the proportional decrease
        B = np.array([[-1.0, 0.0], [0.0, 1.0]])
        model = QuadraticModel(0.0, np.array([0.1, 1.0]), lambda v: B @ v, symmetric=True)
        x = np.array([0.05, 10.0])
        s = np.array([-2.0, 0.0])
        sc = cauchy_point(model, 1.0)
        a, sbar, used = safeguarded_step(L1Norm(), x, s, sc, model)
        assert used
        assert np.allclose(sbar, sc.s / np.linalg.norm(sc.s))


class TestUpdates:
    cfg = TrConfig()

    def test_rho1(self):
        assert update_radius_after_rho1(1.0, 0.9, self.cfg) == 2.0
        assert update_radius_after_rho1(1.0, 0.5, self.cfg) == 1.0
        assert update_radius_after_rho1(1e3, 0.9, self.cfg) == 1e3

    def test_rho2(self):
        assert update_radius_after_rho2(1.0, 0.1, self.cfg) == 0.25
        assert update_radius_after_rho2(1.0, 0.8, self.cfg) == 2.0
        assert update_radius_after_rho2(1.0, 0.5, self.cfg) == 1.0

    def test_accept(self):
        x, sbar = np.zeros(2), np.array([1.0, 0.0])
        assert np.array_equal(accept_step(x, 0.5, sbar, 0.05, 0.05), [0.5, 0.0])
        assert np.array_equal(accept_step(x, 0.5, sbar, 0.04, 0.05), x)
        assert np.array_equal(accept_step(x, 0.5, sbar, 1.0, 0.05), [0.5, 0.0])


class TestTruncationStep:
    cfg = TrConfig()

    def test_identity(self):
        c = np.zeros(3, int)
        x, c2, ev = truncation_step(L1Norm(), np.array([1.0, 2.0]), c, self.cfg.eps)
        assert np.array_equal(x, [1, 2]) and not ev and not c.any()

    def test_single_pass(self):
        c = np.zeros(3, int)
        x, _, ev = truncation_step(L1Norm(), np.array([1e-6, 2.0]), c, self.cfg.eps)
        assert np.array_equal(x, [0, 2]) and c[0] == 1 and len(ev) == 1

    def test_cascade(self):
        c = np.zeros(3, int)
        x, _, ev = truncation_step(L1Norm(), np.array([1e-6, 1e-6]), c, lambda s: 0.1)
        assert np.array_equal(x, [0, 0]) and len(ev) <= 2

    @pytest.mark.parametrize("reg", [L1Norm(), LinfNorm(), GroupLasso([(0, 2), (2, 4)])])
    def test_at_most_m_passes(self, reg, rng):
        m = reg.num_strata(4)
        for _ in range(200):
            c = rng.integers(0, 4, size=m + 1)
            x = rng.normal(size=4) * rng.uniform(1e-3, 1)
            _, _, ev = truncation_step(reg, x, c, lambda s: 0.3 * 0.5 ** s)
            assert len(ev) <= m
            assert all(a < b for a, b in zip([e.stratum for e in ev], [e.stratum for e in ev][1:]))


class TestAdaptiveLambda:
    def test_quadratic(self, rng):
        x0, x1 = rng.normal(size=3), rng.normal(size=3)
        L = 4.0
        assert adaptive_lambda(1.0, x1, x0, L * x1, L * x0) == pytest.approx(1 / L)
        assert adaptive_lambda(1.0, x1, x0, L * x1, L * x0, rule="lipschitz") == pytest.approx(L)

    def test_unchanged_gradient(self):
        g = np.ones(2)
        assert adaptive_lambda(0.7, np.ones(2), np.zeros(2), g, g) == 0.7

    def test_clamp(self):
        assert adaptive_lambda(1.0, np.array([1e5]), np.zeros(1), np.ones(1), np.zeros(1)) == 1e3


class TestOrthantAlignment:
    def test_zero_coordinate_against_gradient_dropped(self):
        q = align_to_orthant(np.array([0.0, 1.0]), np.array([1.0, 0.0]), np.array([0.5, -0.2]))
        assert np.array_equal(q, [0.0, -0.2])

    def test_crossing_clipped(self):
        q = align_to_orthant(np.array([1.0]), np.array([0.0]), np.array([-3.0]))
        assert np.array_equal(q, [-1.0])

    def test_unchanged_returns_same_object(self):
        p = np.array([0.1, 0.2])
        assert align_to_orthant(np.array([1.0, 1.0]), np.zeros(2), p) is p


class TestSolve:
    def test_smooth_quadratic(self, rng):
        Q = random_spd(rng, 5)
        c = rng.normal(size=5)
        p = quad_problem(Q, c, L1Norm(1e-12))
        rep = solve(p, TrConfig(eps_stop=1e-10))
        assert rep.status == "converged"
        assert np.allclose(rep.x, np.linalg.solve(Q, -c), atol=1e-7)

    def test_two_dim_lasso(self):
        p = quad_problem(np.eye(2), np.array([-2.0, 0.0]), L1Norm(1.0))
        rep = solve(p)
        assert rep.status == "converged"
        assert np.allclose(rep.x, [1.0, 0.0], atol=1e-8)

    @pytest.mark.parametrize("subsolver", ["cg_steihaug", "regularized", "cauchy"])
    def test_hessian_model(self, subsolver):
        p = quad_problem(np.diag([1.0, 2.0, 3.0]), np.array([-2.0, 0.5, -6.0]), L1Norm(1.0))
        rep = solve(p, TrConfig(model="hessian", subsolver=subsolver, eps_stop=1e-8,
                                max_iterations=2000))
        assert rep.status == "converged"
        assert np.allclose(rep.x, [1.0, 0.0, 5 / 3], atol=1e-6)

    @pytest.mark.parametrize("reg", [GroupLasso([(0, 2), (2, 3)], 0.5), LinfNorm(0.5)])
    def test_other_regularizers(self, reg, rng):
        Q = random_spd(rng, 3, cond=5)
        p = quad_problem(Q, rng.normal(size=3) * 3, reg)
        rep = solve(p, TrConfig(model="hessian", subsolver="cg_steihaug", eps_stop=1e-7,
                                max_iterations=3000))
        assert rep.status == "converged"
        assert rep.residual <= 1e-7
        # psi-optimality against random perturbations
        for v in rng.normal(size=(50, 3)) * 1e-3:
            assert p.psi(rep.x + v) >= rep.psi - 1e-9

    def test_semismooth_needs_l1(self):
        p = quad_problem(np.eye(2), np.ones(2), LinfNorm(1.0))
        with pytest.raises(UsageError):
            solve(p)

    def test_max_iter_status(self):
        rep = solve(gen_lasso(256, 64, 40.0, seed=0).problem(), TrConfig(max_iterations=2))
        assert rep.status == "max_iter" and rep.iterations == 2

    def test_zero_iterations(self):
        rep = solve(gen_lasso(64, 16, 20.0, seed=0).problem(), TrConfig(max_iterations=0))
        assert rep.status == "max_iter" and rep.iterations == 0 and np.isfinite(rep.residual)

    def test_starting_at_solution(self):
        p = quad_problem(np.eye(2), np.array([-2.0, 0.0]), L1Norm(1.0))
        rep = solve(p, x0=[1.0, 0.0])
        assert rep.status in ("converged", "zero_g") and rep.iterations == 0

    def test_nan_oracle_aborts(self):
        class Blowup(QuadraticOracle):
            def value_and_grad(self, x):
                if np.abs(x).max() > 0.5:
                    return np.nan, np.full(x.size, np.nan)
                return super().value_and_grad(x)

        p = CompositeProblem(Blowup(np.eye(2), np.array([-2.0, 0.0])), L1Norm(0.1))
        with pytest.raises(NonFiniteError, match="iteration"):
            solve(p)

    def test_invariants_on_lasso(self):
        inst = gen_lasso(1024, 128, 40.0, seed=2)
        cfg = TrConfig()
        rep = solve(inst.problem(), cfg)
        assert rep.converged and rep.residual <= cfg.eps_stop
        assert rep.total_shift <= rep.shift_bound
        for r in rep.records:
            assert 0 < r.delta_after <= cfg.delta_max
            if r.accepted:
                assert r.psi_trial <= r.psi_before + 1e-12 * abs(r.psi_before)
            if r.delta_after < r.delta_before:
                assert r.rho2 is not None and r.rho2 < cfg.eta1
        calls = [r.n_calls for r in rep.records]
        assert calls == sorted(calls)

    def test_callback_and_report(self, tmp_path):
        seen = []
        rep = solve(gen_lasso(256, 64, 20.0, seed=1).problem(), callback=seen.append)
        assert len(seen) == rep.iterations
        d = rep.to_dict()
        assert d["status"] == rep.status and len(d["x"]) == 256
        rep.to_json(tmp_path / "r.json")
        rep.write_csv(tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert len(lines) == rep.iterations + 1

    def test_deterministic(self):
        inst = gen_lasso(512, 64, 60.0, seed=4)
        a, b = solve(inst.problem()), solve(inst.problem())
        assert np.array_equal(a.x, b.x) and a.n_calls == b.n_calls


class TestHessianModel:
    def _group_problem(self, seed=0):
        inst = gen_lasso(128, 32, 20.0, seed=seed)
        p = inst.problem()
        groups = [(i, i + 4) for i in range(0, 128, 4)]
        return CompositeProblem(p.smooth, GroupLasso(groups, p.regularizer.mu))

    def test_restricted_model_keeps_zero_groups(self, rng):
        from ntr.solver import _hessian_model
        p = self._group_problem()
        x = solve(p, TrConfig(model="hessian", subsolver="cauchy", max_iterations=3000)).x
        model = _hessian_model(p, x, p.grad(x), 1.0, p.psi(x), "scaled_natural")
        still = model.g == 0
        assert still.any()
        v = rng.normal(size=128)
        assert not np.any(model.B(v)[still])
        u = rng.normal(size=128)
        assert u @ model.B(v) == pytest.approx(v @ model.B(u))

    @pytest.mark.parametrize("sub", ["cg_steihaug", "regularized", "cauchy"])
    def test_group_lasso_solves(self, sub):
        p = self._group_problem(1)
        rep = solve(p, TrConfig(model="hessian", subsolver=sub, max_iterations=3000))
        assert rep.status == "converged"

    def test_regularized_falls_back_to_cauchy(self):
        # at x = 0 the projected Newton direction is worse than -g on small
        # regions; the Cauchy point must be used there instead
        p = self._group_problem()
        rep = solve(p, TrConfig(model="hessian", subsolver="regularized", max_iterations=3000))
        assert rep.status == "converged"
        assert rep.records[0].step_kind != "rejected" or rep.records[1].step_kind != "rejected"

    def test_linf_cg_steihaug(self):
        inst = gen_lasso(128, 32, 20.0, seed=0)
        p = inst.problem()
        p = CompositeProblem(p.smooth, LinfNorm(p.regularizer.mu))
        rep = solve(p, TrConfig(model="hessian", subsolver="cg_steihaug", max_iterations=3000))
        assert rep.status == "converged"
