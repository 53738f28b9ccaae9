import csv
import warnings

import numpy as np
import pytest
from reference import brute_force_group_lasso

from vgpencr import group_lasso as gl
from vgpencr import sim
from vgpencr.cavi import HyperParams
from vgpencr.errors import NegativeLambdaError, NotConvergedWarning, SizeMismatchError
from vgpencr.grouped_model import GroupSpec
from vgpencr.pencr import build_working_problem, compute_group_scales, fit_cavi


def random_problem(rng, sizes=None, n=None):
    sizes = sizes or tuple(int(s) for s in rng.integers(1, 4, size=int(rng.integers(1, 5))))
    spec = GroupSpec(tuple(sizes))
    n = n or spec.p
    X = rng.normal(size=(n, spec.p)) + 0.5 * np.eye(n, spec.p)
    Y = 2.0 * rng.normal(size=n)
    return gl.WorkingProblem(X, Y, spec)


def small_oracle_problem(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 5))
    if p == 1 or rng.uniform() < 0.5:
        sizes = (p,)
    else:
        a = int(rng.integers(1, p))
        sizes = (a, p - a)
    prob = random_problem(rng, sizes)
    lam = float(rng.uniform(0.05, 1.0)) * gl.lambda_max(prob)
    return prob, lam


class TestSoftThreshold:
    def test_kills_small_vector(self):
        np.testing.assert_array_equal(gl.group_soft_threshold([3.0, 4.0], 10.0), [0.0, 0.0])

    def test_halves(self):
        np.testing.assert_allclose(gl.group_soft_threshold([3.0, 4.0], 2.5), [1.5, 2.0], rtol=1e-15)

    def test_identity_at_zero(self):
        np.testing.assert_array_equal(gl.group_soft_threshold([3.0, 4.0], 0.0), [3.0, 4.0])

    def test_boundary_is_zero(self):
        np.testing.assert_array_equal(gl.group_soft_threshold([3.0, 4.0], 5.0), [0.0, 0.0])

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            gl.group_soft_threshold([1.0], -0.1)


class TestWorkingProblem:
    def test_default_weights(self):
        prob = gl.WorkingProblem(np.eye(5), np.ones(5), GroupSpec((2, 3)))
        np.testing.assert_allclose(prob.weights, np.sqrt([2.0, 3.0]))

    def test_shape_mismatch(self):
        with pytest.raises(SizeMismatchError):
            gl.WorkingProblem(np.eye(4), np.ones(4), GroupSpec((2, 3)))

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            gl.WorkingProblem(np.eye(2), np.ones(2), GroupSpec((1, 1)), weights=[1.0, 0.0])

    def test_majorization_spot_check(self, rng):
        for _ in range(20):
            prob = random_problem(rng)
            for g, sl in enumerate(prob.spec.slices()):
                Xg = prob.Xstar[:, sl]
                for _ in range(20):
                    v = rng.normal(size=sl.stop - sl.start)
                    assert prob.gamma[g] >= 2.0 * np.sum((Xg @ v) ** 2) / (v @ v)

    def test_objective_convention(self):
        prob = gl.WorkingProblem(np.eye(2), np.array([3.0, 1.0]), GroupSpec((1, 1)))
        # ||(3,1) - (2,0)||^2 + 2 * (2 + 0) with no factor 1/2
        assert prob.objective(np.array([2.0, 0.0]), 2.0) == 6.0


class TestLambdaMax:
    def test_zero_target(self, rng):
        prob = gl.WorkingProblem(rng.normal(size=(4, 4)), np.zeros(4), GroupSpec((2, 2)))
        assert gl.lambda_max(prob) == 0.0

    def test_scalar(self):
        prob = gl.WorkingProblem(np.ones((1, 1)), np.array([-1.7]), GroupSpec((1,)), weights=[1.0])
        assert gl.lambda_max(prob) == pytest.approx(3.4, rel=1e-15)

    def test_solution_is_zero_just_above(self, rng):
        for _ in range(20):
            prob = random_problem(rng)
            sol = gl.solve(prob, 1.001 * gl.lambda_max(prob))
            np.testing.assert_array_equal(sol.beta_star, 0.0)

    def test_solution_is_zero_exactly_at(self):
        # a whitened GAM problem where rounding used to leave ~1e-18 entries at lambda_max
        train, _ = sim.gen_gam(60, 10, seed=89, n_test=2)
        fit = fit_cavi(train.y_raw, train.design, HyperParams(tau=1.0))
        prob = build_working_problem(fit, compute_group_scales(fit))
        sol = gl.solve(prob, gl.lambda_max(prob))
        np.testing.assert_array_equal(sol.beta_star, 0.0)
        assert sol.iterations == 0 and sol.converged

    def test_solution_is_nonzero_below(self, rng):
        prob = random_problem(rng, (2, 2, 1))
        assert np.any(gl.solve(prob, 0.99 * gl.lambda_max(prob)).beta_star != 0.0)


class TestSolve:
    def test_orthonormal_example(self):
        prob = gl.WorkingProblem(np.eye(2), np.array([3.0, 1.0]), GroupSpec((1, 1)), weights=[1.0, 1.0])
        for method in gl.METHODS:
            sol = gl.solve(prob, 2.0, method=method)
            np.testing.assert_allclose(sol.beta_star, [2.0, 0.0], atol=1e-9)
            assert sol.beta_star[1] == 0.0

    def test_zero_lambda_is_least_squares(self, rng):
        for _ in range(10):
            prob = random_problem(rng)
            # beta error is about KKT residual / sigma_min^2, so tighten tol
            sol = gl.solve(prob, 0.0, tol=1e-10, max_iter=100_000)
            np.testing.assert_allclose(sol.beta_star, np.linalg.solve(prob.Xstar, prob.Ystar), atol=1e-6)

    def test_negative_lambda(self, rng):
        with pytest.raises(NegativeLambdaError):
            gl.solve(random_problem(rng), -1.0)

    def test_bad_warm_start(self, rng):
        prob = random_problem(rng, (2, 2))
        with pytest.raises(SizeMismatchError):
            gl.solve(prob, 1.0, warm=np.zeros(3))

    def test_unknown_method(self, rng):
        with pytest.raises(ValueError):
            gl.solve(random_problem(rng), 1.0, method="admm")

    @pytest.mark.parametrize("method", gl.METHODS)
    def test_kkt_certificate(self, rng, method):
        for _ in range(20):
            prob = random_problem(rng, n=12)
            lam = float(rng.uniform(0.01, 1.0)) * gl.lambda_max(prob)
            tol = 1e-7
            sol = gl.solve(prob, lam, tol=tol, method=method, max_iter=200_000)
            assert sol.converged
            assert sol.max_kkt_violation <= 100 * tol * (1 + lam)
            assert np.max(prob.kkt_violation(sol.beta_star, lam)) == pytest.approx(sol.max_kkt_violation, abs=1e-9)

    def test_reported_objective(self, rng):
        prob = random_problem(rng, (2, 3))
        sol = gl.solve(prob, 0.3 * gl.lambda_max(prob))
        assert sol.objective == pytest.approx(prob.objective(sol.beta_star, sol.lam), rel=1e-10)

    @pytest.mark.parametrize("method", gl.METHODS)
    def test_debug_mode_descends(self, rng, method):
        for _ in range(5):
            prob = random_problem(rng, n=10)
            sol = gl.solve(prob, 0.2 * gl.lambda_max(prob), debug=True, method=method, max_iter=100_000)
            tr = np.array(sol.objective_trace)
            assert len(tr) >= 2
            assert np.all(np.diff(tr) <= 1e-10 * (1 + np.abs(tr[:-1])))

    def test_methods_agree(self, rng):
        prob = random_problem(rng, (2, 3, 1), n=15)
        lam = 0.25 * gl.lambda_max(prob)
        a = gl.solve(prob, lam, tol=1e-10, max_iter=500_000)
        b = gl.solve(prob, lam, tol=1e-10, method="bmd", max_iter=500_000)
        assert a.objective == pytest.approx(b.objective, rel=1e-9)

    def test_exact_group_zeros(self, rng):
        for _ in range(20):
            prob = random_problem(rng, n=10)
            sol = gl.solve(prob, float(rng.uniform(0.2, 0.9)) * gl.lambda_max(prob))
            for sl in prob.spec.slices():
                blk = sol.beta_star[sl]
                assert np.all(blk == 0.0) or np.all(blk != 0.0)

    def test_scaling_covariance(self, rng):
        for _ in range(10):
            prob = random_problem(rng, n=8)
            lam = 0.3 * gl.lambda_max(prob)
            c = float(rng.uniform(0.1, 10.0))
            scaled = gl.WorkingProblem(prob.Xstar, c * prob.Ystar, prob.spec)
            a = gl.solve(prob, lam, tol=1e-12).beta_star
            b = gl.solve(scaled, c * lam, tol=1e-12).beta_star
            np.testing.assert_allclose(b, c * a, atol=1e-9 * max(1.0, c))

    def test_iteration_cap_warns(self, rng):
        prob = random_problem(rng, (3, 3), n=20)
        with pytest.warns(NotConvergedWarning):
            sol = gl.solve(prob, 0.1 * gl.lambda_max(prob), method="bmd", tol=1e-14, max_iter=1)
        assert not sol.converged and sol.iterations == 1

    def test_oracle(self):
        for seed in range(10):
            prob, lam = small_oracle_problem(seed)
            sol = gl.solve(prob, lam)
            _, fbest = brute_force_group_lasso(prob.Xstar, prob.Ystar, prob.spec.sizes, prob.weights, lam)
            assert abs(sol.objective - fbest) <= 1e-6


class TestPath:
    def test_grid(self):
        lams = gl.lambda_grid(10.0, 5, 1e-2)
        np.testing.assert_allclose(lams, [10.0, 10 / 10**0.5, 1.0, 10**-0.5, 0.1])

    def test_grid_guards(self):
        with pytest.raises(ValueError):
            gl.lambda_grid(1.0, 1)
        with pytest.raises(ValueError):
            gl.lambda_grid(1.0, 10, 1.5)

    def test_two_points_and_zero_start(self, rng):
        prob = random_problem(rng, (2, 2, 1))
        path = gl.solve_path(prob, n_lambda=2)
        assert len(path) == 2
        np.testing.assert_array_equal(path.solutions[0].beta_star, 0.0)
        assert path.lambdas[0] == gl.lambda_max(prob)

    def test_rejects_increasing(self, rng):
        with pytest.raises(ValueError):
            gl.solve_path(random_problem(rng), lambdas=[1.0, 2.0])

    def test_warm_start_saves_iterations(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for seed in range(5):
                train, _ = sim.gen_gam(seed=seed)
                fit = fit_cavi(train.y_raw, train.design, HyperParams(tau=1.0))
                prob = build_working_problem(fit, compute_group_scales(fit))
                warm = gl.solve_path(prob, n_lambda=30)
                cold = gl.solve_path(prob, n_lambda=30, warm_start=False)
                assert warm.total_iterations < cold.total_iterations


def test_kkt_dump(tmp_path, rng):
    prob = random_problem(rng, (2, 1))
    sol = gl.solve(prob, 0.5 * gl.lambda_max(prob))
    out = tmp_path / "kkt.csv"
    gl.dump_kkt_csv(out, prob, sol)
    rows = list(csv.DictReader(open(out)))
    assert [r["group"] for r in rows] == ["1", "2"]
    assert max(float(r["kkt_violation"]) for r in rows) <= 1e-4
