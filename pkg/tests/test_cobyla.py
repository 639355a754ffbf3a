import numpy as np
import pytest
from scipy.optimize import minimize as scipy_minimize

from wdncal.cobyla.optimizer import minimize, trust_region_step

OPT = -np.sqrt(0.5)


def disk_problem():
    fun = lambda x: float(x[0] + x[1])
    cons = lambda x: np.array([1 - x[0] ** 2 - x[1] ** 2, x[0] + 2, 2 - x[0], x[1] + 2, 2 - x[1]])
    return fun, cons


class TestHarness:
    @pytest.mark.parametrize("x0", [[0.0, 0.0], [1.5, 1.5], [-2.0, 2.0], [0.3, -0.1]])
    def test_disk_optimum(self, x0):
        fun, cons = disk_problem()
        res = minimize(fun, x0, cons, rhobeg=1.0, rhoend=1e-6, maxfun=500)
        assert np.allclose(res.x, [OPT, OPT], atol=1e-3)
        assert res.maxcv <= 1e-6
        assert res.success

    @pytest.mark.parametrize("seed", range(6))
    def test_bounded_quadratic_against_scipy(self, seed):
        rng = np.random.default_rng(seed)
        n = 5
        a = rng.normal(size=(n, n))
        h = a @ a.T + n * np.eye(n)
        c = rng.normal(size=n) * 4
        fun = lambda x: float(0.5 * x @ h @ x + c @ x)
        cons = lambda x: np.concatenate([x + 1, 1 - x])
        ours = minimize(fun, np.zeros(n), cons, rhobeg=0.5, rhoend=1e-7, maxfun=2000)
        ref = scipy_minimize(fun, np.zeros(n), method="COBYLA",
                             constraints=[{"type": "ineq", "fun": cons}],
                             options={"rhobeg": 0.5, "tol": 1e-9, "maxiter": 5000})
        assert ours.maxcv <= 1e-8
        assert ours.fun == pytest.approx(ref.fun, abs=1e-5)

    def test_unconstrained_quadratic(self):
        target = np.array([1.0, -2.0, 0.5])
        res = minimize(lambda x: float(np.sum((x - target) ** 2)), np.zeros(3), rhobeg=1.0, rhoend=1e-7,
                       maxfun=1000)
        assert np.allclose(res.x, target, atol=1e-5)

    def test_infeasible_start_ends_feasible(self):
        fun, cons = disk_problem()
        res = minimize(fun, [3.0, 3.0], cons, rhobeg=1.0, rhoend=1e-6, maxfun=600)
        assert res.maxcv <= 1e-6
        assert res.fun == pytest.approx(2 * OPT, abs=1e-3)

    def test_budget_and_history(self):
        calls = []
        res = minimize(lambda x: calls.append(1) or float(np.sum(x ** 4)), np.ones(4), rhobeg=0.5,
                       rhoend=1e-12, maxfun=40)
        assert res.nfev == len(calls) == len(res.history) <= 40
        assert "maximum number" in res.message

    def test_returns_best_point_seen(self):
        fun = lambda x: float(np.sum(np.abs(x - 0.3)))
        res = minimize(fun, np.zeros(3), rhobeg=0.5, rhoend=1e-4, maxfun=60)
        assert res.fun == min(f for f, _ in res.history)

    def test_argument_checks(self):
        with pytest.raises(ValueError):
            minimize(lambda x: 0.0, [0.0], rhobeg=1e-5, rhoend=1e-3)
        with pytest.raises(ValueError):
            minimize(lambda x: 0.0, np.zeros(5), maxfun=3)


class TestSubproblem:
    def test_unconstrained_step_is_steepest_descent(self):
        g = np.array([3.0, -4.0])
        d, full = trust_region_step(g, np.zeros((0, 2)), np.zeros(0), 0.5)
        assert full
        assert np.allclose(d, -0.5 * g / 5.0)

    def test_linearised_constraints_respected(self, rng):
        for _ in range(50):
            n, m = 3, 4
            g = rng.normal(size=n)
            grads = rng.normal(size=(m, n))
            cvals = np.abs(rng.normal(size=m))  # feasible at d = 0
            d, _ = trust_region_step(g, grads, cvals, 0.7)
            assert np.linalg.norm(d) <= 0.7 * (1 + 1e-9)
            assert np.all(cvals + grads @ d >= -1e-9)
            assert g @ d <= 1e-12

    def test_violation_reduced_first(self):
        # infeasible at d = 0: the step must lower the linearised violation
        g = np.array([1.0, 0.0])
        grads = np.array([[1.0, 0.0]])
        cvals = np.array([-0.3])
        d, _ = trust_region_step(g, grads, cvals, 1.0)
        assert cvals[0] + grads[0] @ d >= -1e-12
