"""Generalized (sum-of-components) minimization stack.

Checks:
  * component closed forms and the problem-level value/gradient, including
    0.5*t^2 + t at t = 2 giving value 4 and slope 3
  * scalar conjugate inversion (psi*)'(y) on shifted quadratics (exact) and
    the logistic-augmented component (residual below 1e-12)
  * variance-reduced reformulation: exact formulas for tau/p/m, exact
    unbiasedness of component values and gradients, the variance bound
  * sampled dual systems solve quadratic instances to oracle accuracy and
    logistic instances to dense-Newton accuracy; L/mu == M^2 per component
  * one solve step halves the gap on most seeds and returns the start
    unchanged when the drawn rows fail the norm acceptance test
  * the full boosted solve hits its certified accuracy and short-circuits
    when started at the optimum
  * the two-minimizer gap identity (exact on quadratics) and the whitened
    subsampling probe
"""

import numpy as np
import pytest

from levsolve.counters import WorkCounter
from levsolve.erm import (
    GenAcdComponent,
    LogisticAugComponent,
    QuadraticComponent,
    VrComponents,
    build_sampled_system,
    build_vr,
    concentration_probe,
    conjugate_gradient_1d,
    convex_gap_identity,
    erm_full_solve,
    erm_solve_step,
    erm_value_grad,
    ErmProblem,
    gen_acd_solve,
    logistic_aug_problem,
    quadratic_problem,
    vr_component_grad,
    vr_component_value,
    vr_variance_bound,
)
from levsolve.errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateProblemError,
    NumericError,
)
from levsolve.homotopy import ReductionStats
from levsolve.leverage import LeverageVector
from levsolve.oracles import (
    RegressionProblem,
    oracle_leverage,
    oracle_solve,
    oracle_spectral,
)
from levsolve.sparse import from_dense, identity


def sigmoid(s):
    return 1.0 / (1.0 + np.exp(-s))


def logistic_newton(A_dense, shifts, iters=50):
    """Dense Newton for F(x) = sum_i 0.5*s_i^2 + log(1+e^{s_i}), s = Ax - b."""
    x = np.zeros(A_dense.shape[1])
    for _ in range(iters):
        s = A_dense @ x - shifts
        grad = A_dense.T @ (s + sigmoid(s))
        curv = 1.0 + sigmoid(s) * (1.0 - sigmoid(s))
        hess = A_dense.T @ (curv[:, None] * A_dense)
        step = np.linalg.solve(hess, grad)
        x = x - step
        if np.linalg.norm(step) <= 1e-14 * max(1.0, np.linalg.norm(x)):
            break
    return x


def logistic_value(A_dense, shifts, x):
    s = A_dense @ x - shifts
    return float(np.sum(0.5 * s * s + np.logaddexp(0.0, s)))


class TestComponents:
    def test_quadratic_closed_forms(self):
        c = QuadraticComponent(shift=1.5, linear=0.5)
        assert c.value(2.0) == pytest.approx(0.5 * 0.25 + 1.0)
        assert c.first_derivative(2.0) == pytest.approx(0.5 + 0.5)
        assert c.curvature_bracket == (1.0, 1.0)
        assert c.kernel_shift == pytest.approx(1.0)

    def test_logistic_aug_derivative_matches_fd(self):
        c = LogisticAugComponent(shift=0.3)
        h = 1e-6
        for t in (-2.0, -0.5, 0.0, 1.0, 4.0):
            fd = (c.value(t + h) - c.value(t - h)) / (2.0 * h)
            assert c.first_derivative(t) == pytest.approx(fd, abs=1e-5)
        lo, hi = c.curvature_bracket
        assert (lo, hi) == (1.0, 1.25)

    def test_problem_validation(self):
        with pytest.raises(ConfigurationError):
            ErmProblem(A=identity(2), components=(QuadraticComponent(),), M=1.0)
        with pytest.raises(ConfigurationError):
            ErmProblem(A=identity(1), components=(QuadraticComponent(),), M=0.5)
        with pytest.raises(ConfigurationError):
            # logistic curvature reaches 1.25, outside [1/M, M] with M = 1
            ErmProblem(A=identity(1), components=(LogisticAugComponent(),), M=1.0)


class TestValueGrad:
    def test_pure_quadratic_is_half_norm_squared(self):
        rng = np.random.default_rng(0)
        dense = rng.standard_normal((12, 4))
        P = quadratic_problem(from_dense(dense), np.zeros(12))
        x = rng.standard_normal(4)
        value, grad = erm_value_grad(P, x)
        r = dense @ x
        assert value == pytest.approx(0.5 * float(r @ r), rel=1e-12)
        np.testing.assert_allclose(grad, dense.T @ r, rtol=1e-12, atol=1e-12)

    def test_quadratic_plus_linear_scalar(self):
        # psi(t) = 0.5*t^2 + t at t = 2: value 4, slope 3
        P = ErmProblem(A=identity(1),
                       components=(QuadraticComponent(linear=1.0),), M=1.0)
        value, grad = erm_value_grad(P, np.array([2.0]))
        assert value == pytest.approx(4.0)
        np.testing.assert_allclose(grad, [3.0])

    def test_matches_regression_problem(self):
        rng = np.random.default_rng(1)
        dense = rng.standard_normal((15, 3))
        targets = rng.standard_normal(15)
        P = quadratic_problem(from_dense(dense), targets)
        prob = RegressionProblem(P.A, targets)
        x = rng.standard_normal(3)
        value, grad = erm_value_grad(P, x)
        assert value == pytest.approx(prob.value(x), rel=1e-12)
        np.testing.assert_allclose(grad, prob.gradient(x), rtol=1e-10, atol=1e-12)

    def test_logistic_gradient_matches_fd(self):
        rng = np.random.default_rng(2)
        dense = rng.standard_normal((8, 3))
        shifts = rng.standard_normal(8)
        P = logistic_aug_problem(from_dense(dense), shifts)
        x = rng.standard_normal(3)
        _value, grad = erm_value_grad(P, x)
        h = 1e-6
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            v_plus, _ = erm_value_grad(P, x + e)
            v_minus, _ = erm_value_grad(P, x - e)
            fd = (v_plus - v_minus) / (2.0 * h)
            assert grad[i] == pytest.approx(fd, abs=1e-5)

    def test_nonfinite_input_raises_with_index(self):
        P = quadratic_problem(identity(3), np.zeros(3))
        with pytest.raises(NumericError) as exc_info:
            erm_value_grad(P, np.array([0.0, np.inf, 0.0]))
        assert "1" in str(exc_info.value)

    def test_work_charges_rows(self):
        P = quadratic_problem(identity(5), np.zeros(5))
        work = WorkCounter()
        erm_value_grad(P, np.zeros(5), work=work)
        assert work.coordinate_updates == 5


class TestConjugateGradient1d:
    def test_shifted_quadratic_exact(self):
        for shift in (-2.0, 0.0, 1.5):
            psi = QuadraticComponent(shift=shift)
            for y in (-3.0, -0.1, 0.0, 0.7, 10.0):
                t = conjugate_gradient_1d(psi, y)
                assert t == pytest.approx(y + shift, abs=1e-11)

    def test_quadratic_with_linear_term(self):
        psi = QuadraticComponent(shift=1.0, linear=0.5)
        # psi'(t) = t - 1 + 0.5, root of psi'(t) = y is t = y + 0.5
        t = conjugate_gradient_1d(psi, 2.0)
        assert t == pytest.approx(2.5, abs=1e-11)

    def test_logistic_residual_below_tolerance(self):
        psi = LogisticAugComponent(shift=0.4)
        for y in (-5.0, -1.0, 0.0, 0.3, 2.0, 8.0):
            t = conjugate_gradient_1d(psi, y)
            assert abs(psi.first_derivative(t) - y) <= 1e-12 * max(1.0, abs(y))

    def test_iteration_cap_raises(self):
        psi = LogisticAugComponent()
        with pytest.raises(NumericError):
            conjugate_gradient_1d(psi, 5.0, max_iter=1)

    def test_component_wrapper_inverts_scaled_derivative(self):
        psi = LogisticAugComponent(shift=-0.2)
        comp = GenAcdComponent(psi=psi, scale_c=3.0, anchor_grad=0.7, M=1.25)
        assert comp.L / comp.mu == pytest.approx(1.25 ** 2)
        y = 1.9
        t = comp.conjugate_gradient(y)
        # phi'(t) = c * (psi'(t) - g) must equal y
        phi_prime = 3.0 * (psi.first_derivative(t) - 0.7)
        assert phi_prime == pytest.approx(y, abs=1e-10)


class TestBuildVr:
    def test_formulas_with_saturated_rates(self):
        rng = np.random.default_rng(3)
        dense = rng.standard_normal((10, 8))
        P = quadratic_problem(from_dense(dense), np.zeros(10))
        u = LeverageVector(values=np.ones(10), role="overestimate")
        vr = build_vr(P, np.zeros(8), u)
        # 20 * 1 * ln(8) > 1, so every tau saturates at 1
        np.testing.assert_allclose(vr.tau, np.ones(10))
        np.testing.assert_allclose(vr.p, np.full(10, 0.1))
        assert vr.m == int(np.ceil(80.0 * 10.0))

    def test_anchor_gradient_matches_problem(self):
        rng = np.random.default_rng(4)
        dense = rng.standard_normal((12, 4))
        P = logistic_aug_problem(from_dense(dense), rng.standard_normal(12))
        x0 = rng.standard_normal(4)
        u = LeverageVector(values=oracle_leverage(P.A), role="overestimate")
        vr = build_vr(P, x0, u)
        _value, grad = erm_value_grad(P, x0)
        np.testing.assert_allclose(vr.full_grad, grad, rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(vr.anchor, x0)

    def test_zero_rates_raise(self):
        P = quadratic_problem(identity(3), np.zeros(3))
        u = LeverageVector(values=np.zeros(3), role="overestimate")
        with pytest.raises(DegenerateProblemError):
            build_vr(P, np.zeros(3), u)

    def test_component_mean_is_exact(self):
        # sum_k p_k * f~_k(x) == F(x) and likewise for gradients, to 1e-10
        rng = np.random.default_rng(5)
        dense = rng.standard_normal((9, 3))
        P = logistic_aug_problem(from_dense(dense), rng.standard_normal(9))
        u = LeverageVector(values=oracle_leverage(P.A), role="overestimate")
        x0 = rng.standard_normal(3)
        vr = build_vr(P, x0, u)
        for _trial in range(3):
            x = rng.standard_normal(3)
            value, grad = erm_value_grad(P, x)
            mean_val = sum(vr.p[k] * vr_component_value(P, vr, k, x)
                           for k in range(9))
            mean_grad = sum(vr.p[k] * vr_component_grad(P, vr, k, x)
                            for k in range(9))
            assert mean_val == pytest.approx(value, rel=1e-10, abs=1e-10)
            np.testing.assert_allclose(mean_grad, grad, rtol=1e-10, atol=1e-10)

    def test_zero_probability_component_rejected(self):
        P = quadratic_problem(identity(3), np.zeros(3))
        uv = np.array([1.0, 1.0, 0.0])
        vr = build_vr(P, np.zeros(3),
                      LeverageVector(values=uv, role="overestimate"))
        with pytest.raises(ConfigurationError):
            vr_component_value(P, vr, 2, np.zeros(3))

    def test_probabilities_validated(self):
        with pytest.raises(ConfigurationError):
            VrComponents(tau=np.ones(2), p=np.array([0.9, 0.2]),
                         anchor=np.zeros(2), anchor_grads=np.zeros(2),
                         full_grad=np.zeros(2), m=1)


class TestVarianceBound:
    def test_holds_at_random_points(self):
        # whitened SVRG-style bound with the common smoothness L = (sum tau)*M
        rng = np.random.default_rng(6)
        dense = rng.standard_normal((20, 4))
        shifts = rng.standard_normal(20)
        P = logistic_aug_problem(from_dense(dense), shifts)
        u = LeverageVector(values=oracle_leverage(P.A), role="overestimate")
        x_star = logistic_newton(dense, shifts)
        vr = build_vr(P, np.zeros(4), u)
        for _trial in range(20):
            x = x_star + rng.standard_normal(4)
            lhs, rhs = vr_variance_bound(P, vr, x, x_star)
            assert lhs <= rhs * (1.0 + 1e-9), f"{lhs} > {rhs}"

    def test_zero_at_the_minimizer(self):
        rng = np.random.default_rng(7)
        dense = rng.standard_normal((10, 3))
        P = quadratic_problem(from_dense(dense), rng.standard_normal(10))
        u = LeverageVector(values=oracle_leverage(P.A), role="overestimate")
        vr = build_vr(P, np.zeros(3), u)
        x_star = oracle_solve(RegressionProblem(P.A, np.array(
            [c.shift for c in P.components])))
        lhs, rhs = vr_variance_bound(P, vr, x_star, x_star)
        assert lhs == pytest.approx(0.0, abs=1e-18)


def full_index_system(P, x0):
    """The sampled system over every component once (p uniform).

    tau_count=2 keeps the tau log factor positive for single-column
    problems; with u = 1 every tau saturates at 1 either way.
    """
    n = P.A.n_rows
    u = LeverageVector(values=np.ones(n), role="overestimate")
    vr = build_vr(P, x0, u, tau_count=max(2, P.A.n_cols))
    return build_sampled_system(P, vr, np.arange(n))


class TestGenAcdSolve:
    def test_quadratic_matches_oracle(self):
        rng = np.random.default_rng(8)
        dense = rng.standard_normal((40, 5))
        targets = rng.standard_normal(40)
        P = quadratic_problem(from_dense(dense), targets)
        system = full_index_system(P, np.zeros(5))
        lam = oracle_spectral(P.A).lambda_min / 2.0
        x = gen_acd_solve(system, lam, np.zeros(5), 1e-8,
                          np.random.default_rng(9))
        prob = RegressionProblem(P.A, targets)
        x_star = oracle_solve(prob)
        f_star = prob.value(x_star)
        gap0 = prob.value(np.zeros(5)) - f_star
        assert prob.value(x) - f_star <= 1e-8 * gap0

    def test_scalar_instance(self):
        # two observations of a single coordinate: minimizer is the mean
        A = from_dense([[1.0], [1.0]])
        P = quadratic_problem(A, np.array([0.0, 2.0]))
        system = full_index_system(P, np.zeros(1))
        x = gen_acd_solve(system, 1.0, np.zeros(1), 1e-10,
                          np.random.default_rng(10))
        np.testing.assert_allclose(x, [1.0], atol=1e-5)

    def test_logistic_matches_newton(self):
        rng = np.random.default_rng(11)
        dense = rng.standard_normal((20, 3))
        shifts = rng.standard_normal(20)
        P = logistic_aug_problem(from_dense(dense), shifts)
        system = full_index_system(P, np.zeros(3))
        lam = oracle_spectral(P.A).lambda_min / (2.0 * P.M)
        x = gen_acd_solve(system, lam, np.zeros(3), 1e-8,
                          np.random.default_rng(12))
        x_star = logistic_newton(dense, shifts)
        f_star = logistic_value(dense, shifts, x_star)
        gap0 = logistic_value(dense, shifts, np.zeros(3)) - f_star
        assert logistic_value(dense, shifts, x) - f_star <= 1e-6 * gap0

    def test_budget_exhaustion_raises(self):
        rng = np.random.default_rng(13)
        dense = rng.standard_normal((15, 3))
        P = quadratic_problem(from_dense(dense), rng.standard_normal(15))
        system = full_index_system(P, np.zeros(3))
        lam = oracle_spectral(P.A).lambda_min / 2.0
        with pytest.raises(ConvergenceError):
            gen_acd_solve(system, lam, np.zeros(3), 1e-12,
                          np.random.default_rng(14), budget_factor=0.001)

    def test_mixed_components_rejected(self):
        P = ErmProblem(A=identity(2),
                       components=(QuadraticComponent(), LogisticAugComponent()),
                       M=1.25)
        u = LeverageVector(values=np.ones(2), role="overestimate")
        vr = build_vr(P, np.zeros(2), u)
        with pytest.raises(ConfigurationError):
            build_sampled_system(P, vr, np.array([0, 1]))


class TestErmSolveStep:
    def test_halves_the_gap_on_most_seeds(self):
        rng_data = np.random.default_rng(15)
        dense = rng_data.standard_normal((60, 5))
        shifts = rng_data.standard_normal(60)
        P = logistic_aug_problem(from_dense(dense), shifts)
        u = LeverageVector(values=oracle_leverage(P.A), role="overestimate")
        lam_min = oracle_spectral(P.A).lambda_min
        x_star = logistic_newton(dense, shifts)
        f_star = logistic_value(dense, shifts, x_star)
        x0 = x_star + 0.5 * rng_data.standard_normal(5)
        gap0 = logistic_value(dense, shifts, x0) - f_star
        wins = 0
        seeds = 6
        for seed in range(seeds):
            x = erm_solve_step(P, x0, u, np.random.default_rng(100 + seed),
                               lambda_min=lam_min)
            gap = logistic_value(dense, shifts, x) - f_star
            if gap <= 0.5 * gap0:
                wins += 1
        assert wins >= seeds // 2

    def test_failed_acceptance_returns_start_unchanged(self):
        # rig the draw to hit only the heaviest, least likely row
        dense = np.vstack([np.full((1, 4), 50.0),
                           np.eye(4),
                           np.eye(4),
                           np.eye(4)])
        P = quadratic_problem(from_dense(dense), np.zeros(13))
        uv = np.full(13, 1.0)
        uv[0] = 1e-7
        u = LeverageVector(values=uv, role="overestimate")

        class RiggedRng:
            def choice(self, n, size, p):
                return np.zeros(size, dtype=np.int64)

        x0 = np.ones(4)
        work = WorkCounter()
        out = erm_solve_step(P, x0, u, RiggedRng(), lambda_min=1.0, work=work)
        assert out is not x0
        np.testing.assert_array_equal(out, x0)
        assert work.sampled_rows == 0


class TestErmFullSolve:
    def test_quadratic_reaches_certified_gap(self):
        rng_data = np.random.default_rng(16)
        dense = rng_data.standard_normal((80, 6))
        targets = rng_data.standard_normal(80)
        P = quadratic_problem(from_dense(dense), targets)
        prob = RegressionProblem(P.A, targets)
        x_star = oracle_solve(prob)
        f_star = prob.value(x_star)
        gap0 = prob.value(np.zeros(6)) - f_star
        stats = ReductionStats()
        x = erm_full_solve(P, np.zeros(6), 1e-6, np.random.default_rng(17),
                           stats=stats)
        assert prob.value(x) - f_star <= 1e-6 * gap0
        assert stats.passes_accepted >= 1

    def test_starting_at_optimum_returns_immediately(self):
        rng_data = np.random.default_rng(18)
        dense = rng_data.standard_normal((30, 4))
        targets = rng_data.standard_normal(30)
        P = quadratic_problem(from_dense(dense), targets)
        x_star = oracle_solve(RegressionProblem(P.A, targets))
        stats = ReductionStats()
        x = erm_full_solve(P, x_star, 1e-6, np.random.default_rng(19),
                           stats=stats)
        np.testing.assert_allclose(x, x_star, rtol=0, atol=0)
        assert stats.passes_run == 0


class TestConvexGapIdentity:
    def test_exact_on_quadratics(self):
        rng = np.random.default_rng(20)
        for _trial in range(5):
            d = 4
            mf = rng.standard_normal((d, d))
            mg = rng.standard_normal((d, d))
            P_mat = mf @ mf.T + np.eye(d)
            Q_mat = mg @ mg.T + np.eye(d)
            a = rng.standard_normal(d)
            b = rng.standard_normal(d)

            def f_value(x, P_mat=P_mat, a=a):
                return 0.5 * float((x - a) @ P_mat @ (x - a))

            lhs, rhs = convex_gap_identity(
                f_value, lambda x, P_mat=P_mat: P_mat,
                lambda x, Q_mat=Q_mat, b=b: Q_mat @ (x - b),
                lambda x, Q_mat=Q_mat: Q_mat,
                x_star=a, y_star=b)
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)

    def test_logistic_pair(self):
        rng = np.random.default_rng(21)
        dense = rng.standard_normal((12, 3))
        shifts_f = rng.standard_normal(12)
        shifts_g = shifts_f + 0.3 * rng.standard_normal(12)

        def make(shifts):
            def value(x):
                return logistic_value(dense, shifts, x)

            def grad(x):
                s = dense @ x - shifts
                return dense.T @ (s + sigmoid(s))

            def hess(x):
                s = dense @ x - shifts
                curv = 1.0 + sigmoid(s) * (1.0 - sigmoid(s))
                return dense.T @ (curv[:, None] * dense)

            return value, grad, hess

        f_value, _f_grad, f_hess = make(shifts_f)
        _g_value, g_grad, g_hess = make(shifts_g)
        x_star = logistic_newton(dense, shifts_f)
        y_star = logistic_newton(dense, shifts_g)
        lhs, rhs = convex_gap_identity(f_value, f_hess, g_grad, g_hess,
                                       x_star, y_star)
        assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-10)


class TestConcentrationProbe:
    def test_sandwich_mostly_holds(self):
        rng_data = np.random.default_rng(22)
        dense = rng_data.standard_normal((100, 5))
        A = from_dense(dense)
        u = LeverageVector(values=oracle_leverage(A), role="overestimate")
        alpha = 4.0
        gamma = np.minimum(1.0, alpha * 3.0 * u.values * np.log(5))
        m = int(2 * np.ceil(gamma.sum()))
        hits = 0
        seeds = 10
        for seed in range(seeds):
            lo, hi = concentration_probe(A, u, alpha, m,
                                         np.random.default_rng(500 + seed))
            if 0.5 <= lo and hi <= 1.5:
                hits += 1
        assert hits >= 8

    def test_hypothesis_violation_raises(self):
        A = identity(5)
        u = LeverageVector(values=np.ones(5), role="overestimate")
        with pytest.raises(ConfigurationError):
            concentration_probe(A, u, 4.0, 2, np.random.default_rng(0))

    def test_single_column_rejected(self):
        A = from_dense([[1.0], [1.0]])
        u = LeverageVector(values=np.ones(2), role="overestimate")
        with pytest.raises(ConfigurationError):
            concentration_probe(A, u, 4.0, 100, np.random.default_rng(0))
