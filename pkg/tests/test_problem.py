import math

import numpy as np
import pytest

from bregmm.errors import (ConfigError, DomainError, NumericalError,
                           StructuralError)
from bregmm.problem import (ChannelSeparableMap, CompositeProblem, Regularizer,
                            ScalarFn, SeparableMap, SmoothOuter,
                            SumCompositionMap, apply_inner,
                            check_gradient, check_scalar_derivative, energy,
                            exp_fn, identity_fn, sin_fn, square_fn)


def quadratic_problem(n, f=None):
    A = np.eye(n)
    f = np.zeros(n) if f is None else np.asarray(f, dtype=float)
    return CompositeProblem(outer=SmoothOuter.least_squares(A, f),
                            inner=SeparableMap.uniform(identity_fn(), n),
                            reg=Regularizer.none(), lo=-100.0, hi=100.0)


class TestEnergy:
    def test_plain_quadratic(self):
        prob = quadratic_problem(2)
        assert energy(prob, np.array([3.0, 4.0])) == 12.5

    def test_constructed_minimum_is_zero(self):
        # f = A rho(u*) with a penalty centered at u* forces energy(u*) = 0
        rng = np.random.default_rng(7)
        n = 5
        A = rng.standard_normal((n, n))
        u_star = rng.uniform(-1, 1, n)
        rho = exp_fn()
        f = A @ rho(u_star)
        sq = square_fn()
        reg = Regularizer.separable(
            [ScalarFn(fn=lambda x, c=u_star[i]: (np.asarray(x) - c) ** 2)
             for i in range(n)])
        prob = CompositeProblem(outer=SmoothOuter.least_squares(A, f),
                                inner=SeparableMap.uniform(rho, n),
                                reg=reg, lo=-3.0, hi=3.0)
        assert abs(energy(prob, u_star)) < 1e-12

    def test_exp_identity_hand_value(self):
        # n=2, A=I, rho=exp, f=(e,1): zero at (1,0), half*(1-e)^2 at (0,0)
        A = np.eye(2)
        f = np.array([np.e, 1.0])
        prob = CompositeProblem(outer=SmoothOuter.least_squares(A, f),
                                inner=SeparableMap.uniform(exp_fn(), 2),
                                reg=Regularizer.none(), lo=-3.0, hi=3.0)
        assert abs(energy(prob, np.array([1.0, 0.0]))) < 1e-12
        expected = 0.5 * (1.0 - np.e) ** 2
        assert energy(prob, np.array([0.0, 0.0])) == pytest.approx(expected, rel=1e-12)

    def test_dimension_mismatch(self):
        prob = quadratic_problem(3)
        with pytest.raises(StructuralError):
            energy(prob, np.zeros(2))

    def test_nan_reports_coordinate(self):
        bad = ScalarFn(fn=lambda x: np.where(np.asarray(x) > 0, np.nan, x))
        prob = CompositeProblem(outer=SmoothOuter.least_squares(np.eye(2), np.zeros(2)),
                                inner=SeparableMap([identity_fn(), bad]),
                                reg=Regularizer.none(), lo=-5, hi=5)
        with pytest.raises(NumericalError) as err:
            energy(prob, np.array([0.5, 0.5]))
        assert err.value.index == 1

    def test_infeasible_returns_sentinel(self):
        A = np.eye(2)
        prob = CompositeProblem(outer=SmoothOuter.kl_divergence(A, np.ones(2)),
                                inner=SeparableMap.uniform(identity_fn(), 2),
                                reg=Regularizer.none(), lo=-5, hi=5)
        assert energy(prob, np.array([-1.0, 1.0])) == math.inf

    def test_deterministic(self):
        prob = quadratic_problem(4, f=[1, 2, 3, 4])
        u = np.array([0.3, -0.7, 1.9, 2.2])
        assert energy(prob, u) == energy(prob, u)

    def test_coordinate_permutation_invariance(self):
        rng = np.random.default_rng(3)
        n = 6
        d = rng.uniform(0.5, 2.0, n)
        f = rng.uniform(-1, 1, n)
        u = rng.uniform(-1, 1, n)
        perm = rng.permutation(n)

        def build(dv, fv):
            return CompositeProblem(
                outer=SmoothOuter.least_squares(np.diag(dv), fv),
                inner=SeparableMap.uniform(exp_fn(), n),
                reg=Regularizer.separable_uniform(square_fn(), n),
                lo=-3, hi=3)

        e1 = energy(build(d, f), u)
        e2 = energy(build(d[perm], f[perm]), u[perm])
        assert e1 == pytest.approx(e2, rel=1e-14)


class TestApplyInner:
    def test_identity(self):
        m = SeparableMap.uniform(identity_fn(), 2)
        np.testing.assert_array_equal(apply_inner(m, np.array([1.0, 2.0])), [1.0, 2.0])

    def test_sin(self):
        m = SeparableMap.uniform(sin_fn(), 2)
        out = apply_inner(m, np.array([0.0, np.pi / 2]))
        np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-15)

    def test_rank1_row_sums(self):
        # A=[[1,1],[0,2]], rho_j = square, u=(1,2): rows (1+4, 2*4) = (5, 8)
        m = SumCompositionMap(A=[[1.0, 1.0], [0.0, 2.0]],
                              col_fns=[square_fn(), square_fn()])
        np.testing.assert_allclose(apply_inner(m, np.array([1.0, 2.0])), [5.0, 8.0])

    def test_general_grid(self):
        m = SumCompositionMap(row_maps=[[identity_fn(), square_fn()],
                                        [sin_fn(), identity_fn()]])
        out = apply_inner(m, np.array([2.0, 3.0]))
        np.testing.assert_allclose(out, [2.0 + 9.0, math.sin(2.0) + 3.0])

    def test_channel_map_stacks(self):
        m = ChannelSeparableMap([identity_fn(), square_fn()], 3)
        u = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(apply_inner(m, u), [1, 2, 3, 1, 4, 9])

    def test_dimension_mismatch(self):
        m = SeparableMap.uniform(identity_fn(), 3)
        with pytest.raises(StructuralError):
            apply_inner(m, np.zeros(4))


class TestCheckGradient:
    def test_least_squares_is_exact(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((4, 3))
        outer = SmoothOuter.least_squares(A, rng.standard_normal(4))
        assert check_gradient(outer, rng.standard_normal(3), 1e-5) < 1e-7

    def test_kl_formula(self):
        # grad = A^T (1 - f / (A v)); at v=(1,1), f=(1,1), A=I the gradient is 0
        outer = SmoothOuter.kl_divergence(np.eye(2), np.ones(2))
        v = np.ones(2)
        np.testing.assert_allclose(outer.gradient(v), np.zeros(2), atol=1e-14)
        assert check_gradient(outer, np.array([1.3, 0.7]), 1e-6) < 1e-5

    def test_truncated_quadratic_flat_region(self):
        outer = SmoothOuter.truncated_quadratic(np.eye(2), np.zeros(2), lam=1.0)
        v = np.array([50.0, -40.0])  # far beyond the cap
        np.testing.assert_allclose(outer.gradient(v), np.zeros(2), atol=1e-14)
        assert check_gradient(outer, v, 1e-5) < 1e-6

    def test_boundary_rejected(self):
        outer = SmoothOuter.kl_divergence(np.eye(2), np.ones(2))
        with pytest.raises(DomainError):
            check_gradient(outer, np.array([1e-9, 1.0]), 1e-5)

    def test_all_kinds_pass_on_random_interior_points(self):
        rng = np.random.default_rng(42)
        A = rng.uniform(0.1, 1.0, (5, 5))
        outers = [SmoothOuter.least_squares(A, rng.standard_normal(5)),
                  SmoothOuter.kl_divergence(A, rng.uniform(0.5, 2.0, 5)),
                  SmoothOuter.truncated_quadratic(A, rng.standard_normal(5))]
        for outer in outers:
            for _ in range(100):
                v = rng.uniform(0.2, 2.0, 5)
                assert check_gradient(outer, v, 1e-6) < 1e-5


class TestTruncatedQuadratic:
    def test_matches_square_inside_and_caps(self):
        outer = SmoothOuter.truncated_quadratic(np.eye(1), np.zeros(1), lam=1.0)
        s = outer._s
        assert outer.value(np.array([0.5 * s])) == pytest.approx((0.5 * s) ** 2)
        assert outer.value(np.array([100.0])) == pytest.approx(1.0)
        # C1 joins: slope continuity at s and at s + delta
        for t0 in (s, s + outer.delta):
            h = 1e-7
            left = (outer._q(np.array([t0])) - outer._q(np.array([t0 - h]))) / h
            right = (outer._q(np.array([t0 + h])) - outer._q(np.array([t0]))) / h
            assert abs(left - right) < 1e-5

    def test_curvature_bounded_by_two(self):
        outer = SmoothOuter.truncated_quadratic(np.eye(1), np.zeros(1), lam=2.0)
        t = np.linspace(-4, 4, 2001)
        q = outer._q(t)
        dd = np.diff(q, 2) / (t[1] - t[0]) ** 2
        assert np.max(np.abs(dd)) <= 2.0 + 1e-6


class TestScalarFns:
    def test_derivatives_match_finite_differences(self):
        for fn in (identity_fn(), exp_fn(), square_fn(), sin_fn()):
            assert check_scalar_derivative(fn, -2.0, 2.0, trials=64) < 1e-5

    def test_missing_derivative_raises(self):
        f = ScalarFn(fn=np.abs)
        with pytest.raises(ConfigError):
            f.d(np.array([1.0]))


class TestRegularizer:
    def test_separable_sum(self):
        reg = Regularizer.separable_uniform(square_fn(), 3)
        assert reg.value(np.array([1.0, 2.0, 3.0])) == 14.0

    def test_tv_anisotropic(self):
        reg = Regularizer.tv(2.0, dims=(2, 2))
        u = np.array([[0.0, 1.0], [0.0, 1.0]]).reshape(-1)
        # x-differences: 1 + 1, y-differences: 0 + 0
        assert reg.value(u) == pytest.approx(4.0)

    def test_tv_isotropic(self):
        reg = Regularizer.tv(1.0, dims=(2, 2), coupling="iso")
        u = np.array([[0.0, 1.0], [1.0, 1.0]]).reshape(-1)
        # pixel (0,0) has dx=1, dy=1 -> sqrt(2); pixel (1,0) has dx=0; (0,1) dy=0
        assert reg.value(u) == pytest.approx(math.sqrt(2.0))

    def test_tv_constant_is_zero(self):
        reg = Regularizer.tv(3.0, dims=(4, 4))
        assert reg.value(np.full(16, 2.5)) == 0.0

    def test_tv_not_differentiable(self):
        reg = Regularizer.tv(1.0, dims=(2, 2))
        with pytest.raises(ConfigError):
            reg.deriv(np.zeros(4))
