import math

import numpy as np
import pytest

from bregmm.errors import ConfigError, NumericalError
from bregmm.scalar import (minimize_1d, minimize_1d_batch, parabolic_refine)


def rastrigin(x):
    return x * x - 10.0 * np.cos(2.0 * np.pi * x)


class TestMinimize1D:
    def test_grid_hits_zero_of_square(self):
        x, fx = minimize_1d(lambda t: t * t, (-3.0, 3.0), grid_n=7)
        assert x == 0.0 and fx == 0.0

    def test_rastrigin_global_minimum(self):
        # dense-grid oracle: 10^6 points confirm the global minimum at 0
        grid = np.linspace(-3, 3, 1_000_001)
        oracle = grid[np.argmin(rastrigin(grid))]
        assert abs(oracle) < 1e-5
        x, fx = minimize_1d(rastrigin, (-3.0, 3.0))
        assert abs(x) < 1e-6
        assert fx == pytest.approx(-10.0, abs=1e-10)

    def test_refinement_exact_for_quadratics(self):
        # the parabola vertex is exact for quadratic data up to roundoff
        x, fx = minimize_1d(lambda t: (t - 2.3) ** 2, (-3.0, 3.0), grid_n=61)
        assert abs(x - 2.3) < 1e-8

    def test_grid_dominance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b = sorted(rng.uniform(-5, 5, 2))
            if b - a < 0.1:
                continue
            c = rng.uniform(0.5, 3.0, 4)

            def f(t, c=c):
                return c[0] * np.sin(c[1] * t) + c[2] * (t - c[3]) ** 2

            grid_n = 65
            x, fx = minimize_1d(f, (a, b), grid_n=grid_n)
            grid = np.linspace(a, b, grid_n)
            assert fx <= np.min(f(grid)) + 1e-15
            assert a <= x <= b

    def test_halving_grid_never_worse_on_unimodal(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            center = rng.uniform(-2, 2)
            scale = rng.uniform(0.5, 4.0)

            def f(t, c=center, s=scale):
                return s * (t - c) ** 4 + (t - c) ** 2

            _, f_coarse = minimize_1d(f, (-3.0, 3.0), grid_n=129)
            _, f_fine = minimize_1d(f, (-3.0, 3.0), grid_n=257)
            assert f_fine <= f_coarse + 1e-12

    def test_deterministic(self):
        out1 = minimize_1d(rastrigin, (-3.0, 3.0))
        out2 = minimize_1d(rastrigin, (-3.0, 3.0))
        assert out1 == out2

    def test_nan_raises_with_abscissa(self):
        def f(t):
            return np.where(t > 1.0, np.nan, t * t)

        with pytest.raises(NumericalError):
            minimize_1d(f, (-3.0, 3.0), grid_n=33)

    def test_inf_is_tolerated(self):
        # +inf marks infeasible candidates and is simply never selected
        def f(t):
            return np.where(t <= 0.0, np.inf, (t - 1.0) ** 2)

        x, fx = minimize_1d(f, (-3.0, 3.0))
        assert abs(x - 1.0) < 1e-8

    def test_include_candidate_wins_ties(self):
        def f(t):
            return (t - 0.123456789) ** 2

        x, fx = minimize_1d(f, (-1.0, 1.0), grid_n=5, refine_steps=0,
                            include=[0.123456789])
        assert x == 0.123456789

    def test_bad_interval(self):
        with pytest.raises(ConfigError):
            minimize_1d(lambda t: t, (1.0, 1.0))
        with pytest.raises(ConfigError):
            minimize_1d(lambda t: t, (0.0, 1.0), grid_n=2)


class TestBatch:
    def test_rows_independent(self):
        centers = np.array([-1.5, 0.25, 2.0])

        def rows(U):
            return (U - centers[:, None]) ** 2

        x, fx = minimize_1d_batch(rows, np.full(3, -3.0), np.full(3, 3.0))
        np.testing.assert_allclose(x, centers, atol=1e-8)
        assert np.all(fx < 1e-15)

    def test_anchor_never_exceeded(self):
        rng = np.random.default_rng(2)
        anchors = rng.uniform(-3, 3, 5)

        def rows(U):
            return np.sin(3.0 * U) + 0.1 * U * U

        x, fx = minimize_1d_batch(rows, np.full(5, -3.0), np.full(5, 3.0),
                                  grid_n=17, anchors=anchors)
        anchor_vals = rows(anchors[:, None])[:, 0]
        assert np.all(fx <= anchor_vals + 1e-15)

    def test_matches_scalar_version(self):
        def f(t):
            return rastrigin(t)

        def rows(U):
            return rastrigin(U)

        xs, fxs = minimize_1d_batch(rows, np.full(4, -3.0), np.full(4, 3.0))
        x, fx = minimize_1d(f, (-3.0, 3.0))
        np.testing.assert_allclose(xs, np.full(4, x))
        np.testing.assert_allclose(fxs, np.full(4, fx))


class TestParabolicRefine:
    def test_symmetric_points(self):
        assert parabolic_refine(-1.0, 0.0, 1.0, 1.0, 0.0, 1.0) == 0.0

    def test_hand_solved_vertex(self):
        # f(x) = x^2 - 2x on (0, 1, 2): values (0, -1, 0), vertex at 1
        assert parabolic_refine(0.0, 1.0, 2.0, 0.0, -1.0, 0.0) == pytest.approx(1.0)

    def test_collinear_returns_mid(self):
        assert parabolic_refine(0.0, 1.0, 2.0, 2.0, 1.0, 0.0) == 1.0

    def test_clamped_to_bracket(self):
        v = parabolic_refine(0.0, 1.0, 2.0, 1.0, 0.999999, 0.0)
        assert 0.0 <= v <= 2.0

    def test_bad_ordering(self):
        with pytest.raises(ConfigError):
            parabolic_refine(1.0, 0.0, 2.0, 0.0, 0.0, 0.0)
