import itertools
import math

import numpy as np
import pytest

from bregmm.errors import StructuralError
from bregmm.geometry import Geometry, supplied_smoothness
from bregmm.lifting import (LabelGrid, PDConfig, build_lifted_majorizer,
                            discrete_energy, mm_step_lifted, project_layer_cake,
                            solve_lifted)
from bregmm.problem import (CompositeProblem, Regularizer, ScalarFn,
                            SeparableMap, SmoothOuter, identity_fn)
from bregmm.solver import SolverConfig, majorizer_value, run


def grid_of(unary, dims, alpha, labels=None, coupling="aniso"):
    n_pix, ell = unary.shape
    labels = np.linspace(0.0, 1.0, ell) if labels is None else labels
    return LabelGrid(dims=dims, labels=labels, unary=unary,
                     alpha_x=np.full(dims, float(alpha)),
                     alpha_y=np.full(dims, float(alpha)), coupling=coupling)


def enumerate_best(grid):
    ell = grid.labels.shape[0]
    best = math.inf
    best_assign = None
    for assign in itertools.product(range(ell), repeat=grid.n_pixels):
        e = discrete_energy(grid, np.array(assign))
        if e < best:
            best, best_assign = e, assign
    return best, best_assign


class TestLayerCakeProjection:
    def test_output_is_monotone_in_box(self):
        rng = np.random.default_rng(0)
        w = rng.uniform(-0.5, 1.5, size=(40, 17))
        p = project_layer_cake(w)
        assert np.all(p >= 0.0) and np.all(p <= 1.0)
        assert np.all(np.diff(p, axis=1) <= 1e-15)

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        p = project_layer_cake(rng.uniform(-1, 2, size=(10, 9)))
        np.testing.assert_allclose(project_layer_cake(p), p, atol=1e-15)

    def test_feasible_points_fixed(self):
        rng = np.random.default_rng(2)
        w = np.sort(rng.uniform(0, 1, size=(10, 9)), axis=1)[:, ::-1]
        np.testing.assert_allclose(project_layer_cake(w), w, atol=1e-15)

    def test_projection_optimality(self):
        # <y - p, w - p> <= 0 for every feasible w characterizes the
        # Euclidean projection onto the convex feasible set
        rng = np.random.default_rng(3)
        y = rng.uniform(-1, 2, size=(1, 12))
        p = project_layer_cake(y)
        for _ in range(300):
            w = np.sort(rng.uniform(0, 1, 12))[::-1][None, :]
            assert float(np.sum((y - p) * (w - p))) <= 1e-10


class TestBuildLiftedMajorizer:
    def _tv_problem(self, dims, alpha, f):
        n = dims[0] * dims[1]
        return CompositeProblem(
            outer=SmoothOuter.least_squares(np.eye(n), f),
            inner=SeparableMap.uniform(identity_fn(), n),
            reg=Regularizer.tv(alpha, dims=dims), lo=0.0, hi=1.0)

    def test_zero_outer_gives_pure_bregman(self):
        # G == 0, quadratic h, rho = id: unary = (label - u_k)^2 / (2 tau)
        n = 4
        outer = SmoothOuter.custom(lambda v: 0.0, lambda v: np.zeros_like(v))
        prob = CompositeProblem(outer=outer,
                                inner=SeparableMap.uniform(identity_fn(), n),
                                reg=Regularizer.tv(0.5, dims=(2, 2)),
                                lo=0.0, hi=1.0)
        u_k = np.array([0.1, 0.5, 0.9, 0.3])
        tau = 0.4
        grid = build_lifted_majorizer(prob, Geometry.quadratic(), tau, u_k, 5)
        labels = np.linspace(0, 1, 5)
        expected = (labels[None, :] - u_k[:, None]) ** 2 / (2 * tau)
        np.testing.assert_allclose(grid.unary, expected, atol=1e-14)

    def test_one_pixel_hand_table(self):
        # single pixel, 3 labels: d/2 (l - z)^2 / tau + g l by hand
        f = np.array([0.25])
        prob = self._tv_problem((1, 1), 0.0, f)
        geom = Geometry.diag_quadratic(np.array([2.0]))
        u_k = np.array([0.5])
        tau = 0.5
        grid = build_lifted_majorizer(prob, geom, tau, u_k, 3)
        g = 0.5 - 0.25  # gradient of half (v - f)^2 at v = u_k
        hand = np.array([[(2.0 / 2) * (l - 0.5) ** 2 / tau + g * l
                          for l in (0.0, 0.5, 1.0)]])
        np.testing.assert_allclose(grid.unary, hand, atol=1e-14)

    def test_concave_edge_penalty_linearized(self):
        # log-type edge penalty: weights drop where the anchor has jumps
        eps = 0.1
        gamma = (lambda t: np.log1p(t / eps), lambda t: 1.0 / (eps + t))
        n = 4
        prob = CompositeProblem(
            outer=SmoothOuter.least_squares(np.eye(n), np.zeros(n)),
            inner=SeparableMap.uniform(identity_fn(), n),
            reg=Regularizer.tv(1.0, dims=(1, 4), gamma=gamma), lo=0.0, hi=1.0)
        u_k = np.array([0.0, 0.0, 1.0, 1.0])
        grid = build_lifted_majorizer(prob, Geometry.quadratic(), 0.5, u_k, 4)
        wx = grid.alpha_x
        assert wx[0, 1] == pytest.approx(1.0 / (eps + 1.0))  # across the jump
        assert wx[0, 0] == pytest.approx(1.0 / eps)          # flat region


class TestSolveLifted:
    def test_alpha_zero_is_pixel_argmin(self):
        rng = np.random.default_rng(4)
        unary = rng.uniform(0, 1, size=(6, 5))
        grid = grid_of(unary, (2, 3), 0.0)
        sol = solve_lifted(grid)
        np.testing.assert_array_equal(sol.label_index, np.argmin(unary, axis=1))
        assert sol.primal_energy == pytest.approx(float(np.sum(np.min(unary, axis=1))))

    def test_two_pixel_chain_brute_force(self):
        rng = np.random.default_rng(5)
        unary = rng.uniform(0, 1, size=(2, 4))
        grid = grid_of(unary, (1, 2), 0.8)
        sol = solve_lifted(grid, PDConfig(max_iter=4000, tol_gap=1e-12))
        best, _ = enumerate_best(grid)
        assert sol.primal_energy <= best + 1e-6

    def test_enumeration_small_grids(self):
        rng = np.random.default_rng(6)
        shapes = [(1, 2), (2, 2), (1, 4), (4, 1), (1, 3)]
        for t in range(25):
            dims = shapes[t % len(shapes)]
            n = dims[0] * dims[1]
            ell = int(rng.integers(2, 7))
            unary = rng.uniform(0, 1, size=(n, ell))
            alpha = float(rng.uniform(0.05, 0.6))
            grid = grid_of(unary, dims, alpha)
            sol = solve_lifted(grid, PDConfig(max_iter=6000, tol_gap=1e-12))
            best, _ = enumerate_best(grid)
            assert sol.primal_energy <= best + 1e-6 * (1.0 + abs(best))

    def test_strong_coupling_goes_constant(self):
        rng = np.random.default_rng(7)
        unary = rng.uniform(0, 1, size=(4, 5))
        grid = grid_of(unary, (2, 2), 50.0)
        sol = solve_lifted(grid, PDConfig(max_iter=4000))
        assert np.all(sol.label_index == sol.label_index[0])

    def test_dual_gap_nonnegative_and_checkpoints_nonincreasing(self):
        rng = np.random.default_rng(8)
        unary = rng.uniform(0, 1, size=(16, 8))
        grid = grid_of(unary, (4, 4), 0.3)
        sol = solve_lifted(grid, PDConfig(max_iter=1500, check_every=50))
        assert sol.dual_gap >= -1e-10
        gaps = np.array(sol.gap_checkpoints)
        assert np.all(np.diff(gaps) <= 1e-12)

    def test_warm_start_reuses_state(self):
        rng = np.random.default_rng(9)
        unary = rng.uniform(0, 1, size=(9, 6))
        grid = grid_of(unary, (3, 3), 0.2)
        cold = solve_lifted(grid, PDConfig(max_iter=2000, tol_gap=1e-11))
        warm = solve_lifted(grid, PDConfig(max_iter=200, tol_gap=1e-11),
                            warm=cold.state)
        assert warm.primal_energy <= cold.primal_energy + 1e-9

    def test_primal_state_monotone(self):
        rng = np.random.default_rng(10)
        unary = rng.uniform(0, 1, size=(4, 6))
        grid = grid_of(unary, (2, 2), 0.4)
        sol = solve_lifted(grid, PDConfig(max_iter=137))
        w = sol.state.w.reshape(4, 5)
        assert np.all(np.diff(w, axis=1) <= 1e-12)
        assert np.all(w >= 0.0) and np.all(w <= 1.0)

    def test_rof_like_matches_convex_solver(self):
        cvxpy = pytest.importorskip("cvxpy")
        rng = np.random.default_rng(11)
        H = W = 8
        n = H * W
        ell = 25
        labels = np.linspace(0.0, 1.0, ell)
        for trial in range(3):
            f = rng.uniform(0.2, 0.8, n)
            wgt = rng.uniform(0.5, 2.0, n)
            unary = 0.5 * wgt[:, None] * (labels[None, :] - f[:, None]) ** 2
            alpha = 0.05
            grid = grid_of(unary, (H, W), alpha, labels=labels)
            sol = solve_lifted(grid, PDConfig(max_iter=8000, tol_gap=1e-10))

            # independent oracle: the same discrete energy, i.e. piecewise
            # linear unaries between labels plus anisotropic TV, via cvxpy
            u = cvxpy.Variable(n)
            s = cvxpy.Variable(n)
            cons = [u >= 0.0, u <= 1.0]
            slopes = np.diff(unary, axis=1) / (labels[1] - labels[0])
            for k in range(ell - 1):
                b = unary[:, k] - slopes[:, k] * labels[k]
                cons.append(s >= cvxpy.multiply(slopes[:, k], u) + b)
            img = cvxpy.reshape(u, (H, W), order="C")
            tv = (cvxpy.sum(cvxpy.abs(img[:, 1:] - img[:, :-1]))
                  + cvxpy.sum(cvxpy.abs(img[1:, :] - img[:-1, :])))
            prob = cvxpy.Problem(cvxpy.Minimize(cvxpy.sum(s) + alpha * tv), cons)
            prob.solve()
            assert sol.primal_energy == pytest.approx(
                prob.value, rel=1e-4, abs=1e-4 * (1.0 + abs(prob.value)))

    def test_invalid_grid_rejected(self):
        with pytest.raises(StructuralError):
            grid_of(np.full((4, 1), 0.0), (2, 2), 0.1)  # single label
        bad = np.zeros((4, 3))
        bad[0, 0] = np.inf
        with pytest.raises(StructuralError):
            grid_of(bad, (2, 2), 0.1)


class TestMMStepLifted:
    def _toy_problem(self, dims, alpha, seed=0):
        rng = np.random.default_rng(seed)
        n = dims[0] * dims[1]
        A = np.eye(n) + rng.standard_normal((n, n)) / (2 * math.sqrt(n))
        f = A @ rng.uniform(0.2, 0.8, n)
        prob = CompositeProblem(outer=SmoothOuter.least_squares(A, f),
                                inner=SeparableMap.uniform(identity_fn(), n),
                                reg=Regularizer.tv(alpha, dims=dims),
                                lo=0.0, hi=1.0)
        from bregmm.geometry import diag_dominant_weights
        geom = Geometry.diag_quadratic(diag_dominant_weights(A))
        return prob, geom

    def test_alpha_zero_matches_label_argmin(self):
        prob, geom = self._toy_problem((2, 2), 0.0, seed=12)
        u_k = np.full(4, 0.5)
        tau = 0.9
        u_next, maj, _ = mm_step_lifted(prob, geom, tau, u_k, 9, sublabel=False)
        grid = build_lifted_majorizer(prob, geom, tau, u_k, 9)
        idx = np.argmin(grid.unary, axis=1)
        np.testing.assert_allclose(u_next, grid.labels[idx], atol=1e-12)

    def test_constant_scene_stays_constant(self):
        n = 9
        f = np.full(n, 0.6)
        prob = CompositeProblem(outer=SmoothOuter.least_squares(np.eye(n), f),
                                inner=SeparableMap.uniform(identity_fn(), n),
                                reg=Regularizer.tv(0.3, dims=(3, 3)),
                                lo=0.0, hi=1.0)
        u_k = np.full(n, 0.2)
        u_next, _, _ = mm_step_lifted(prob, Geometry.quadratic(), 0.9, u_k, 17,
                                      pd=PDConfig(max_iter=2000))
        assert np.max(u_next) - np.min(u_next) < 1e-9

    def test_guard_statistics_on_random_instances(self):
        # surrogate minimization must not raise the energy (50 draws, 4x4)
        for t in range(50):
            prob, geom = self._toy_problem((4, 4), 0.05, seed=100 + t)
            rng = np.random.default_rng(200 + t)
            u_k = rng.uniform(0.0, 1.0, 16)
            u_next, maj, _ = mm_step_lifted(prob, geom, 0.99, u_k, 33,
                                            pd=PDConfig(max_iter=1200))
            E_k = prob.energy(u_k)
            assert maj <= E_k + 1e-9 * (1.0 + abs(E_k))
            E_next = prob.energy(u_next)
            assert E_next <= E_k + 1e-9 * (1.0 + abs(E_k))

    def test_result_beats_anchor_projection(self):
        prob, geom = self._toy_problem((3, 3), 0.1, seed=13)
        u_k = np.full(9, 0.35)
        tau = 0.9
        grid = build_lifted_majorizer(prob, geom, tau, u_k, 17)
        sol = solve_lifted(grid, PDConfig(max_iter=3000))
        anchor_idx = np.argmin(np.abs(grid.labels[None, :] - u_k[:, None]), axis=1)
        assert sol.primal_energy <= discrete_energy(grid, anchor_idx) + 1e-9

    def test_run_with_tv_routes_to_lifting(self):
        prob, geom = self._toy_problem((3, 3), 0.05, seed=14)
        cfg = SolverConfig(method="proposed", tau=0.9, max_iter=8, labels=33,
                           pd=PDConfig(max_iter=1500), tol_dz=1e-14)
        out = run(prob, geom, cfg, np.full(9, 0.5),
                  smoothness=supplied_smoothness(1.0))
        E = out.energies()
        assert np.all(np.diff(E) <= 1e-9 * (1.0 + np.abs(E[:-1])))
