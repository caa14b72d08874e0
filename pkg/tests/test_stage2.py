"""ML cost, the alternating refinement loop, and the inner box solver."""

from __future__ import annotations

import warnings

import numpy as np
import pytest

from sepnls.canon import DiagCov, ReducedAccuracyWarning, fd_jac_A_dataset, fd_jac_b_dataset
from sepnls.linlsq import residuals, stack
from sepnls.stage2 import (
    SolverConfig,
    cost,
    result_to_json,
    run_two_stage,
    solve_inner,
    solve_joint,
    solve_xi2_only,
    stddevs,
    update_R,
)
from sepnls.models import default_sampler_config, default_solver_config

from .conftest import random_inbounds


class TestCost:
    def test_zero_residuals_identity_R(self, scalar1_zero):
        model, ds = scalar1_zero.model, scalar1_zero.dataset
        J = cost(model, ds, scalar1_zero.truth1, scalar1_zero.truth2,
                 DiagCov.identity(1))
        assert J == pytest.approx(0.0, abs=1e-18)

    def test_single_sample_hand_value(self, scalar1_zero):
        # one residual of 0.3 under R = [0.09]:
        # 0.5 * 0.09/0.09 + 0.5 * ln(0.09) = 0.5 - 1.2040 = -0.7040
        model = scalar1_zero.model
        ds = scalar1_zero.dataset
        one = type(ds)(contexts=ds.contexts[:1], z=ds.z[:1] + 0.3)
        J = cost(model, one, scalar1_zero.truth1, scalar1_zero.truth2,
                 DiagCov([0.09]))
        assert J == pytest.approx(0.5 + 0.5 * np.log(0.09), rel=1e-12)
        assert J == pytest.approx(-0.7040, abs=5e-5)

    def test_R_scaling_identity(self, scalar1_noisy):
        model, ds = scalar1_noisy.model, scalar1_noisy.dataset
        xi1, xi2 = scalar1_noisy.truth1, scalar1_noisy.truth2
        base = cost(model, ds, xi1, xi2, DiagCov([0.09]))
        c = 3.7
        scaled = cost(model, ds, xi1, xi2, DiagCov([0.09 * c]))
        resid_term = base - 0.5 * ds.N * np.log(0.09)
        want = resid_term / c + 0.5 * ds.N * np.log(0.09 * c)
        assert scaled == pytest.approx(want, rel=1e-12)


class TestUpdateR:
    def test_perfect_fit_floors(self, scalar1_zero):
        model, ds = scalar1_zero.model, scalar1_zero.dataset
        R = update_R(model, ds, scalar1_zero.truth1, scalar1_zero.truth2)
        np.testing.assert_allclose(R.r, [1e-12])
        assert R.floored[0]

    def test_matches_noise_variance(self):
        from sepnls.models.simulate import SimSpec, simulate

        sim = simulate(SimSpec(model_id="scalar1", N=10000, seed=77))
        R = update_R(sim.model, sim.dataset, sim.truth1, sim.truth2)
        assert abs(R.r[0] - 0.09) < 0.05 * 0.09

    def test_is_the_minimizer_over_diagonals(self, scalar1_noisy):
        model, ds = scalar1_noisy.model, scalar1_noisy.dataset
        xi1, xi2 = scalar1_noisy.truth1, scalar1_noisy.truth2
        R_star = update_R(model, ds, xi1, xi2)
        J_star = cost(model, ds, xi1, xi2, R_star)
        rng = np.random.default_rng(42)
        for _ in range(100):
            r = R_star.r * np.exp(rng.normal(0.0, 0.5, size=R_star.m))
            assert J_star <= cost(model, ds, xi1, xi2, DiagCov(r)) + 1e-12


class TestSolveInner:
    def test_interior_quadratic(self):
        target = np.array([0.3, -1.2])

        def resid(x):
            return x - target

        x, info = solve_inner(resid, np.zeros(2), np.full(2, -5.0),
                              np.full(2, 5.0), SolverConfig())
        np.testing.assert_allclose(x, target, atol=1e-8)
        assert info.converged

    def test_clipped_quadratic_sits_on_face(self):
        target = np.array([7.0, 0.5])

        def resid(x):
            return x - target

        cfg = SolverConfig()
        x, info = solve_inner(resid, np.zeros(2), np.full(2, -5.0),
                              np.full(2, 5.0), cfg)
        # the pinned coordinate lands exactly on the face; the free one is
        # stationary to the scale-free tolerance, grad_tol * ||r|| here
        assert x[0] == 5.0
        np.testing.assert_allclose(x[1], 0.5, atol=cfg.grad_tol * 2.0)
        assert info.converged
        assert info.pg_norm <= cfg.grad_tol

    def test_out_of_box_start_is_clipped(self):
        x, info = solve_inner(lambda x: x, np.array([9.0]), np.array([-1.0]),
                              np.array([1.0]), SolverConfig())
        assert info.converged
        np.testing.assert_allclose(x, [0.0], atol=1e-8)

    def test_cost_floor_short_circuits(self):
        def resid(x):
            return np.zeros(1)

        x, info = solve_inner(resid, np.zeros(1), np.array([-1.0]),
                              np.array([1.0]), SolverConfig(), cost_floor=1e-30)
        assert info.converged and info.status == "cost_floor"
        assert info.iters == 0


class TestXi2Only:
    def test_zero_noise_roundtrip(self, scalar1_zero):
        model, ds = scalar1_zero.model, scalar1_zero.dataset
        rep, res = run_two_stage(model, ds, default_sampler_config("scalar1"),
                                 default_solver_config("scalar1"))
        assert res.mode_used == "xi2-only"
        assert res.converged
        np.testing.assert_allclose(res.xi1, [1.0, 1.0], atol=1e-6)
        np.testing.assert_allclose(res.xi2, [0.1], atol=1e-6)

    def test_noisy_estimate_lands_near_truth(self, scalar1_noisy):
        model, ds = scalar1_noisy.model, scalar1_noisy.dataset
        rep, res = run_two_stage(model, ds, default_sampler_config("scalar1"),
                                 default_solver_config("scalar1"))
        assert res.converged
        err = np.linalg.norm(np.concatenate([res.xi1 - scalar1_noisy.truth1,
                                             res.xi2 - scalar1_noisy.truth2]))
        assert err < 0.15
        assert res.final_cost <= rep.min_trace * ds.N  # sanity scale check

    def test_r_tolerance_met_on_convergence(self, scalar1_noisy):
        model, ds = scalar1_noisy.model, scalar1_noisy.dataset
        cfg = default_solver_config("scalar1")
        _, res = run_two_stage(model, ds, default_sampler_config("scalar1"), cfg)
        assert res.converged
        assert res.alternations <= cfg.max_outer_alternations
        assert res.r_delta_last < cfg.r_tol

    def test_nonconvergence_is_flagged_not_raised(self, scalar1_noisy):
        model, ds = scalar1_noisy.model, scalar1_noisy.dataset
        cfg = default_solver_config("scalar1", max_outer_alternations=1,
                                    r_tol=1e-12)
        _, res = run_two_stage(model, ds, default_sampler_config("scalar1"), cfg)
        assert not res.converged
        assert res.alternations == 1

    def test_cost_trace_non_increasing(self, scalar1_noisy):
        model, ds = scalar1_noisy.model, scalar1_noisy.dataset
        _, res = run_two_stage(model, ds, default_sampler_config("scalar1"),
                               default_solver_config("scalar1"))
        tr = np.asarray(res.cost_trace)
        slack = 1e-9 * np.maximum(1.0, np.abs(tr[:-1]))
        assert np.all(np.diff(tr) <= slack)

    def test_box_feasibility_of_result(self, scalar2_noisy):
        model, ds = scalar2_noisy.model, scalar2_noisy.dataset
        _, res = run_two_stage(model, ds, default_sampler_config("scalar2"),
                               default_solver_config("scalar2"))
        sp = model.space
        assert sp.contains1(res.xi1) and sp.contains2(res.xi2)


class TestJoint:
    def test_fixed_point_at_zero_noise_optimum(self, scalar1_zero):
        model, ds = scalar1_zero.model, scalar1_zero.dataset
        R0 = update_R(model, ds, scalar1_zero.truth1, scalar1_zero.truth2)
        warm = (scalar1_zero.truth1, scalar1_zero.truth2, R0)
        res = solve_joint(model, ds, warm, default_solver_config("scalar1"))
        assert res.converged
        assert res.alternations <= 2
        np.testing.assert_allclose(res.xi1, scalar1_zero.truth1, atol=1e-9)
        np.testing.assert_allclose(res.xi2, scalar1_zero.truth2, atol=1e-9)

    def test_modes_agree_at_unique_minimum(self, scalar1_noisy):
        model, ds = scalar1_noisy.model, scalar1_noisy.dataset
        s1 = default_sampler_config("scalar1")
        _, a = run_two_stage(model, ds, s1, default_solver_config("scalar1"))
        _, b = run_two_stage(model, ds, s1,
                             default_solver_config("scalar1", mode="joint"))
        assert a.mode_used == "xi2-only" and b.mode_used == "joint"
        assert a.final_cost == pytest.approx(b.final_cost, abs=1e-6)
        np.testing.assert_allclose(a.xi2, b.xi2, atol=1e-4)
        np.testing.assert_allclose(a.xi1, b.xi1, atol=1e-4)


class TestStddevs:
    def test_fisher_scaling_with_sample_size(self, scalar1_noisy):
        model, ds = scalar1_noisy.model, scalar1_noisy.dataset
        from sepnls.canon import Dataset
        from sepnls.models.scalar import Scalar1Model

        big_ctx = tuple(
            type(ds.contexts[0])(x=c.x, u=c.u, k=i)
            for i, c in enumerate(ds.contexts * 4))
        big = Dataset(contexts=big_ctx, z=np.tile(ds.z, (4, 1)))
        big_model = Scalar1Model(np.array([c.x[0] for c in big_ctx]))
        R = update_R(model, ds, scalar1_noisy.truth1, scalar1_noisy.truth2)
        sd1, _ = stddevs(model, ds, scalar1_noisy.truth1,
                         scalar1_noisy.truth2, R)
        sd4, _ = stddevs(big_model, big, scalar1_noisy.truth1,
                         scalar1_noisy.truth2, R)
        ratio = sd4 / sd1
        assert np.all(ratio > 0.4) and np.all(ratio < 0.6)

    def test_reported_magnitudes_are_sane(self, scalar1_noisy):
        model, ds = scalar1_noisy.model, scalar1_noisy.dataset
        _, res = run_two_stage(model, ds, default_sampler_config("scalar1"),
                               default_solver_config("scalar1"))
        # with sigma = 0.3 and N = 100 the parameter deviations sit in the
        # few-percent range
        assert np.all(res.stddev > 1e-3) and np.all(res.stddev < 0.2)


class TestGradientConsistency:
    def _check_points(self, model, ds, n_points, seed):
        """FD gradient of the cost against the assembled residual-Jacobian
        gradient at random interior points, 1e-5 relative."""
        rng = np.random.default_rng(seed)
        sp = model.space
        R = DiagCov(np.full(model.m, 0.25))
        w = np.tile(1.0 / np.sqrt(R.r), ds.N)
        n1 = sp.n1
        for _ in range(n_points):
            xi1, xi2 = random_inbounds(sp, rng, shrink=0.6)
            theta = np.concatenate([xi1, xi2])

            sys = stack(model, ds, xi2)
            v = (sys.z_big - sys.b_big - sys.A_big @ xi1) * w
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ReducedAccuracyWarning)
                dA = model.dA_dxi2_all(ds.contexts, xi2)
                if dA is None:
                    dA = fd_jac_A_dataset(model, ds.contexts, xi2)
                db = model.db_dxi2_all(ds.contexts, xi2)
                if db is None:
                    db = fd_jac_b_dataset(model, ds.contexts, xi2)
            dvec = (np.einsum("kmip,i->kmp", dA, xi1) + db).reshape(-1, sp.n2)
            g = np.empty(theta.size)
            g[:n1] = -(sys.A_big * w[:, None]).T @ v
            g[n1:] = -(dvec * w[:, None]).T @ v

            def f(th):
                return cost(model, ds, th[:n1], th[n1:], R)

            g_fd = np.empty(theta.size)
            h = 1e-6 * np.maximum(1.0, np.abs(theta))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ReducedAccuracyWarning)
                for i in range(theta.size):
                    tp, tm = theta.copy(), theta.copy()
                    tp[i] += h[i]
                    tm[i] -= h[i]
                    g_fd[i] = (f(tp) - f(tm)) / (2.0 * h[i])
            scale = max(1.0, float(np.max(np.abs(g))))
            np.testing.assert_allclose(g_fd, g, atol=1e-5 * scale)

    def test_scalar1(self, scalar1_noisy):
        self._check_points(scalar1_noisy.model, scalar1_noisy.dataset, 20, 1)

    def test_scalar2(self, scalar2_noisy):
        self._check_points(scalar2_noisy.model, scalar2_noisy.dataset, 20, 2)

    def test_mag(self, mag_noisy):
        self._check_points(mag_noisy.model, mag_noisy.dataset, 20, 3)

    def test_pitot(self, pitot_zero):
        self._check_points(pitot_zero.model, pitot_zero.dataset, 20, 4)

    def test_datacompat(self, datacompat_zero):
        self._check_points(datacompat_zero.model, datacompat_zero.dataset, 20, 5)


class TestResultSerialization:
    def test_json_fields(self, scalar1_noisy):
        model, ds = scalar1_noisy.model, scalar1_noisy.dataset
        _, res = run_two_stage(model, ds, default_sampler_config("scalar1"),
                               default_solver_config("scalar1"))
        d = result_to_json(res)
        for key in ("model_id", "mode_used", "xi1", "xi2", "stddev", "Rdiag",
                    "final_cost", "alternations", "converged", "seed"):
            assert key in d
        assert d["model_id"] == "scalar1"
        assert isinstance(d["xi1"], list) and len(d["xi1"]) == 2
