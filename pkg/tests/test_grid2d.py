import math

import numpy as np
import pytest

from qvar.grid2d import (Grid2D, GridError, SeparableExpModel, estimate_separable, grid_to_csv,
                         ingest_grid, simulate_separable)

STEP = 1.0 / 15


def field(theta1=5.0, theta2=5.0, n=64, seed=11, replicate=0, sigma2=1.0, mu=0.0):
    return simulate_separable(SeparableExpModel(sigma2, theta1, theta2, mu), n, n, seed,
                              replicate=replicate)


class TestGrid2D:
    def test_shape(self):
        g = Grid2D(np.zeros((3, 5)), 0.1, 0.2)
        assert (g.nx, g.ny) == (5, 3)

    def test_transpose_swaps_steps(self):
        g = Grid2D(np.arange(6.0).reshape(2, 3), 0.1, 0.2).transpose()
        assert (g.nx, g.ny, g.step_x, g.step_y) == (2, 3, 0.2, 0.1)

    def test_invalid(self):
        with pytest.raises(GridError):
            Grid2D(np.zeros((1, 5)), 0.1, 0.1)
        with pytest.raises(GridError):
            Grid2D(np.zeros((3, 3)), 0.0, 0.1)
        with pytest.raises(GridError):
            SeparableExpModel(1.0, 0.0, 1.0)


class TestSimulate:
    def test_zero_variance(self):
        g = simulate_separable(SeparableExpModel(0.0, 1.0, 1.0, mu=2.5), 4, 3, seed=0)
        np.testing.assert_array_equal(g.values, np.full((3, 4), 2.5))

    def test_deterministic(self):
        np.testing.assert_array_equal(field(n=8).values, field(n=8).values)
        assert not np.array_equal(field(n=8).values, field(n=8, replicate=1).values)

    def test_transpose_symmetry_in_distribution(self):
        # theta1 = theta2 on a square grid: row and column scale estimates share a law.
        est = [estimate_separable(field(4.0, 4.0, n=24, seed=3, replicate=r)) for r in range(300)]
        c1 = np.array([e.C1_hat for e in est])
        c2 = np.array([e.C2_hat for e in est])
        se = math.sqrt((c1.var() + c2.var()) / c1.size)
        assert abs(c1.mean() - c2.mean()) <= 4 * se

    @pytest.mark.slow
    def test_neighbour_covariance(self):
        model = SeparableExpModel(2.0, 3.0, 7.0)
        N = 100_000
        pairs = np.empty((N, 3))
        for r in range(N):
            v = simulate_separable(model, 3, 3, seed=5, replicate=r).values
            pairs[r] = v[1, 1], v[1, 2], v[2, 1]
        horiz = np.mean(pairs[:, 0] * pairs[:, 1])
        vert = np.mean(pairs[:, 0] * pairs[:, 2])
        for emp, theta in ((horiz, 3.0), (vert, 7.0)):
            c = 2.0 * math.exp(-theta * STEP)
            assert abs(emp - c) <= 5 * math.sqrt((4.0 + c * c) / N)


class TestEstimate:
    def test_constant_grid(self):
        with pytest.raises(GridError, match="sigma2_hat = 0"):
            estimate_separable(Grid2D(np.full((5, 5), 1.5), STEP, STEP))

    def test_fields(self):
        est = estimate_separable(field())
        assert est.theta1_hat == pytest.approx(est.C1_hat / est.sigma2_hat)
        assert set(est.to_dict()) == {"sigma2_hat", "C1_hat", "C2_hat", "theta1_hat", "theta2_hat",
                                      "near_independence"}

    def test_transpose_swaps_exactly(self):
        g = simulate_separable(SeparableExpModel(1.3, 3.0, 8.0), 20, 12, seed=2, step_x=0.05, step_y=0.08)
        a, b = estimate_separable(g), estimate_separable(g.transpose())
        assert (b.C1_hat, b.theta1_hat) == (a.C2_hat, a.theta2_hat)
        assert (b.C2_hat, b.theta2_hat) == (a.C1_hat, a.theta1_hat)
        assert b.sigma2_hat == pytest.approx(a.sigma2_hat, rel=1e-15)

    def test_scaling_and_shift(self):
        g = field(n=32)
        base = estimate_separable(g)
        for c in (2.0, 0.5):
            e = estimate_separable(Grid2D(c * g.values, g.step_x, g.step_y))
            assert e.sigma2_hat == c * c * base.sigma2_hat
            assert (e.C1_hat, e.C2_hat) == (c * c * base.C1_hat, c * c * base.C2_hat)
            assert (e.theta1_hat, e.theta2_hat) == (base.theta1_hat, base.theta2_hat)
        for c in (3.0, -0.7):
            e = estimate_separable(Grid2D(c * g.values + 4.0, g.step_x, g.step_y))
            assert e.theta1_hat == pytest.approx(base.theta1_hat, rel=1e-12)
            assert e.C2_hat == pytest.approx(c * c * base.C2_hat, rel=1e-12)

    def test_row_scale_expectation(self):
        # E[C1_hat] = sigma^2 (1 - e^{-theta1 step}) / step exactly (order-1 increments, n' denominator).
        model = SeparableExpModel(1.0, 14.72, 15.73)
        est = [estimate_separable(simulate_separable(model, 16, 16, seed=1, replicate=r)) for r in range(200)]
        c1 = np.array([e.C1_hat for e in est])
        exact = (1 - math.exp(-14.72 * STEP)) / STEP
        assert abs(c1.mean() - exact) <= 4 * c1.std(ddof=1) / math.sqrt(c1.size)

    @pytest.mark.xfail(strict=True, reason="discretization bias: at theta*step near 1 the order-1 "
                                           "estimator recovers about (1 - e^{-theta step})/step, "
                                           "two thirds of theta")
    def test_sixteen_grid_recovery_within_25_percent(self):
        model = SeparableExpModel(1.0, 14.72, 15.73)
        est = [estimate_separable(simulate_separable(model, 16, 16, seed=1, replicate=r)) for r in range(200)]
        assert abs(np.mean([e.theta1_hat for e in est]) / 14.72 - 1) <= 0.25

    def test_white_noise_flagged(self):
        rng = np.random.default_rng(0)
        est = estimate_separable(Grid2D(rng.standard_normal((16, 16)), STEP, STEP))
        assert est.near_independence
        # White noise: E[C_hat] = 2 sigma^2 / (2 step), so theta saturates near 1/step.
        assert est.theta1_hat == pytest.approx(1 / STEP, rel=0.2)

    def test_moderate_field_not_flagged(self):
        assert not estimate_separable(field()).near_independence

    @pytest.mark.slow
    def test_recovery_64(self):
        errs = []
        for r in range(200):
            e = estimate_separable(field(replicate=r))
            errs += [abs(e.theta1_hat / 5 - 1), abs(e.theta2_hat / 5 - 1)]
        assert np.median(errs) < 0.15


class TestIngest:
    def test_small(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("1,2\n3,4\n")
        g = ingest_grid(p, 0.1, 0.2)
        np.testing.assert_array_equal(g.values, [[1, 2], [3, 4]])
        assert (g.step_x, g.step_y) == (0.1, 0.2)

    def test_ragged(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("1,2,3\n4,5,6\n7,8\n")
        with pytest.raises(GridError, match="row 3"):
            ingest_grid(p, 0.1, 0.1)

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("1,2\n3,x\n")
        with pytest.raises(GridError, match="row 2: non-numeric"):
            ingest_grid(p, 0.1, 0.1)

    def test_empty(self, tmp_path):
        p = tmp_path / "g.csv"
        p.write_text("\n")
        with pytest.raises(GridError, match="empty"):
            ingest_grid(p, 0.1, 0.1)

    def test_round_trip_sixteen(self, tmp_path):
        g = field(n=16)
        p = tmp_path / "g.csv"
        p.write_text(grid_to_csv(g))
        h = ingest_grid(p, STEP, STEP)
        assert (h.nx, h.ny) == (16, 16)
        np.testing.assert_array_equal(h.values, g.values)
