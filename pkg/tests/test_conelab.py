import math
import unittest

import numpy as np

from hullwalk import conelab, numkit
from hullwalk.errors import InvalidRegime
from hullwalk.randwalk import (RngStream, grid_geometric, grid_zn_checkpoints, scaled_increments,
                               simulate_bm, simulate_sphere_walk, simulate_zn)


class TestPrefixMatrices(unittest.TestCase):
    """Tests for prefix matrix construction."""

    def test_bm_prefix_entries(self):
        """Test the entries for the grid (1, 2, 4)."""
        F = conelab.build_prefix_matrix_bm(grid_geometric(1.0, 2.0, 3)).entries
        self.assertAlmostEqual(F[1, 0], 1.0)
        self.assertAlmostEqual(F[2, 0], 1.0 / math.sqrt(2.0))
        self.assertAlmostEqual(F[2, 1], 1.0 / math.sqrt(2.0))
        np.testing.assert_array_equal(np.diag(F), np.ones(3))
        self.assertEqual(F[0, 1], 0.0)

    def test_bm_prefix_reproduces_positions(self):
        """Test F applied to scaled increments against BM(t_i) / delta_i."""
        grid = grid_geometric(0.5, 3.0, 15)
        path = simulate_bm(grid, 4, RngStream(2))
        F = conelab.build_prefix_matrix_bm(grid)
        target = path.points / np.sqrt(grid.increments)[:, None]
        np.testing.assert_allclose(F.apply(scaled_increments(path)), target, rtol=1e-12, atol=1e-12)

    def test_hull_membership_transfers(self):
        """Test that positions and prefix rows give the same hull verdict."""
        grid = grid_geometric(1.0, 4.0, 12)
        F = conelab.build_prefix_matrix_bm(grid)
        rng = RngStream(3)
        for t in range(40):
            path = simulate_bm(grid, 2, rng.substream(t))
            rows = F.apply(scaled_increments(path))
            self.assertEqual(numkit.contains_origin(path.points).inside,
                             numkit.contains_origin(rows).inside)

    def test_zn_prefix_reproduces_positions(self):
        """Test the lattice prefix identity on checkpoints."""
        marks = grid_zn_checkpoints(1, 0.5, 4)
        path = simulate_zn(int(marks.times[-1]), marks, 3, RngStream(4))
        F = conelab.build_prefix_matrix_zn(marks)
        target = path.points * np.sqrt(3 / marks.increments)[:, None]
        np.testing.assert_allclose(F.apply(scaled_increments(path)), target, rtol=1e-10, atol=1e-10)

    def test_zn_prefix_deviation(self):
        """Test ||F - I|| against (eta/2)/(1 - eta/2)."""
        for eta in (0.3, 0.5, 0.9):
            deviation, bound = conelab.zn_prefix_deviation(eta, 6)
            self.assertLessEqual(deviation, bound)
            self.assertLessEqual(bound, eta)

    def test_ftilde_first_column_and_norm(self):
        """Test the idealized sphere matrix."""
        theta = math.pi / 3
        F = conelab.build_ftilde_sphere(theta, 50, 10).entries
        np.testing.assert_allclose(F[:, 0], math.cos(theta) ** np.arange(50) / math.sqrt(10))
        self.assertAlmostEqual(F[3, 1], math.sin(theta) * math.cos(theta) ** 2 / math.sqrt(10))
        for theta in (0.3, math.pi / 4, 1.2):
            for N, n in ((5, 2), (40, 10)):
                low, high = conelab.ftilde_norm_bounds(theta, n)
                norm = numkit.operator_norm(conelab.build_ftilde_sphere(theta, N, n).entries)
                self.assertTrue(low - 1e-12 <= norm <= high + 1e-12)

    def test_ftilde_condition_bound(self):
        """Test cond(F~) against its closed form at theta = pi/3."""
        bound = conelab.sphere_condition_bound(math.pi / 3)
        self.assertAlmostEqual(bound, 3.4641, places=4)
        for N in (2, 50, 100):
            cond = numkit.condition_number(conelab.build_ftilde_sphere(math.pi / 3, N, 10).entries)
            self.assertLessEqual(cond, 3.465)

    def test_exact_sphere_prefix(self):
        """Test that the exact random matrix reproduces the sphere walk."""
        theta = math.pi / 4
        path = simulate_sphere_walk(theta, 40, 400, RngStream(5), record_coefficients=True)
        alphas, betas, gaussians = path.coefficients
        F = conelab.build_prefix_matrix_sphere(alphas, betas)
        np.testing.assert_allclose(F.apply(gaussians), path.points, atol=1e-9)
        ideal = conelab.build_ftilde_sphere(theta, 40, 400)
        self.assertLess(conelab.sphere_prefix_deviation(F, ideal), 1.0)

    def test_prefix_matrix_validation(self):
        """Test that upper-triangular entries are rejected."""
        with self.assertRaises(ValueError):
            conelab.PrefixMatrix(np.array([[1.0, 1.0], [0.0, 1.0]]))
        with self.assertRaises(ValueError):
            conelab.PrefixMatrix(np.array([[0.0, 0.0], [1.0, 1.0]]), conelab.BM_PREFIX)

    def test_bm_prefix_constants(self):
        """Test c_K and the condition bound at K = 4."""
        c_K, gamma = conelab.bm_prefix_constants(4.0)
        self.assertAlmostEqual(c_K, 1.0 + 2.0 / math.sqrt(3.0))
        self.assertAlmostEqual(1.0 / gamma, c_K * (1.0 + 1.0 / math.sqrt(3.0)))


class TestEscapeEvent(unittest.TestCase):
    """Tests for the escape event."""

    def test_cross_polytope_does_not_escape(self):
        """Test rows +-e_i."""
        escaped, verdict = conelab.escape_event(np.vstack([np.eye(3), -np.eye(3)]))
        self.assertFalse(escaped)
        self.assertTrue(verdict.inside)

    def test_simplex_escapes(self):
        """Test rows e_i with the all-ones certificate."""
        escaped, verdict = conelab.escape_event(np.eye(4))
        self.assertTrue(escaped)
        np.testing.assert_allclose(verdict.direction, np.full(4, 0.5), atol=1e-9)

    def test_random_search_is_one_sided(self):
        """Test that a witness found by random search implies escape."""
        rng = RngStream(6)
        found = 0
        for t in range(20):
            rows = rng.substream(t).normal((40, 5))
            escaped, verdict = conelab.escape_event(rows)
            if conelab.random_witness_search(rows, 100000, rng.substream(1000 + t)):
                found += 1
                self.assertTrue(escaped)
            if verdict.outside:
                self.assertTrue(np.all(rows @ verdict.direction >= 0.0))


class TestPropertyP(unittest.TestCase):
    """Tests for the small-ball property estimate."""

    def test_gaussian_rows(self):
        """Test that Gaussian rows give Phi(-1) in every direction."""
        estimate = conelab.estimate_property_p(conelab.gaussian_sampler(3), 1.0, 3, 20, 20000, RngStream(7))
        sigma = math.sqrt(0.1587 * 0.8413 / 20000)
        self.assertLess(abs(estimate.delta_hat - 0.1587), 6.0 * sigma)
        self.assertAlmostEqual(float(np.linalg.norm(estimate.worst_direction)), 1.0)

    def test_constant_row(self):
        """Test that X = e_1 has no negative mass along e_1."""
        def sampler(count, rng):
            rows = np.zeros((count, 2))
            rows[:, 0] = 1.0
            return rows
        estimate = conelab.estimate_property_p(sampler, 0.5, 2, 5, 100, RngStream(8))
        self.assertEqual(estimate.delta_hat, 0.0)
        self.assertEqual(estimate.to_dict()["trials"], 100)

    def test_lattice_rows_bounded_below(self):
        """Test that normalized lattice increments have the property for tau = 1/2."""
        n = 4
        estimate = conelab.estimate_property_p(conelab.zn_increment_sampler(n, n ** 4), 0.5, n, 20,
                                               5000, RngStream(9))
        self.assertGreater(estimate.delta_hat, 0.1)

    def test_invalid_tau(self):
        """Test tau validation."""
        with self.assertRaises(ValueError):
            conelab.estimate_property_p(conelab.gaussian_sampler(2), 0.0, 2, 1, 1, RngStream(0))


class TestLatticeMoments(unittest.TestCase):
    """Tests for lattice third moments."""

    def test_moment_bound(self):
        """Test the third moment bound at n = 4, m = 256."""
        self.assertLessEqual(conelab.zn_moment_check(4, 256, 2000, RngStream(10)), 100.0)

    def test_exact_small_cases(self):
        """Test exact enumeration against hand values."""
        self.assertAlmostEqual(conelab.zn_third_moment_exact(1, 1, [1.0]), 1.0)
        self.assertAlmostEqual(conelab.zn_third_moment_exact(1, 2, [1.0]), math.sqrt(2.0))

    def test_monte_carlo_matches_enumeration(self):
        """Test the sampler against exact enumeration at n = 2, m = 16."""
        exact = conelab.zn_third_moment_exact(2, 16, [1.0, 0.0])
        X = conelab.zn_increment_sampler(2, 16)(20000, RngStream(11))
        values = np.abs(X[:, 0]) ** 3
        self.assertLess(abs(values.mean() - exact), 5.0 * values.std() / math.sqrt(20000))

    def test_requires_enough_steps(self):
        """Test the m >= n**4 precondition."""
        with self.assertRaises(ValueError):
            conelab.zn_moment_check(3, 10, 10, RngStream(0))


class TestEscapeBound(unittest.TestCase):
    """Tests for the subspace escape bound."""

    def test_formula(self):
        """Test direct evaluation at w = 0."""
        expected = 1.0 - 3.5 * math.exp(-((324 / math.sqrt(325)) ** 2) / 18.0)
        self.assertAlmostEqual(conelab.gordon_escape_bound(334, 10, 0.0), expected)

    def test_monotone_and_clamped(self):
        """Test monotonicity in w and clamping near the vacuous limit."""
        values = [conelab.gordon_escape_bound(60, 10, w) for w in np.linspace(0.0, 7.0, 8)]
        self.assertTrue(all(a >= b for a, b in zip(values, values[1:])))
        self.assertEqual(conelab.gordon_escape_bound(60, 10, math.sqrt(50) - 1e-9), 0.0)

    def test_negative_gap_is_vacuous(self):
        """Test that w between the gap and sqrt(N - n) gives zero."""
        self.assertEqual(conelab.gordon_escape_bound(4, 2, 1.3), 0.0)

    def test_invalid_regime(self):
        """Test that w >= sqrt(N - n) raises InvalidRegime."""
        with self.assertRaises(InvalidRegime):
            conelab.gordon_escape_bound(20, 10, math.sqrt(10))


if __name__ == "__main__":
    unittest.main()
