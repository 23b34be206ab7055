import math
import unittest

import numpy as np

from hullwalk import witness
from hullwalk.errors import CapacityExceeded, DegenerateInput, MissingGridPoint, NotOrthogonal
from hullwalk.randwalk import BM, RngStream, TimeGrid, WalkPath, simulate_bm


class TestBuildUbar(unittest.TestCase):
    """Tests for the equal inner product direction."""

    def test_single_vector(self):
        """Test that one vector gives its own direction."""
        u_bar, dist = witness.build_ubar([[3.0, 0.0, 0.0, 0.0]], [1.0])
        np.testing.assert_allclose(u_bar, [1.0, 0.0, 0.0, 0.0])
        self.assertAlmostEqual(dist, 3.0)

    def test_prescribed_inner_products(self):
        """Test <u_bar, X_i> = dist |b_i| in high dimension."""
        rng = RngStream(1)
        X = rng.normal((50, 200))
        b = rng.uniform(50) + 0.1
        b[::2] *= -1.0
        u_bar, dist = witness.build_ubar(X, b)
        self.assertAlmostEqual(float(np.linalg.norm(u_bar)), 1.0)
        np.testing.assert_allclose(X @ u_bar, dist * np.abs(b), rtol=1e-8)

    def test_zero_coefficients_dropped(self):
        """Test that rows with b_i = 0 do not constrain the direction."""
        X = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 5.0, 0.0, 0.0]])
        u_bar, _ = witness.build_ubar(X, [1.0, 0.0])
        np.testing.assert_allclose(u_bar, [1.0, 0.0, 0.0, 0.0])

    def test_zero_coefficients_counted(self):
        """Test that dropped rows are reported alongside the rows used."""
        X = np.array([[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], [0.0, 5.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 2.0, 0.0, 0.0, 0.0]])
        u_bar, dist, info = witness.build_ubar(X, [1.0, 0.0, 2.0], full_output=True)
        self.assertEqual(info, {"used": 2, "dropped": 1})
        np.testing.assert_allclose(X[[0, 2]] @ u_bar, dist * np.array([1.0, 2.0]))

    def test_degenerate_inputs(self):
        """Test dependent rows and all-zero coefficients."""
        with self.assertRaises(DegenerateInput):
            witness.build_ubar([[1.0, 2.0, 0.0, 0.0], [2.0, 4.0, 0.0, 0.0]], [1.0, 2.0])
        with self.assertRaises(DegenerateInput):
            witness.build_ubar([[1.0, 0.0]], [0.0])

    def test_too_many_vectors(self):
        """Test the 2m <= d requirement."""
        with self.assertRaises(ValueError):
            witness.build_ubar(np.eye(3, 4), [1.0, 1.0, 1.0])

    def test_initial_direction_support(self):
        """Test that the starting direction lives on J0."""
        increments = RngStream(2).normal((3, 20))
        v = witness.initial_direction(increments, 8, m=3)
        self.assertAlmostEqual(float(np.linalg.norm(v)), 1.0)
        np.testing.assert_array_equal(v[8:], np.zeros(12))
        products = increments[:, :8] @ v[:8]
        np.testing.assert_allclose(products, products[0], rtol=1e-9)
        with self.assertRaises(ValueError):
            witness.initial_direction(increments, 8, m=4)


class TestSchedule(unittest.TestCase):
    """Tests for pipeline thresholds."""

    def setUp(self):
        """Set up the default schedule."""
        self.sched = witness.Schedule()

    def test_start_values(self):
        """Test f(1, 0) and h(1, 0)."""
        r = 2.0 ** -0.25
        self.assertAlmostEqual(self.sched.f(1, 0), 0.02 * (1.0 + 2.0 ** -0.5 / (1.0 - r) ** 2))
        self.assertEqual(self.sched.h(1, 0), 0.0)

    def test_monotone_within_level(self):
        """Test that f decreases and h increases with l."""
        f_values = [self.sched.f(2, ell) for ell in range(6)]
        h_values = [self.sched.h(2, ell) for ell in range(6)]
        self.assertTrue(all(a > b for a, b in zip(f_values, f_values[1:])))
        self.assertTrue(all(a < b for a, b in zip(h_values, h_values[1:])))

    def test_levels_join(self):
        """Test that level k starts where level k-1 ends."""
        for k in (1, 2, 3):
            self.assertAlmostEqual(self.sched.f(k, 500), self.sched.f(k + 1, 0), places=12)
            self.assertAlmostEqual(self.sched.h(k, 500), self.sched.h(k + 1, 0), places=12)

    def test_limits(self):
        """Test f -> C_f and h -> C_f / 2 for the coupled schedule."""
        self.assertAlmostEqual(self.sched.f(200, 500), self.sched.f_limit(), places=6)
        self.assertAlmostEqual(self.sched.h(200, 500), self.sched.h_limit(), places=6)
        self.assertAlmostEqual(self.sched.h_limit(), self.sched.C_f / 2.0)
        self.assertEqual(witness.Schedule.coupled(0.02), self.sched)

    def test_truncated_start(self):
        """Test the stepped start against the closed form."""
        f_value, h_value = self.sched.truncated_start(3)
        self.assertAlmostEqual(f_value, self.sched.f(3, 0), places=10)
        self.assertAlmostEqual(h_value, self.sched.h(3, 0), places=10)

    def test_alpha(self):
        """Test perturbation sizes."""
        self.assertAlmostEqual(self.sched.alpha(1, 1), 1.25 ** -2)
        self.assertAlmostEqual(witness.Schedule(alpha_base=4.0).alpha(2, 1), 4.0 ** -3)

    def test_partition(self):
        """Test that J0 and the cells split the coordinates."""
        j0, cells = self.sched.partition(40)
        np.testing.assert_array_equal(j0, np.arange(18))
        self.assertEqual(sorted(cells), [(1, 1), (1, 2), (2, 1), (2, 2)])
        joined = np.concatenate([j0] + [cells[key] for key in sorted(cells)])
        np.testing.assert_array_equal(joined, np.arange(40))
        self.assertTrue(all(cell.size >= 1 for cell in cells.values()))
        with self.assertRaises(ValueError):
            self.sched.partition(4)

    def test_default_cells_hold_a_bad_block(self):
        """Test that every cell at n = 64 fits the increments of one bad block."""
        _, cells = self.sched.partition(64)
        for (k, ell), cell in cells.items():
            self.assertGreaterEqual(cell.size, 2 * 2 ** k, msg=f"cell ({k}, {ell})")

    def test_validation(self):
        """Test rejected schedules and levels."""
        with self.assertRaises(ValueError):
            witness.Schedule(C_f=0.0)
        with self.assertRaises(ValueError):
            witness.Schedule(j0_fraction=1.0)
        with self.assertRaises(ValueError):
            witness.Schedule(alpha_base=1.0)
        with self.assertRaises(ValueError):
            self.sched.f(0, 0)


class TestBlockGrid(unittest.TestCase):
    """Tests for block layout."""

    def test_anchors_and_interior(self):
        """Test anchors and the level-2 interior of block 1."""
        grid = witness.BlockGrid(3, 2)
        np.testing.assert_array_equal(grid.anchors, [0.0, 1.0, 2.0, 4.0])
        np.testing.assert_allclose(grid.interior(1), [2 ** 0.25, 2 ** 0.5, 2 ** 0.75])
        self.assertEqual(grid.interior(0).size, 0)
        np.testing.assert_allclose(grid.level_points(2, 1), [2.0, 2.0 * math.sqrt(2.0), 4.0])

    def test_construction_grid(self):
        """Test that the construction grid holds every anchor and interior point."""
        grid = witness.BlockGrid(3, 2)
        times = grid.construction_grid()
        self.assertEqual(len(times), 9)
        for t in np.concatenate([grid.anchors[1:], grid.interior(1), grid.interior(2)]):
            self.assertIsNotNone(times.index_of(t))

    def test_validation(self):
        """Test rejected layouts."""
        with self.assertRaises(ValueError):
            witness.BlockGrid(0, 1)


class TestBlockStatistic(unittest.TestCase):
    """Tests for block statistics on a hand-built path."""

    def setUp(self):
        """Set up a 1-d path on 1, sqrt(2), 2."""
        self.grid = witness.BlockGrid(2, 1)
        times = self.grid.construction_grid()
        self.path = WalkPath(BM, times, np.array([[1.0], [0.5], [3.0]]), 1)
        self.sched = witness.Schedule()

    def test_values(self):
        """Test both block values against direct evaluation."""
        stats = witness.block_statistic(np.array([1.0]), self.path, self.grid, (1, 1), self.sched)
        f_value, h_value = self.sched.f(1, 1), self.sched.h(1, 1)
        self.assertAlmostEqual(stats.values[0], max(0.0, -1.0 + f_value))
        expected = max(0.0, -2.0 / math.sqrt(2.0) + f_value, 0.5 - h_value)
        self.assertAlmostEqual(stats.values[1], expected)
        self.assertEqual(stats.bad_blocks, [1])
        self.assertEqual(stats.to_dict()["bad_blocks"], [1])

    def test_missing_point(self):
        """Test that a path without the interior point fails."""
        path = WalkPath(BM, TimeGrid([1.0, 2.0]), np.array([[1.0], [3.0]]), 1)
        with self.assertRaises(MissingGridPoint):
            witness.block_statistic(np.array([1.0]), path, self.grid, (1, 1), self.sched)


class TestPerturbation(unittest.TestCase):
    """Tests for the perturbation on a fresh cell."""

    def setUp(self):
        """Set up a 6-d path with block 1 bad at level 1."""
        self.grid = witness.BlockGrid(2, 1)
        self.path = simulate_bm(self.grid.construction_grid(), 6, RngStream(7))
        self.stats = witness.BlockStatistics(values=np.array([0.0, 0.3]), level=(1, 0))
        self.cell = np.array([2, 3, 4, 5])

    def test_positive_on_bad_increments(self):
        """Test support, norm and sign of the perturbation."""
        delta, info = witness.build_perturbation(self.stats, self.path, self.grid, self.cell, 1, full_output=True)
        self.assertEqual(info, {"used": 2, "dropped": 0})
        self.assertAlmostEqual(float(np.linalg.norm(delta)), 1.0)
        np.testing.assert_array_equal(delta[:2], [0.0, 0.0])
        rows, coefficients = witness.perturbation_system(self.stats, self.path, self.grid, self.cell, 1)
        self.assertEqual(rows.shape, (2, 4))
        np.testing.assert_allclose(coefficients, [2.0 ** -0.5, 2.0 ** -0.5])
        self.assertTrue(np.all(rows @ delta[self.cell] > 0.0))

    def test_capacity(self):
        """Test that a cell too small for the bad increments is refused."""
        with self.assertRaises(CapacityExceeded):
            witness.build_perturbation(self.stats, self.path, self.grid, self.cell[:3], 1)
        with self.assertRaises(ValueError):
            empty = witness.BlockStatistics(values=np.zeros(2), level=(1, 0))
            witness.build_perturbation(empty, self.path, self.grid, self.cell, 1)


class TestFitToCell(unittest.TestCase):
    """Tests for choosing the bad blocks a cell can hold."""

    def test_worst_block_first(self):
        """Test that the largest statistic is kept and the rest dropped."""
        stats = witness.BlockStatistics(values=np.array([0.0, 0.3, 0.5]), level=(1, 1))
        chosen, dropped = witness.fit_to_cell(stats, 4, 1)
        self.assertEqual(chosen.bad_blocks, [2])
        self.assertEqual(dropped, [1])
        self.assertEqual(chosen.level, (1, 1))
        chosen, dropped = witness.fit_to_cell(stats, 8, 1)
        self.assertEqual((chosen.bad_blocks, dropped), ([1, 2], []))

    def test_nothing_fits(self):
        """Test a cell too small for any bad block."""
        stats = witness.BlockStatistics(values=np.array([0.0, 0.3, 0.5]), level=(1, 1))
        chosen, dropped = witness.fit_to_cell(stats, 3, 1)
        self.assertEqual(chosen.bad_blocks, [])
        self.assertEqual(dropped, [1, 2])

    def test_block_zero_needs_one_increment(self):
        """Test that block 0 fits where a later block does not."""
        stats = witness.BlockStatistics(values=np.array([0.2, 0.3, 0.0]), level=(2, 1))
        chosen, dropped = witness.fit_to_cell(stats, 2, 2)
        self.assertEqual((chosen.bad_blocks, dropped), ([0], [1]))


def _rescue_path():
    """
    8-d path on 1, sqrt(2), 2 whose starting direction dips between 1 and 2.

    The level-1 increments of block 1 are e_5 and e_6 on the coordinates
    after J0, scaled by the square roots of their time steps.
    """
    grid = witness.BlockGrid(2, 1)
    s1, s2 = math.sqrt(math.sqrt(2.0) - 1.0), math.sqrt(2.0 - math.sqrt(2.0))
    points = np.array([[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                       [1.0, -0.6, 0.0, 0.0, 0.0, s1, 0.0, 0.0],
                       [1.0, 2.0, 0.0, 0.0, 0.0, s1, s2, 0.0]])
    return grid, WalkPath(BM, grid.construction_grid(), points, 8)


class TestRefinementStep(unittest.TestCase):
    """Tests for one perturbation step on a hand-built path."""

    def setUp(self):
        """Set up a path where block 1 starts bad."""
        self.grid, self.path = _rescue_path()
        self.sched = witness.Schedule(C_f=0.01, M=1, M_inner=1, j0_fraction=0.5, alpha_base=1.2)
        self.j0, self.cells = self.sched.partition(8)

    def test_start_direction(self):
        """Test the starting direction and its bad block."""
        v = witness.initial_direction(witness.anchor_increments(self.path, self.grid), self.j0.size)
        np.testing.assert_allclose(v[:2], [2.0 / math.sqrt(5.0), 1.0 / math.sqrt(5.0)])
        stats = witness.block_statistic(v, self.path, self.grid, (1, 1), self.sched)
        self.assertEqual(stats.bad_blocks, [1])
        self.assertAlmostEqual(stats.values[1], 0.6 / math.sqrt(5.0) - self.sched.h(1, 1))

    def test_step_lowers_bad_block(self):
        """Test that one perturbation step lowers the statistic of the bad block."""
        v = witness.initial_direction(witness.anchor_increments(self.path, self.grid), self.j0.size)
        before = witness.block_statistic(v, self.path, self.grid, (1, 1), self.sched)
        delta = witness.build_perturbation(before, self.path, self.grid, self.cells[(1, 1)], 1)
        np.testing.assert_allclose(delta[5:7], [2.0 ** -0.5, 2.0 ** -0.5])
        refined = witness.refine_direction(v, delta, 0.5)
        after = witness.block_statistic(refined, self.path, self.grid, (1, 1), self.sched)
        self.assertLess(after.values[1], before.values[1])
        self.assertEqual(after.values[0], 0.0)


class TestPipelineOutcomes(unittest.TestCase):
    """Tests for rescued, unrescued and skipped runs on a hand-built path."""

    def setUp(self):
        """Set up the path of TestRefinementStep."""
        self.grid, self.path = _rescue_path()

    def run_pipeline(self, **kwargs):
        sched = witness.Schedule(C_f=0.01, M=1, M_inner=1, **kwargs)
        return witness.run_witness_pipeline(8, 2, sched, RngStream(0), path=self.path)

    def test_rescued(self):
        """Test that a large enough step turns a bad start into a success."""
        result = self.run_pipeline(j0_fraction=0.5, alpha_base=1.2)
        self.assertTrue(result.start_bad)
        self.assertTrue(result.success)
        self.assertTrue(result.rescued)
        self.assertEqual(result.trace[0].action, "perturbed")
        self.assertEqual(result.trace[0].stats.bad_blocks, [1])
        self.assertEqual(result.trace[0].rows, 2)
        self.assertEqual(result.trace[0].zero_rows, 0)
        self.assertEqual(result.trace[0].dropped_blocks, [])
        self.assertGreater(result.min_positivity, 0.0)
        self.assertIs(result.to_dict()["rescued"], True)

    def test_small_step_not_rescued(self):
        """Test that a tiny step leaves the bad block in place."""
        result = self.run_pipeline(j0_fraction=0.5, alpha_base=16.0)
        self.assertTrue(result.start_bad)
        self.assertFalse(result.success)
        self.assertFalse(result.rescued)

    def test_skipped_when_cell_too_small(self):
        """Test that a cell of three coordinates skips the bad block and reports it."""
        result = self.run_pipeline(j0_fraction=0.625, alpha_base=1.2)
        record = result.trace[0]
        self.assertEqual(record.action, "skipped")
        self.assertEqual(record.dropped_blocks, [1])
        self.assertEqual(record.rows, 0)
        self.assertEqual(record.to_dict()["dropped_blocks"], [1])
        self.assertFalse(result.success)


class TestSmallPieces(unittest.TestCase):
    """Tests for direction refinement, bridges and series."""

    def test_refine_direction(self):
        """Test the normalized combination of orthogonal vectors."""
        v = witness.refine_direction([1.0, 0.0], [0.0, 1.0], 1.0)
        np.testing.assert_allclose(v, [1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)])
        np.testing.assert_array_equal(witness.refine_direction([1.0, 0.0], [0.0, 1.0], 0.0), [1.0, 0.0])
        with self.assertRaises(NotOrthogonal):
            witness.refine_direction([1.0, 0.0], [1.0, 0.0], 0.5)

    def test_bridge_split(self):
        """Test interpolation and variance at the midpoint."""
        w, variance = witness.bridge_split(0.0, 1.0, 0.5, np.array([0.0, 0.0]), np.array([2.0, 4.0]))
        np.testing.assert_allclose(w, [1.0, 2.0])
        self.assertAlmostEqual(variance, 0.25)
        _, at_end = witness.bridge_split(1.0, 3.0, 3.0, 0.0, 1.0)
        self.assertEqual(at_end, 0.0)
        with self.assertRaises(ValueError):
            witness.bridge_split(1.0, 2.0, 3.0, 0.0, 0.0)

    def test_geometric_excess(self):
        """Test the series against its closed form and bound."""
        for q in (0.1, 0.5, 0.9):
            eps = (1.0 - q) / 8.0
            series = witness.geometric_excess_series(q, eps)
            closed = witness.geometric_excess_closed_form(q, eps)
            self.assertAlmostEqual(series, closed, places=9)
            self.assertLessEqual(closed, witness.geometric_excess_bound(q, eps))
        with self.assertRaises(ValueError):
            witness.geometric_excess_closed_form(0.9, 0.1)

    def test_truncated_gaussian_norm(self):
        """Test the truncation event for q = 10**4, r = 3."""
        rng = RngStream(3)
        self.assertTrue(all(witness.truncated_gaussian_norm_event(10 ** 4, 3.0, rng.substream(t))
                            for t in range(20)))

    def test_verify_positivity(self):
        """Test the normalized minimum and its time."""
        path = WalkPath(BM, TimeGrid([1.0, 4.0]), np.array([[2.0, 0.0], [1.0, 1.0]]), 2)
        value, at = witness.verify_positivity([1.0, 0.0], path)
        self.assertAlmostEqual(value, 0.5)
        self.assertEqual(at, 4.0)


class TestPipeline(unittest.TestCase):
    """Tests for the full construction."""

    def test_single_block_keeps_start(self):
        """Test that one block returns the starting direction."""
        sched = witness.Schedule()
        grid = witness.BlockGrid(1, sched.M)
        path = simulate_bm(grid.construction_grid(), 40, RngStream(4))
        result = witness.run_witness_pipeline(40, 1, sched, RngStream(0), path=path)
        start = witness.initial_direction(witness.anchor_increments(path, grid), sched.partition(40)[0].size)
        np.testing.assert_allclose(result.direction, start)
        self.assertTrue(result.success)
        self.assertGreater(result.min_positivity, 0.0)

    def test_runs_are_consistent(self):
        """Test the trace layout and that success implies positivity."""
        sched = witness.Schedule()
        rng = RngStream(5)
        for t in range(10):
            result = witness.run_witness_pipeline(60, 3, sched, rng.substream(t))
            actions = {record.action for record in result.trace}
            self.assertTrue(actions <= {"none", "perturbed", "partial", "skipped", "rejected", "failed"})
            if "failed" in actions:
                self.assertFalse(result.success)
                continue
            self.assertEqual(len(result.trace), sched.M * sched.M_inner + 1)
            self.assertAlmostEqual(float(np.linalg.norm(result.direction)), 1.0)
            if result.success:
                self.assertGreater(result.min_positivity, 0.0)
            if not result.start_bad:
                self.assertTrue(result.success)
            for record in result.trace:
                self.assertEqual(record.rows > 0, record.action in ("perturbed", "partial", "rejected"))
            self.assertIn("trace", result.to_dict())

    def test_shared_path_matches_sampled_path(self):
        """Test that passing the sampled path reproduces the run."""
        sched = witness.Schedule()
        grid = witness.BlockGrid(3, sched.M)
        path = simulate_bm(grid.construction_grid(), 60, RngStream(6))
        sampled = witness.run_witness_pipeline(60, 3, sched, RngStream(6))
        shared = witness.run_witness_pipeline(60, 3, sched, RngStream(99), path=path)
        np.testing.assert_array_equal(sampled.direction, shared.direction)
        self.assertEqual(sampled.success, shared.success)

    def test_path_dimension_mismatch(self):
        """Test that a path of the wrong dimension is rejected."""
        sched = witness.Schedule()
        path = simulate_bm(witness.BlockGrid(2, sched.M).construction_grid(), 10, RngStream(7))
        with self.assertRaises(ValueError):
            witness.run_witness_pipeline(40, 2, sched, RngStream(7), path=path)


if __name__ == "__main__":
    unittest.main()
