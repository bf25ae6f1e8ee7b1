import unittest

import numpy as np

from dfo_tr.core import (
    EvaluatedPoint,
    FunctionObjective,
    InterpolationSet,
    Negated,
    Objective,
    TimedObjective,
    TrustRegionState,
    as_point,
    is_duplicate,
)
from dfo_tr.errors import DFOTRValidationError


def _point(*coords, value=0.0):
    return EvaluatedPoint.of(np.array(coords, dtype=float), value)


class TestPoints(unittest.TestCase):
    def test_as_point_validation(self):
        """Test point coercion rejects bad shapes and non-finite values."""
        np.testing.assert_array_equal(as_point([1, 2]), [1.0, 2.0])
        with self.assertRaises(DFOTRValidationError):
            as_point([])
        with self.assertRaises(DFOTRValidationError):
            as_point([1.0, np.nan])
        with self.assertRaises(DFOTRValidationError):
            as_point([1.0, 2.0], dim=3)

    def test_duplicate_tolerance(self):
        """Test the relative duplicate tolerance."""
        p = np.array([1.0, 2.0])
        self.assertTrue(is_duplicate(p, p + 1e-13))
        self.assertFalse(is_duplicate(p, p + 1e-9))

    def test_evaluated_point_rejects_non_finite(self):
        """Test evaluated points refuse NaN and infinite values."""
        with self.assertRaises(ValueError):
            EvaluatedPoint(coords=(1.0,), value=float("inf"))
        with self.assertRaises(ValueError):
            EvaluatedPoint(coords=(), value=1.0)

    def test_json_round_trip_is_exact(self):
        """Test JSON serialization keeps coordinates bit-exact."""
        point = EvaluatedPoint.of(np.array([0.1, 1 / 3, -2e-17]), 0.7000000000000001)
        restored = EvaluatedPoint.model_validate_json(point.model_dump_json())
        self.assertEqual(restored, point)

    def test_running_average(self):
        """Test the running mean over all evaluations."""
        point = _point(0.0, value=1.0)
        point = point.averaged_with(3.0)
        point = point.averaged_with(5.0)
        self.assertEqual(point.value, 3.0)
        self.assertEqual(point.eval_count, 3)

    def test_pairwise_average(self):
        """Test the halving average with a fresh value."""
        point = _point(0.0, value=1.0).averaged_with(3.0, "pairwise")
        point = point.averaged_with(5.0, "pairwise")
        self.assertEqual(point.value, 3.5)


class TestInterpolationSet(unittest.TestCase):
    """Test capacity, distinctness and pruning of the interpolation set."""

    def setUp(self):
        self.iset = InterpolationSet(2)

    def test_capacity(self):
        """Test the set holds at most (d+1)(d+2)/2 points."""
        self.assertEqual(self.iset.capacity, 6)
        self.assertEqual(InterpolationSet(6).capacity, 28)
        for i in range(6):
            self.assertTrue(self.iset.add(_point(float(i), 0.0)))
        self.assertTrue(self.iset.is_full)
        self.assertFalse(self.iset.add(_point(10.0, 0.0)))
        self.assertEqual(len(self.iset), 6)

    def test_rejects_duplicates(self):
        """Test duplicate points are not added."""
        self.assertTrue(self.iset.add(_point(1.0, 1.0)))
        self.assertFalse(self.iset.add(_point(1.0, 1.0 + 1e-14, value=5.0)))
        self.assertEqual(len(self.iset), 1)
        with self.assertRaises(DFOTRValidationError):
            InterpolationSet(2, [_point(0.0, 0.0), _point(0.0, 0.0)])

    def test_rejects_wrong_dimension(self):
        """Test points of another dimension are refused."""
        with self.assertRaises(DFOTRValidationError):
            self.iset.add(_point(1.0, 2.0, 3.0))

    def test_replace_keeps_members_distinct(self):
        """Test replace refuses a duplicate of another member."""
        self.iset.add(_point(0.0, 0.0))
        self.iset.add(_point(1.0, 0.0))
        self.assertFalse(self.iset.replace(1, _point(0.0, 0.0)))
        self.assertTrue(self.iset.replace(1, _point(2.0, 0.0)))
        np.testing.assert_array_equal(self.iset[1].point, [2.0, 0.0])

    def test_farthest_index(self):
        """Test the index of the member farthest from a center."""
        for x in (0.0, 3.0, 1.0):
            self.iset.add(_point(x, 0.0))
        self.assertEqual(self.iset.farthest_index(np.zeros(2)), 1)

    def test_discard_far_keeps_center(self):
        """Test discarding far points never drops the center."""
        for x in (0.0, 0.5, 5.0, 50.0):
            self.iset.add(_point(x, 0.0))
        dropped = self.iset.discard_far(np.zeros(2), radius=1.0, keep=3)
        self.assertEqual(dropped, 2)
        self.assertTrue(self.iset.contains(np.zeros(2)))

    def test_discard_far_keeps_nearest_when_too_few_survive(self):
        """Test the nearest points are kept when too few survive."""
        for x in (0.0, 5.0, 6.0, 50.0):
            self.iset.add(_point(x, 0.0))
        self.iset.discard_far(np.zeros(2), radius=1.0, keep=3)
        xs = sorted(p.coords[0] for p in self.iset)
        self.assertEqual(xs, [0.0, 5.0, 6.0])

    def test_copy_is_independent(self):
        """Test a copy does not share membership with the original."""
        self.iset.add(_point(0.0, 0.0))
        clone = self.iset.copy()
        clone.add(_point(1.0, 0.0))
        self.assertEqual(len(self.iset), 1)
        self.assertEqual(len(clone), 2)


class TestTrustRegionState(unittest.TestCase):
    def test_radius_must_be_positive(self):
        """Test a nonpositive radius is rejected."""
        point = _point(0.0)
        with self.assertRaises(DFOTRValidationError):
            TrustRegionState(center=point, radius=0.0, best=point)
        self.assertEqual(TrustRegionState(center=point, radius=1.0, best=point).best_value, 0.0)


class TestObjectiveAdapters(unittest.TestCase):
    def setUp(self):
        self.objective = FunctionObjective(lambda w: float(np.sum(w**2)), dim=2, name="sphere")

    def test_function_objective(self):
        """Test wrapping a plain function as an objective."""
        self.assertIsInstance(self.objective, Objective)
        self.assertFalse(self.objective.supports_subsampling)
        self.assertEqual(self.objective.evaluate(np.array([1.0, 2.0])), 5.0)
        with self.assertRaises(DFOTRValidationError):
            self.objective.evaluate(np.array([1.0]))

    def test_negated(self):
        """Test negation of full and sampled values."""
        negated = Negated(self.objective)
        self.assertEqual(negated.dim, 2)
        self.assertEqual(negated.evaluate(np.array([1.0, 2.0])), -5.0)

    def test_timed_counts_calls(self):
        """Test the timing adapter counts calls and time."""
        timed = TimedObjective(self.objective)
        timed.evaluate(np.zeros(2))
        timed.evaluate(np.ones(2))
        self.assertEqual(timed.calls, 2)
        self.assertGreaterEqual(timed.eval_seconds, 0.0)


if __name__ == "__main__":
    unittest.main()
