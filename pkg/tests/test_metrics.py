"""Tests for clustering metrics."""

import numpy as np
import pytest

from adaclust.metrics import contingency_table, inertia, nmi


class TestNmi:
    def test_identical_labelings(self):
        assert nmi([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == pytest.approx(1.0)

    def test_single_predicted_cluster(self):
        assert nmi([0, 0, 1, 1], [0, 0, 0, 0]) == pytest.approx(0.0)

    def test_hand_computed_example(self):
        # true=(0,0,1,1), pred=(0,1,1,1): I = 0.215762, H = (ln 2, 0.562335)
        # hand-computed from the contingency entropies
        assert nmi([0, 0, 1, 1], [0, 1, 1, 1]) == pytest.approx(0.3455920299442113, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        a = rng.integers(0, 3, 100)
        b = rng.integers(0, 4, 100)
        assert nmi(a, b) == pytest.approx(nmi(b, a), abs=1e-12)

    def test_label_permutation_invariance(self):
        rng = np.random.default_rng(1)
        a = rng.integers(0, 3, 100)
        b = rng.integers(0, 3, 100)
        remap = np.array([2, 0, 1])
        assert nmi(a, b) == pytest.approx(nmi(a, remap[b]), abs=1e-12)

    def test_perfect_match_any_labeling(self):
        rng = np.random.default_rng(2)
        a = rng.integers(0, 5, 200)
        assert nmi(a, a + 7) == pytest.approx(1.0)

    def test_both_single_cluster(self):
        assert nmi([3, 3, 3], [1, 1, 1]) == pytest.approx(1.0)

    def test_range(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = rng.integers(0, 4, 60)
            b = rng.integers(0, 4, 60)
            v = nmi(a, b)
            assert 0.0 <= v <= 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            nmi([0, 1], [0, 1, 2])

    def test_string_labels_accepted(self):
        assert nmi(["a", "a", "b"], [0, 0, 1]) == pytest.approx(1.0)


class TestContingency:
    def test_counts(self):
        table = contingency_table([0, 0, 1, 1], [0, 1, 1, 1])
        np.testing.assert_array_equal(table, [[1, 1], [0, 2]])
        assert table.sum() == 4


class TestInertia:
    def test_zero_when_points_are_centroids(self):
        X = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert inertia(X, [0, 1], X) == pytest.approx(0.0)

    def test_two_points_one_centroid(self):
        X = np.array([[0.0], [2.0]])
        assert inertia(X, [0, 0], np.array([[1.0]])) == pytest.approx(2.0)

    def test_nonnegative(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(30, 2))
        c = rng.normal(size=(3, 2))
        assert inertia(X, rng.integers(0, 3, 30), c) >= 0.0
