"""
Tests for library/simplex_util.py

Tests the KL projection onto the epsilon-simplex, geometric means and entropy.
"""

import math

import numpy as np
import pytest

from library.simplex_util import (
    EpsilonRangeError,
    SimplexError,
    additive_shift_renormalize,
    average_entropy,
    check_epsilon,
    kl_divergence,
    project_kl_iterative,
    project_kl_sorted,
    project_rows,
    vertex,
    vertex_deviation,
    weighted_geometric_mean,
)


def _feasible_candidates(K: int, epsilon: float, count: int, rng) -> np.ndarray:
    return epsilon + (1.0 - K * epsilon) * rng.dirichlet(np.ones(K), size=count)


class TestCheckEpsilon:
    """Tests for check_epsilon."""

    def test_accepts_zero(self):
        """Test that epsilon = 0 is allowed."""
        check_epsilon(0.0, 3)

    def test_rejects_one_over_k(self):
        """Test that epsilon = 1/K is outside the range."""
        with pytest.raises(EpsilonRangeError):
            check_epsilon(1.0 / 3.0, 3)

    def test_rejects_negative(self):
        """Test that a negative epsilon is rejected."""
        with pytest.raises(EpsilonRangeError):
            check_epsilon(-1e-12, 2)

    def test_epsilon_error_is_simplex_error(self):
        """Test that EpsilonRangeError is a SimplexError and a ValueError."""
        assert issubclass(EpsilonRangeError, SimplexError)
        assert issubclass(EpsilonRangeError, ValueError)


class TestProjectKlSorted:
    """Tests for the closed-form projection."""

    def test_interior_point_is_normalized(self):
        """Test that a vector far from the boundary is only normalized."""
        out = project_kl_sorted([1.0, 2.0, 7.0], 1e-3)
        np.testing.assert_allclose(out.values, [0.1, 0.2, 0.7], rtol=0, atol=1e-15)

    def test_small_component_is_pinned(self):
        """Test that a component below epsilon is pinned and the rest rescaled."""
        out = project_kl_sorted([1e-6, 0.5, 0.5], 0.01)
        np.testing.assert_allclose(out.values, [0.01, 0.495, 0.495], rtol=0, atol=1e-15)

    def test_epsilon_zero_normalizes(self):
        """Test that epsilon = 0 reduces to normalization."""
        out = project_kl_sorted([2.0, 2.0], 0.0)
        np.testing.assert_array_equal(out.values, [0.5, 0.5])

    def test_result_lies_in_simplex(self):
        """Test that the result sums to one with every component >= epsilon."""
        out = project_kl_sorted([1e-9, 3.0, 1e-12, 5.0], 0.05)
        assert out.values.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(out.values >= 0.05 - 1e-15)

    def test_rejects_nonpositive_input(self):
        """Test that zero components are rejected."""
        with pytest.raises(SimplexError):
            project_kl_sorted([0.0, 1.0], 0.1)

    def test_rejects_large_epsilon(self):
        """Test that epsilon >= 1/K raises EpsilonRangeError."""
        with pytest.raises(EpsilonRangeError):
            project_kl_sorted([1.0, 1.0], 0.5)


class TestProjectRows:
    """Tests for the row-wise pinning loop."""

    def test_matches_sorted_projection(self):
        """Test that each row agrees with the closed form."""
        V = np.array([[0.9, 0.099, 0.001], [0.2, 0.3, 0.5], [1e-20, 1e-20, 1.0 - 2e-20]])
        out = project_rows(V, 0.01)
        for row, v in zip(out, V):
            np.testing.assert_allclose(row, project_kl_sorted(v, 0.01).values, atol=1e-14)

    def test_does_not_modify_input(self):
        """Test that the input matrix is left untouched."""
        V = np.array([[0.999, 0.001]])
        project_rows(V, 0.01)
        assert V[0, 1] == 0.001

    def test_rejects_one_dimensional_input(self):
        """Test that a vector instead of a matrix is rejected."""
        with pytest.raises(SimplexError):
            project_rows(np.array([0.5, 0.5]), 0.1)


@pytest.mark.acceptance
class TestProjectionOracle:
    """Sorted and iterative projections agree and minimize KL over feasible points."""

    def test_random_projections(self, rng):
        """Test 1000 random (y, epsilon) pairs against each other and random candidates."""
        for _ in range(1000):
            K = int(rng.integers(2, 7))
            epsilon = float(rng.uniform(0.0, 0.9 / K))
            y = rng.random(K) ** 3 + 1e-9
            y /= y.sum()
            sorted_x = project_kl_sorted(y, epsilon).values
            iterative_x = project_kl_iterative(y, epsilon).values
            np.testing.assert_allclose(sorted_x, iterative_x, rtol=0, atol=1e-12)

            best = kl_divergence(sorted_x, y)
            candidates = _feasible_candidates(K, epsilon, 100, rng)
            for x in candidates:
                assert best <= kl_divergence(x, y) + 1e-10

    @staticmethod
    def _grid_minimizer(y: np.ndarray, epsilon: float, steps: int) -> np.ndarray:
        a, b = np.meshgrid(np.arange(steps + 1), np.arange(steps + 1), indexing="ij")
        keep = a + b <= steps
        a, b = a[keep], b[keep]
        grid = np.stack([a, b, steps - a - b], axis=1) / steps
        grid = epsilon + (1.0 - 3 * epsilon) * grid
        kl = np.sum(grid * (np.log(grid) - np.log(y)), axis=1)
        return grid[np.argmin(kl)]

    def test_three_label_grid_minimizer(self, rng):
        """Test K = 3 interior projections against a brute-force 200-step grid."""
        steps = 200
        for _ in range(10):
            epsilon = float(rng.uniform(0.01, 0.19))
            y = rng.uniform(0.5, 1.0, size=3)
            y /= y.sum()
            x = project_kl_sorted(y, epsilon).values
            best = self._grid_minimizer(y, epsilon, steps)
            cell = (1.0 - 3 * epsilon) / steps
            assert np.abs(best - x).max() <= 2 * cell + 1e-12
            assert kl_divergence(x, y) <= kl_divergence(best, y) + 1e-12

    def test_three_label_grid_minimizer_pinned(self):
        """Test a K = 3 projection with a pinned component against the grid."""
        epsilon, steps = 0.1, 200
        y = np.array([0.01, 0.5, 0.49])
        x = project_kl_sorted(y, epsilon).values
        assert x[0] == epsilon
        best = self._grid_minimizer(y, epsilon, steps)
        cell = (1.0 - 3 * epsilon) / steps
        assert np.abs(best - x).max() <= 2 * cell + 1e-12


class TestGeometricMean:
    """Tests for weighted_geometric_mean."""

    def test_equal_weights(self):
        """Test the unweighted two-point mean."""
        out = weighted_geometric_mean([[1.0, 4.0], [4.0, 1.0]], [0.5, 0.5])
        np.testing.assert_allclose(out, [2.0, 2.0])

    def test_rejects_weights_not_summing_to_one(self):
        """Test that weights must sum to one."""
        with pytest.raises(SimplexError):
            weighted_geometric_mean([[1.0, 1.0], [2.0, 2.0]], [0.6, 0.6])

    def test_log_domain_matches_direct_product(self, rng):
        """Test the logarithmic evaluation against the plain weighted product."""
        for _ in range(200):
            m, K = int(rng.integers(1, 6)), int(rng.integers(2, 5))
            points = 10.0 ** rng.uniform(-3.0, 3.0, size=(m, K))
            gamma = rng.dirichlet(np.ones(m))
            direct = np.prod(points ** gamma[:, None], axis=0)
            np.testing.assert_allclose(weighted_geometric_mean(points, gamma), direct, rtol=1e-12)

    def test_normalized_mean_is_stationary(self, rng):
        """Test that the normalized mean zeroes the gradient of sum_j gamma_j KL(x, y_j)."""
        for _ in range(200):
            m, K = int(rng.integers(2, 6)), int(rng.integers(2, 5))
            points = rng.dirichlet(np.ones(K), size=m)
            gamma = rng.dirichlet(np.ones(m))
            g = weighted_geometric_mean(points, gamma)
            np.testing.assert_allclose(gamma @ np.log(g / points), 0.0, atol=1e-10)

            x = g / g.sum()
            gradient = np.log(x) + 1.0 - gamma @ np.log(points)
            np.testing.assert_allclose(gradient - gradient.mean(), 0.0, atol=1e-10)
            best = sum(w * kl_divergence(x, y) for w, y in zip(gamma, points))
            for c in _feasible_candidates(K, 0.0, 50, rng):
                assert best <= sum(w * kl_divergence(c, y) for w, y in zip(gamma, points)) + 1e-10


class TestAdditiveShift:
    """Tests for additive_shift_renormalize."""

    def test_minimum_bound(self):
        """Test that every component is at least epsilon / (1 + K epsilon)."""
        epsilon = 0.05
        out = additive_shift_renormalize([0.0, 0.3, 0.7], epsilon)
        assert out.values.sum() == pytest.approx(1.0)
        assert out.values.min() >= epsilon / (1 + 3 * epsilon) - 1e-15

    def test_order_preserved(self):
        """Test that the shift keeps the ordering of components."""
        out = additive_shift_renormalize([0.2, 0.5, 0.3], 0.01)
        assert list(np.argsort(out.values)) == [0, 2, 1]


class TestEntropyAndVertices:
    """Tests for average_entropy, vertex and vertex_deviation."""

    def test_entropy_of_uniform_rows(self):
        """Test that uniform rows have entropy log K."""
        W = np.full((4, 3), 1.0 / 3.0)
        assert average_entropy(W) == pytest.approx(np.log(3.0))

    def test_entropy_of_exact_vertex(self):
        """Test that 0 log 0 counts as zero."""
        assert average_entropy(np.array([[1.0, 0.0]])) == 0.0

    def test_entropy_matches_scalar_loop(self, rng):
        """Test average_entropy against a plain double loop."""
        W = rng.dirichlet(np.ones(4), size=30)
        W[::7, 1] = 0.0
        expected = -sum(w * math.log(w) for row in W for w in row if w > 0.0) / len(W)
        assert average_entropy(W) == pytest.approx(expected, abs=1e-13)

    def test_vertex(self):
        """Test vertex layout."""
        np.testing.assert_allclose(vertex(1, 3, 0.1), [0.1, 0.8, 0.1])

    def test_vertex_deviation_zero_at_vertex(self):
        """Test that vertices have zero deviation."""
        W = np.array([vertex(0, 3, 0.01), vertex(2, 3, 0.01)])
        np.testing.assert_allclose(vertex_deviation(W, 0.01), [0.0, 0.0], atol=1e-16)

    def test_vertex_deviation_interior(self):
        """Test deviation of the barycenter."""
        W = np.array([[0.5, 0.25, 0.25]])
        assert vertex_deviation(W, 0.0)[0] == pytest.approx(0.5)


class TestKlDivergence:
    """Tests for kl_divergence."""

    def test_zero_for_equal(self):
        """Test that KL(x, x) = 0."""
        assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == pytest.approx(0.0, abs=1e-16)

    def test_vertex_against_uniform(self):
        """Test that KL((1, 0), (1/2, 1/2)) = log 2."""
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_matches_scalar_loop(self, rng):
        """Test KL on random points of the simplex against a plain loop."""
        for _ in range(200):
            x, y = rng.dirichlet(np.ones(3), size=2)
            x[int(rng.integers(3))] = 0.0
            expected = sum(a * math.log(a / b) for a, b in zip(x, y) if a > 0.0)
            assert kl_divergence(x, y) == pytest.approx(expected, abs=1e-13)

    def test_shape_mismatch(self):
        """Test that mismatched shapes raise."""
        with pytest.raises(SimplexError):
            kl_divergence([0.5, 0.5], [1.0 / 3.0] * 3)
