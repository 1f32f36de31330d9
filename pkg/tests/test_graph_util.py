"""
Tests for library/graph_util.py

Tests grid geometry, local and nonlocal weight graphs, symmetrization and the spectral
structure of symmetric stochastic matrices.
"""

import math

import numpy as np
import pytest
from scipy import sparse

from library.graph_util import (
    GraphError,
    GridGeometry,
    NonlocalParams,
    NonSymmetricError,
    WeightGraph,
    build_local_gaussian,
    build_local_uniform,
    build_nonlocal,
    dump_graph,
    eigendecompose,
    group_eigenvalues,
    load_graph,
    mirror_index,
    patch_distance,
    power_limit_check,
    search_candidates,
    symmetrize,
)
from library.labeling import FeatureImage
from library.metric_util import MetricSpace
from library.synthetic import random_symmetric_stochastic, texture_checker


class TestGridGeometry:
    """Tests for GridGeometry and mirror_index."""

    def test_index_and_coords(self):
        """Test row-major linear indexing."""
        geom = GridGeometry(3, 4)
        assert geom.n == 12
        assert int(geom.index(2, 1)) == 9
        assert tuple(int(v) for v in geom.coords(9)) == (2, 1)

    def test_rejects_empty_grid(self):
        """Test that a zero-sized grid is rejected."""
        with pytest.raises(GraphError):
            GridGeometry(0, 5)

    def test_mirror_repeats_edge(self):
        """Test the edge-repeating reflection."""
        np.testing.assert_array_equal(mirror_index([-2, -1, 0, 4, 5, 6], 5), [1, 0, 0, 4, 4, 3])

    def test_mirror_is_periodic(self):
        """Test that reflection folds indices far outside the grid."""
        np.testing.assert_array_equal(mirror_index([-1, 1, 2, -2], 1), [0, 0, 0, 0])


class TestWeightGraph:
    """Tests for WeightGraph validation."""

    def test_rejects_bad_row_sum(self):
        """Test that rows must sum to one."""
        with pytest.raises(GraphError):
            WeightGraph.from_dense([[0.5, 0.4], [0.5, 0.5]])

    def test_rejects_negative_weight(self):
        """Test that weights must be non-negative."""
        with pytest.raises(GraphError):
            WeightGraph.from_dense([[1.5, -0.5], [0.5, 0.5]])

    def test_rejects_false_symmetric_flag(self):
        """Test that a nonsymmetric matrix cannot be flagged symmetric."""
        with pytest.raises(GraphError):
            WeightGraph.from_dense([[0.5, 0.5], [0.25, 0.75]], symmetric=True)

    def test_measures_symmetry(self):
        """Test that the symmetric flag is measured when not given."""
        assert WeightGraph.from_dense([[0.5, 0.5], [0.5, 0.5]]).symmetric
        assert not WeightGraph.from_dense([[0.5, 0.5], [0.25, 0.75]]).symmetric

    def test_rows_and_structure(self):
        """Test row access, diagonal and irreducibility checks."""
        graph = WeightGraph.from_dense([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
        assert graph.rows(0) == [(0, 0.5), (1, 0.5)]
        assert graph.has_positive_diagonal()
        assert not graph.is_irreducible()


class TestLocalWeights:
    """Tests for uniform and Gaussian window graphs."""

    def test_signal_window_weights(self):
        """Test the mirrored 3x3 window on a 1 x 10 grid."""
        graph = build_local_uniform(GridGeometry(1, 10), 3)
        P = graph.toarray()
        assert P[0, 0] == pytest.approx(2.0 / 3.0)
        assert P[0, 1] == pytest.approx(1.0 / 3.0)
        assert P[5, 4] == pytest.approx(1.0 / 3.0)
        assert P[5, 5] == pytest.approx(1.0 / 3.0)
        assert P[5, 6] == pytest.approx(1.0 / 3.0)
        assert P[9, 9] == pytest.approx(2.0 / 3.0)
        assert graph.symmetric

    def test_uniform_interior_row(self):
        """Test that an interior pixel averages its 5x5 window uniformly."""
        geom = GridGeometry(9, 9)
        graph = build_local_uniform(geom, 5)
        row = dict(graph.rows(int(geom.index(4, 4))))
        assert len(row) == 25
        assert all(w == pytest.approx(1.0 / 25.0) for w in row.values())

    def test_uniform_is_symmetric_and_stochastic(self):
        """Test symmetry and row sums on a small grid."""
        graph = build_local_uniform(GridGeometry(4, 6), 3)
        P = graph.toarray()
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(P, P.T, atol=1e-15)

    def test_rejects_even_window(self):
        """Test that even window sizes are rejected."""
        with pytest.raises(GraphError):
            build_local_uniform(GridGeometry(4, 4), 4)

    def test_gaussian_prefers_center(self):
        """Test that Gaussian weights decrease away from the center."""
        geom = GridGeometry(7, 7)
        graph = build_local_gaussian(geom, 5, 0.8)
        row = dict(graph.rows(int(geom.index(3, 3))))
        center = row[int(geom.index(3, 3))]
        side = row[int(geom.index(3, 4))]
        corner = row[int(geom.index(4, 4))]
        assert center > side > corner
        assert graph.symmetric

    def test_gaussian_truncation(self):
        """Test that offsets beyond three sigma get no weight."""
        geom = GridGeometry(9, 9)
        graph = build_local_gaussian(geom, 5, 0.5)
        row = dict(graph.rows(int(geom.index(4, 4))))
        assert int(geom.index(4, 6)) not in row
        assert int(geom.index(4, 5)) in row

    def test_gaussian_truncation_is_square(self):
        """Test that a diagonal neighbor within three sigma per axis keeps its weight."""
        geom = GridGeometry(9, 9)
        graph = build_local_gaussian(geom, 5, 0.4)
        row = dict(graph.rows(int(geom.index(4, 4))))
        assert np.hypot(1.0, 1.0) > 3.0 * 0.4
        assert row[int(geom.index(5, 5))] > 0.0
        assert int(geom.index(4, 6)) not in row


class TestNonlocalWeights:
    """Tests for the patch-similarity graph."""

    def test_search_candidates_stay_in_grid(self):
        """Test that search windows shift inward at the border."""
        geom = GridGeometry(6, 6)
        candidates = search_candidates(geom, 3)
        assert candidates.shape == (36, 9)
        assert set(candidates[0].tolist()) == {0, 1, 2, 6, 7, 8, 12, 13, 14}
        assert candidates.min() >= 0 and candidates.max() < 36

    def test_params_validation(self):
        """Test that s_nl cannot exceed the search window."""
        with pytest.raises(GraphError):
            NonlocalParams(s_p=1, s_nl=10, t=3)

    def test_patch_distance_zero_for_identical_patches(self):
        """Test that pixels with identical surroundings have zero patch distance."""
        image = FeatureImage(GridGeometry(1, 6), np.array([[0.0], [1.0]] * 3))
        space = MetricSpace.euclidean(1)
        assert patch_distance(image, space, 1, 3, 1, 1.0) == pytest.approx(0.0)
        assert patch_distance(image, space, 1, 2, 1, 1.0) > 0.0

    def test_graph_is_stochastic_with_union_neighborhoods(self):
        """Test row sums and that the neighbor relation is symmetric."""
        image, _ = texture_checker(8)
        params = NonlocalParams(s_p=1, s_nl=4, t=5, sigma_p=1.0, sigma_w=0.5)
        graph = build_nonlocal(image, MetricSpace.euclidean(1), params)
        P = graph.toarray()
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_array_equal(P > 0, (P > 0).T)
        assert np.all((P > 0).sum(axis=1) >= 4)

    @pytest.mark.acceptance
    def test_texture_checker_neighbors_stay_in_region(self):
        """Test that nonlocal neighbors of the stripe/flat checker stay in their own region."""
        image, truth = texture_checker(8)
        params = NonlocalParams(s_p=1, s_nl=4, t=5, sigma_p=1.0, sigma_w=0.5)
        graph = build_nonlocal(image, MetricSpace.euclidean(1), params)
        coo = graph.matrix.tocoo()
        same = truth[coo.row] == truth[coo.col]
        assert same.mean() >= 0.8

    def test_threads_do_not_change_result(self):
        """Test that the graph does not depend on the worker count."""
        image, _ = texture_checker(8)
        params = NonlocalParams(s_p=1, s_nl=4, t=5, sigma_p=1.0, sigma_w=0.5)
        space = MetricSpace.euclidean(1)
        one = build_nonlocal(image, space, params, threads=1).toarray()
        four = build_nonlocal(image, space, params, threads=4).toarray()
        np.testing.assert_array_equal(one, four)


class TestSymmetrize:
    """Tests for symmetrize."""

    def test_symmetric_input_unchanged(self):
        """Test that a symmetric graph comes back with zero delta."""
        graph = build_local_uniform(GridGeometry(3, 3), 3)
        out, delta = symmetrize(graph)
        assert delta == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(out.toarray(), graph.toarray(), atol=1e-15)

    def test_reports_delta(self):
        """Test the row-sum correction of a nonsymmetric graph."""
        graph = WeightGraph.from_dense([[0.5, 0.5], [0.25, 0.75]])
        out, delta = symmetrize(graph)
        assert delta == pytest.approx(0.125)
        np.testing.assert_allclose(out.toarray().sum(axis=1), 1.0, atol=1e-12)


class TestGraphFiles:
    """Tests for dump_graph and load_graph."""

    def test_dump_then_load(self, tmp_path):
        """Test that a dumped graph loads with the same weights."""
        graph = build_local_uniform(GridGeometry(2, 3), 3)
        path = tmp_path / "rho.txt"
        dump_graph(graph, path)
        assert path.read_text().splitlines()[0] == f"6 {graph.matrix.nnz}"
        np.testing.assert_array_equal(load_graph(path).toarray(), graph.toarray())

    def test_load_rejects_out_of_range_index(self, tmp_path):
        """Test that indices beyond n are rejected."""
        path = tmp_path / "bad.txt"
        path.write_text("2 1\n0 2 1.0\n")
        with pytest.raises(GraphError):
            load_graph(path)


class TestEigendecompose:
    """Tests for eigendecompose and eigenvalue grouping."""

    def test_rejects_nonsymmetric(self):
        """Test that nonsymmetric weights raise NonSymmetricError."""
        with pytest.raises(NonSymmetricError):
            eigendecompose(WeightGraph.from_dense([[0.5, 0.5], [0.25, 0.75]]))

    def test_groups(self):
        """Test grouping of repeated eigenvalues."""
        groups = group_eigenvalues(np.array([1.0, 0.5, 0.5 - 1e-12, 0.0]))
        assert [g.multiplicity for g in groups] == [1, 2, 1]
        assert groups[1].columns == slice(1, 3)

    def test_leading_vector(self):
        """Test that the leading eigenpair of a connected graph is (1, constant / sqrt(n))."""
        eig = eigendecompose(build_local_uniform(GridGeometry(1, 10), 3))
        assert eig.eigenvalues[0] == pytest.approx(1.0)
        np.testing.assert_allclose(eig.Q[:, 0], 1.0 / math.sqrt(10), atol=1e-12)
        assert eig.groups[0].multiplicity == 1


@pytest.mark.acceptance
class TestSpectralSuite:
    """Spectral facts about symmetric stochastic matrices on seeded random instances."""

    def test_random_matrices(self, rng):
        """Test reconstruction, spectrum bounds, spectral gap and the power limit."""
        for _ in range(50):
            n = int(rng.integers(8, 31))
            P = random_symmetric_stochastic(n, rng)
            graph = WeightGraph.from_dense(P)
            assert graph.symmetric and graph.has_positive_diagonal() and graph.is_irreducible()
            eig = eigendecompose(graph)
            np.testing.assert_allclose(eig.reconstruct(), P, rtol=0, atol=1e-8)
            assert eig.eigenvalues[0] == pytest.approx(1.0, abs=1e-12)
            assert eig.eigenvalues[-1] > -1.0 + 1e-9
            assert 1.0 - eig.eigenvalues[1] > 1e-9

            gap = 1.0 - np.abs(eig.eigenvalues[1:]).max()
            r = math.ceil(10.0 * math.log(n) / gap)
            limit = power_limit_check(graph, r)
            assert limit.converged, limit.deviation

    def test_reducible_matrix_has_repeated_eigenvalue_one(self, rng):
        """Test that two disconnected blocks give eigenvalue 1 with multiplicity 2."""
        P = random_symmetric_stochastic(12, rng, blocks=2)
        graph = WeightGraph.from_dense(P)
        assert not graph.is_irreducible()
        eig = eigendecompose(graph)
        assert eig.groups[0].value == pytest.approx(1.0)
        assert eig.groups[0].multiplicity == 2
        assert not power_limit_check(graph, 200).converged

    def test_sparse_input(self):
        """Test that scipy sparse matrices are accepted directly."""
        P = sparse.identity(4, format="csr")
        eig = eigendecompose(P)
        assert eig.groups[0].multiplicity == 4
