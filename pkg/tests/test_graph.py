import numpy as np
import pytest

from hotspot_gcn.geo import haversine_km
from hotspot_gcn.graph import (SpatialGraph, brute_force_edges, build_edges, build_nodes, graph_stats,
                               normalize_adjacency)

from conftest import grid_centroids, power_iteration, random_geo_graph


def edge_dict(g):
    out = {}
    for i in range(g.n):
        for k in range(g.indptr[i], g.indptr[i + 1]):
            out[(i, int(g.indices[k]))] = float(g.weights[k])
    return out


def graph_from_pairs(n, pairs, w=1.0):
    rows, cols = [], []
    for i, j in pairs:
        rows += [i, j]
        cols += [j, i]
    order = np.lexsort((cols, rows))
    rows, cols = np.array(rows)[order], np.array(cols)[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(np.bincount(rows, minlength=n))
    return SpatialGraph(n, indptr, cols.astype(np.int64), np.full(len(cols), w), 3.0, 1e-6)


def test_build_nodes_counts(chicago_grid):
    assert len(build_nodes([], [], [], chicago_grid, 2)) == 0
    lat = [41.61, 41.611, 41.612, 41.75]
    lon = [-87.89, -87.889, -87.888, -87.70]
    cells = build_nodes(lat, lon, [0, 1, 1, 0], chicago_grid, 2)
    assert sorted(cells.counts.tolist()) == [1, 3]
    np.testing.assert_array_equal(cells.class_counts.sum(axis=1), cells.counts)
    first = int(np.flatnonzero(cells.counts == 3)[0])
    assert cells.class_counts[first].tolist() == [1, 2]


def test_two_cells_one_edge():
    pts = np.array([[41.85, -87.65], [41.87, -87.65]])
    g = build_edges(pts, 3.0, 1e-6)
    assert g.n_undirected_edges == 1
    np.testing.assert_allclose(g.weights, [0.4496606007646184] * 2, rtol=1e-12)


def test_far_cells_no_edge():
    # 0.0306 deg of latitude is about 3.4 km
    g = build_edges(np.array([[41.85, -87.65], [41.8806, -87.65]]), 3.0)
    assert haversine_km((41.85, -87.65), (41.8806, -87.65)) > 3.3
    assert g.n_undirected_edges == 0


def test_single_cell_graph():
    g = build_edges(np.array([[41.85, -87.65]]))
    assert g.n == 1 and len(g.indices) == 0
    assert normalize_adjacency(g).toarray().tolist() == [[1.0]]


@pytest.mark.parametrize("seed", range(5))
def test_edges_match_brute_force(seed):
    pts = random_geo_graph(120, seed)
    g = build_edges(pts, 3.0)
    ours, ref = edge_dict(g), brute_force_edges(pts, 3.0)
    assert ours.keys() == ref.keys()
    for k, w in ref.items():
        assert ours[k] == pytest.approx(w, rel=1e-12)


def test_csr_symmetric_no_self_loops_sorted():
    g = build_edges(random_geo_graph(200, 11), 3.0)
    m = g.to_scipy()
    assert (m != m.T).nnz == 0
    assert np.all(m.diagonal() == 0)
    assert np.all(np.isfinite(g.weights)) and np.all(g.weights > 0)
    for i in range(g.n):
        row = g.indices[g.indptr[i]:g.indptr[i + 1]]
        assert np.all(np.diff(row) > 0)


def test_5x5_grid_interior_degree_8():
    pts = grid_centroids(5, 5)
    g = build_edges(pts, 3.0)
    deg = np.diff(g.indptr).reshape(5, 5)
    assert np.all(deg[1:-1, 1:-1] == 8)
    assert edge_dict(g).keys() == brute_force_edges(pts, 3.0).keys()


def test_normalized_two_node():
    g = graph_from_pairs(2, [(0, 1)])
    np.testing.assert_allclose(normalize_adjacency(g).toarray(), np.full((2, 2), 0.5), rtol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_normalized_spectral_bound_power_iteration(seed):
    g = build_edges(random_geo_graph(50, seed, spread=0.08), 3.0)
    a = normalize_adjacency(g)
    assert power_iteration(lambda v: a @ v, g.n) <= 1 + 1e-9


def test_normalized_reconstructs_a_plus_i():
    g = build_edges(random_geo_graph(80, 5), 3.0)
    a = normalize_adjacency(g).toarray()
    api = g.to_scipy().toarray() + np.eye(g.n)
    d = np.sqrt(api.sum(axis=1))
    np.testing.assert_allclose(d[:, None] * a * d[None, :], api, rtol=1e-12)
    np.testing.assert_allclose((a * d[None, :]).sum(axis=1), d, rtol=1e-12)
    assert np.all(a.diagonal() > 0)
    np.testing.assert_array_equal(a, a.T)


def test_normalize_is_deterministic():
    g = build_edges(random_geo_graph(60, 9), 3.0)
    a, b = normalize_adjacency(g), normalize_adjacency(g)
    assert a.data.tobytes() == b.data.tobytes()
    assert a.indices.tobytes() == b.indices.tobytes()


def test_stats_triangle_and_path():
    tri = graph_stats(graph_from_pairs(3, [(0, 1), (1, 2), (0, 2)]))
    assert (tri.density, tri.average_degree, tri.average_clustering) == (1.0, 2.0, 1.0)
    path = graph_stats(graph_from_pairs(3, [(0, 1), (1, 2)]))
    assert path.average_clustering == 0.0


def clustering_by_matrix_power(g):
    a = (g.to_scipy().toarray() > 0).astype(float)
    tri = np.diag(a @ a @ a) / 2
    k = a.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(k >= 2, tri / (k * (k - 1) / 2), 0.0)
    return c.mean()


def test_king_graph_clustering_oracle():
    g = build_edges(grid_centroids(3, 3), 3.0)
    assert g.n_undirected_edges == 20
    s = graph_stats(g)
    assert s.average_clustering == pytest.approx(clustering_by_matrix_power(g), abs=1e-12)
    assert s.density == pytest.approx(2 * 20 / (9 * 8))


def test_random_graph_clustering_oracle():
    g = build_edges(random_geo_graph(150, 2), 3.0)
    assert graph_stats(g).average_clustering == pytest.approx(clustering_by_matrix_power(g), abs=1e-12)
