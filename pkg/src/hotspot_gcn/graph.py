"""Grid-cell nodes, proximity edges in CSR form, and the GCN propagation operator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geo import GridSpec, haversine_km_array, to_grid_array
from .spatial_index import build_kdtree, radius_query


@dataclass
class CellTable:
    """Occupied grid cells, ordered by (row, col)."""

    rows: np.ndarray
    cols: np.ndarray
    centroid_lat: np.ndarray
    centroid_lon: np.ndarray
    counts: np.ndarray
    class_counts: np.ndarray  # (n, n_classes)

    def __len__(self):
        return len(self.rows)

    @property
    def n_classes(self) -> int:
        return self.class_counts.shape[1]

    @property
    def centroids(self) -> np.ndarray:
        return np.column_stack([self.centroid_lat, self.centroid_lon])


def build_nodes(lat, lon, class_ids, spec: GridSpec, n_classes: int | None = None) -> CellTable:
    """Aggregate events into the cells they fall in; empty cells are dropped."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    class_ids = np.asarray(class_ids, dtype=np.int64)
    if n_classes is None:
        n_classes = int(class_ids.max()) + 1 if class_ids.size else 0
    if lat.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return CellTable(empty, empty.copy(), np.zeros(0), np.zeros(0), empty.copy(),
                         np.zeros((0, n_classes), dtype=np.int64))
    rows, cols = to_grid_array(lat, lon, spec)
    linear = rows * spec.n_cols + cols
    cells, inverse = np.unique(linear, return_inverse=True)
    class_counts = np.zeros((len(cells), n_classes), dtype=np.int64)
    np.add.at(class_counts, (inverse, class_ids), 1)
    r, c = cells // spec.n_cols, cells % spec.n_cols
    return CellTable(
        rows=r, cols=c,
        centroid_lat=spec.origin.lat + (r + 0.5) * spec.cell_lat_deg,
        centroid_lon=spec.origin.lon + (c + 0.5) * spec.cell_lon_deg,
        counts=class_counts.sum(axis=1),
        class_counts=class_counts,
    )


@dataclass
class SpatialGraph:
    n: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    threshold_km: float
    epsilon: float

    @property
    def n_undirected_edges(self) -> int:
        return len(self.indices) // 2

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.weights, self.indices, self.indptr), shape=(self.n, self.n))

    def neighbor_sets(self) -> list[set[int]]:
        return [set(self.indices[self.indptr[i]:self.indptr[i + 1]].tolist()) for i in range(self.n)]


def build_edges(centroids, threshold_km: float = 3.0, epsilon: float = 1e-6) -> SpatialGraph:
    """Connect centroids within ``threshold_km`` (inclusive) using a KD-tree.

    Weight is 1 / (d + epsilon) with d the haversine distance in km.
    """
    if threshold_km <= 0:
        raise ValueError("threshold_km must be positive")
    pts = np.asarray(centroids, dtype=float).reshape(-1, 2)
    n = len(pts)
    indptr = np.zeros(n + 1, dtype=np.int64)
    if n == 0:
        return SpatialGraph(0, indptr, np.zeros(0, np.int64), np.zeros(0), threshold_km, epsilon)
    tree = build_kdtree(pts)
    src, dst, dist = [], [], []
    for i in range(n):
        hits = np.array(sorted(j for j in radius_query(tree, pts[i], threshold_km) if j > i),
                        dtype=np.int64)
        if hits.size == 0:
            continue
        d = haversine_km_array(pts[i, 0], pts[i, 1], pts[hits, 0], pts[hits, 1])
        keep = d > 0
        src.append(np.full(int(keep.sum()), i, dtype=np.int64))
        dst.append(hits[keep])
        dist.append(d[keep])
    if src:
        src, dst, dist = np.concatenate(src), np.concatenate(dst), np.concatenate(dist)
    else:
        src = dst = np.zeros(0, dtype=np.int64)
        dist = np.zeros(0)
    # each pair is measured once (i < j) and mirrored, so weights are exactly symmetric
    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    w = 1.0 / (np.concatenate([dist, dist]) + epsilon)
    order = np.lexsort((cols, rows))
    rows, cols, w = rows[order], cols[order], w[order]
    indptr[1:] = np.cumsum(np.bincount(rows, minlength=n))
    return SpatialGraph(n, indptr, cols, w, threshold_km, epsilon)


def brute_force_edges(centroids, threshold_km: float = 3.0, epsilon: float = 1e-6) -> dict[tuple[int, int], float]:
    """All-pairs reference construction: {(i, j): weight} for i != j."""
    pts = np.asarray(centroids, dtype=float).reshape(-1, 2)
    out = {}
    for i in range(len(pts)):
        for j in range(len(pts)):
            if i == j:
                continue
            d = float(haversine_km_array(pts[i, 0], pts[i, 1], pts[j, 0], pts[j, 1]))
            if 0 < d <= threshold_km:
                out[(i, j)] = 1.0 / (d + epsilon)
    return out


def normalize_adjacency(g: SpatialGraph) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 with unit self-loops; D is the degree of A + I."""
    n = g.n
    counts = np.diff(g.indptr)
    row_of = np.repeat(np.arange(n), counts)
    deg = np.ones(n)
    np.add.at(deg, row_of, g.weights)
    inv_sqrt = 1.0 / np.sqrt(deg)

    # splice the diagonal into each sorted row
    indptr = g.indptr + np.arange(n + 1)
    indices = np.empty(len(g.indices) + n, dtype=np.int64)
    data = np.empty(len(g.indices) + n)
    for i in range(n):
        lo, hi = g.indptr[i], g.indptr[i + 1]
        nb = g.indices[lo:hi]
        w = g.weights[lo:hi]
        pos = int(np.searchsorted(nb, i))
        out = slice(indptr[i], indptr[i + 1])
        indices[out] = np.concatenate([nb[:pos], [i], nb[pos:]])
        data[out] = np.concatenate([w[:pos], [1.0], w[pos:]])
    cols = indices
    rows = np.repeat(np.arange(n), np.diff(indptr))
    # scale product first so (i, j) and (j, i) round identically
    data = (inv_sqrt[rows] * inv_sqrt[cols]) * data
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


@dataclass(frozen=True)
class GraphStats:
    nodes: int
    undirected_edges: int
    density: float
    average_degree: float
    average_clustering: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def graph_stats(g: SpatialGraph) -> GraphStats:
    n, m = g.n, g.n_undirected_edges
    density = 2.0 * m / (n * (n - 1)) if n > 1 else 0.0
    avg_degree = 2.0 * m / n if n else 0.0
    nbrs = g.neighbor_sets()
    coeffs = []
    for i in range(n):
        k = len(nbrs[i])
        if k < 2:
            coeffs.append(0.0)
            continue
        links = sum(len(nbrs[j] & nbrs[i]) for j in nbrs[i]) / 2
        coeffs.append(links / (k * (k - 1) / 2))
    return GraphStats(n, m, density, avg_degree, float(np.mean(coeffs)) if n else 0.0)
