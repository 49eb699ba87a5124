"""KD-tree over (lat, lon) points with exact haversine radius queries.

The tree partitions in degree space. Pruning uses lower bounds on the
great-circle distance implied by a latitude or longitude gap, so a subtree
is skipped only when no point inside it can be within the radius.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geo import EARTH_RADIUS_KM, haversine_km_array

LEAF = -1


@dataclass(frozen=True)
class KdTree:
    points: np.ndarray       # (n, 2) lat, lon in input order
    point_ids: np.ndarray    # tree order -> input index
    split_axis: np.ndarray   # per node; LEAF for leaves
    split_value: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray        # node covers point_ids[start:end]
    end: np.ndarray
    max_abs_lat: float

    def __len__(self):
        return len(self.points)

    def depth(self) -> int:
        """Number of edges on the longest root-to-leaf path."""
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.split_axis[node] == LEAF:
                best = max(best, d)
            else:
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best


def build_kdtree(points, leaf_size: int = 1) -> KdTree:
    """Median-split tree with alternating axes (lat first).

    The median element and everything sorted before it go left, so the
    left subtree holds values <= split and the right subtree values >= split.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise ValueError("cannot build a KD-tree from zero points")
    if not np.all(np.isfinite(pts)):
        raise ValueError("KD-tree points must be finite")

    ids = np.arange(n)
    axis_l, value_l, left_l, right_l, start_l, end_l = [], [], [], [], [], []

    def new_node(lo, hi):
        axis_l.append(LEAF)
        value_l.append(math.nan)
        left_l.append(LEAF)
        right_l.append(LEAF)
        start_l.append(lo)
        end_l.append(hi)
        return len(axis_l) - 1

    root = new_node(0, n)
    stack = [(root, 0)]
    while stack:
        node, depth = stack.pop()
        lo, hi = start_l[node], end_l[node]
        if hi - lo <= leaf_size:
            continue
        axis = depth % 2
        seg = ids[lo:hi]
        # stable sort keeps builds deterministic under equal keys
        seg = seg[np.argsort(pts[seg, axis], kind="stable")]
        ids[lo:hi] = seg
        mid = lo + (hi - lo - 1) // 2
        axis_l[node] = axis
        value_l[node] = pts[ids[mid], axis]
        l = new_node(lo, mid + 1)
        r = new_node(mid + 1, hi)
        left_l[node], right_l[node] = l, r
        stack.append((l, depth + 1))
        stack.append((r, depth + 1))

    as_int = lambda xs: np.asarray(xs, dtype=np.int64)
    return KdTree(
        points=pts, point_ids=ids, split_axis=as_int(axis_l),
        split_value=np.asarray(value_l, dtype=float), left=as_int(left_l),
        right=as_int(right_l), start=as_int(start_l), end=as_int(end_l),
        max_abs_lat=float(np.max(np.abs(pts[:, 0]))),
    )


def _prune_windows(center_lat: float, r_km: float, max_abs_lat: float) -> tuple[float, float]:
    """Degree gaps beyond which no point can lie within r_km.

    Latitude: d >= R*|dphi|. Longitude: hav(d/R) >= cos(phi1)cos(phi2)hav(dlam)
    >= cos^2(phi_max) hav(dlam), so d > r once
    sin(dlam/2) > sin(r/2R) / cos(phi_max).
    """
    ang = r_km / EARTH_RADIUS_KM
    dlat = math.degrees(ang)
    phi_max = math.radians(min(90.0, max(max_abs_lat, abs(center_lat))))
    c = math.cos(phi_max)
    s = math.sin(min(ang, math.pi) / 2)
    if c <= 0 or s >= c:
        dlon = math.inf
    else:
        dlon = math.degrees(2 * math.asin(s / c))
    # widen by a hair so round-off never prunes a boundary point
    return dlat * (1 + 1e-9) + 1e-12, dlon * (1 + 1e-9) + 1e-12


def radius_query(tree: KdTree, center, r_km: float) -> set[int]:
    """Input indices of points within r_km (inclusive) of ``center``."""
    if r_km <= 0:
        raise ValueError("radius must be positive")
    clat, clon = float(center[0]), float(center[1])
    windows = _prune_windows(clat, r_km, tree.max_abs_lat)
    cvals = (clat, clon)
    candidates = []
    stack = [0]
    axis_a, value_a = tree.split_axis, tree.split_value
    while stack:
        node = stack.pop()
        axis = axis_a[node]
        if axis == LEAF:
            candidates.append(tree.point_ids[tree.start[node]:tree.end[node]])
            continue
        diff = cvals[axis] - value_a[node]
        # left holds values <= split; skip it if center sits too far above
        if diff <= windows[axis]:
            stack.append(tree.left[node])
        if -diff <= windows[axis]:
            stack.append(tree.right[node])
    if not candidates:
        return set()
    cand = np.concatenate(candidates)
    d = haversine_km_array(clat, clon, tree.points[cand, 0], tree.points[cand, 1])
    return set(int(i) for i in cand[d <= r_km])


def brute_force_radius(points, center, r_km: float) -> set[int]:
    """O(n) reference scan used to audit :func:`radius_query`."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    d = haversine_km_array(center[0], center[1], pts[:, 0], pts[:, 1])
    return set(int(i) for i in np.flatnonzero(d <= r_km))
