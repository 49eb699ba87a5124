"""Geodesic distance, grid discretization and min-max scaling."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0


class GeoPoint(NamedTuple):
    lat: float
    lon: float


@dataclass(frozen=True)
class BBox:
    min_lat: float = 41.6
    max_lat: float = 42.1
    min_lon: float = -87.9
    max_lon: float = -87.5

    def __post_init__(self):
        if not (self.min_lat < self.max_lat and self.min_lon < self.max_lon):
            raise ValueError(f"degenerate bounding box: {self}")

    def contains(self, lat, lon):
        """Inclusive on every edge. Works elementwise on arrays."""
        return (
            (lat >= self.min_lat) & (lat <= self.max_lat)
            & (lon >= self.min_lon) & (lon <= self.max_lon)
        )


class OutOfDomainError(ValueError):
    pass


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    phi1, phi2 = math.radians(a[0]), math.radians(b[0])
    dphi = phi2 - phi1
    dlam = math.radians(b[1] - a[1])
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def haversine_km_array(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Broadcasting version of :func:`haversine_km`."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


class CellIndex(NamedTuple):
    row: int
    col: int


# slack for float round-off when a coordinate sits exactly on a cell edge
_EDGE_SLACK = 1e-9


@dataclass(frozen=True)
class GridSpec:
    origin: GeoPoint
    cell_lat_deg: float
    cell_lon_deg: float
    n_rows: int
    n_cols: int

    @classmethod
    def from_bbox(cls, box: BBox, cell_lat_deg: float = 0.02, cell_lon_deg: float = 0.02) -> "GridSpec":
        if cell_lat_deg <= 0 or cell_lon_deg <= 0:
            raise ValueError("cell sizes must be positive")
        n_rows = math.ceil((box.max_lat - box.min_lat) / cell_lat_deg - _EDGE_SLACK)
        n_cols = math.ceil((box.max_lon - box.min_lon) / cell_lon_deg - _EDGE_SLACK)
        return cls(GeoPoint(box.min_lat, box.min_lon), cell_lat_deg, cell_lon_deg, n_rows, n_cols)

    @property
    def max_lat(self) -> float:
        return self.origin.lat + self.n_rows * self.cell_lat_deg

    @property
    def max_lon(self) -> float:
        return self.origin.lon + self.n_cols * self.cell_lon_deg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["origin"] = {"lat": self.origin.lat, "lon": self.origin.lon}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        o = d["origin"]
        return cls(GeoPoint(o["lat"], o["lon"]), d["cell_lat_deg"], d["cell_lon_deg"],
                   int(d["n_rows"]), int(d["n_cols"]))

    def lat_edge(self, k):
        return self.origin.lat + np.asarray(k) * self.cell_lat_deg

    def lon_edge(self, k):
        return self.origin.lon + np.asarray(k) * self.cell_lon_deg


def to_grid_array(lat, lon, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`to_grid`; raises if any point lies outside the grid."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    fr = (lat - spec.origin.lat) / spec.cell_lat_deg
    fc = (lon - spec.origin.lon) / spec.cell_lon_deg
    bad = (fr < -_EDGE_SLACK) | (fc < -_EDGE_SLACK) | (fr > spec.n_rows + _EDGE_SLACK) \
        | (fc > spec.n_cols + _EDGE_SLACK) | ~np.isfinite(fr) | ~np.isfinite(fc)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise OutOfDomainError(f"point ({lat.flat[i]}, {lon.flat[i]}) lies outside the grid")
    rows = np.clip(np.floor(fr + _EDGE_SLACK).astype(np.int64), 0, spec.n_rows - 1)
    cols = np.clip(np.floor(fc + _EDGE_SLACK).astype(np.int64), 0, spec.n_cols - 1)
    return rows, cols


def to_grid(p: GeoPoint, spec: GridSpec) -> CellIndex:
    r, c = to_grid_array([p[0]], [p[1]], spec)
    return CellIndex(int(r[0]), int(c[0]))


def cell_centroid(c: CellIndex, spec: GridSpec) -> GeoPoint:
    row, col = c
    if not (0 <= row < spec.n_rows and 0 <= col < spec.n_cols):
        raise OutOfDomainError(f"cell {tuple(c)} outside {spec.n_rows}x{spec.n_cols} grid")
    return GeoPoint(
        spec.origin.lat + (row + 0.5) * spec.cell_lat_deg,
        spec.origin.lon + (col + 0.5) * spec.cell_lon_deg,
    )


def minmax_normalize(values: Sequence[float]) -> np.ndarray:
    """Scale to [0, 1]; a constant input maps to all zeros."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("minmax_normalize needs at least one value")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0)
