"""Seeded synthetic crime exports in the Chicago column layout."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .geo import EARTH_RADIUS_KM, BBox

KM_PER_DEG = EARTH_RADIUS_KM * math.pi / 180

SYNTH_HEADER = ["ID", "Date", "Primary Type", "Description", "Arrest", "Beat",
                "District", "Ward", "FBI Code", "Latitude", "Longitude"]


@dataclass(frozen=True)
class Hotspot:
    lat: float
    lon: float
    sigma_km: float
    weight: float = 1.0


@dataclass(frozen=True)
class ClassSpec:
    name: str
    hotspots: tuple[Hotspot, ...]
    weight: float = 1.0


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 0
    n_events: int = 10_000
    classes: tuple[ClassSpec, ...] = field(default_factory=lambda: two_cluster_classes())
    missing_fraction: float = 0.01
    box: BBox = BBox()

    def __post_init__(self):
        for c in self.classes:
            if c.weight <= 0:
                raise ValueError(f"class {c.name} weight must be positive")
            for h in c.hotspots:
                if h.sigma_km <= 0 or h.weight <= 0:
                    raise ValueError(f"bad hotspot {h} in class {c.name}")
                if not self.box.contains(h.lat, h.lon):
                    raise ValueError(f"hotspot {h} lies outside the bounding box")


def two_cluster_classes() -> tuple[ClassSpec, ...]:
    """THEFT on the north side, NARCOTICS on the south side."""
    return (
        ClassSpec("THEFT", (Hotspot(41.95, -87.68, 4.0),)),
        ClassSpec("NARCOTICS", (Hotspot(41.76, -87.66, 4.0),)),
    )


def sample_events(cfg: SyntheticConfig):
    """Returns (lat, lon, class index, timestamps as seconds offsets)."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_events
    cw = np.array([c.weight for c in cfg.classes], dtype=float)
    cls = rng.choice(len(cfg.classes), size=n, p=cw / cw.sum())
    lat = np.empty(n)
    lon = np.empty(n)
    mid_lat = math.radians((cfg.box.min_lat + cfg.box.max_lat) / 2)
    for k, spec in enumerate(cfg.classes):
        idx = np.flatnonzero(cls == k)
        hw = np.array([h.weight for h in spec.hotspots], dtype=float)
        pick = rng.choice(len(spec.hotspots), size=len(idx), p=hw / hw.sum())
        centers = np.array([[h.lat, h.lon, h.sigma_km] for h in spec.hotspots])[pick]
        dy = rng.standard_normal(len(idx)) * centers[:, 2]
        dx = rng.standard_normal(len(idx)) * centers[:, 2]
        lat[idx] = centers[:, 0] + dy / KM_PER_DEG
        lon[idx] = centers[:, 1] + dx / (KM_PER_DEG * math.cos(mid_lat))
    minutes = rng.integers(0, 8 * 365 * 24 * 60, size=n)
    missing = rng.random(n) < cfg.missing_fraction
    return lat, lon, cls, minutes, missing


def synth_generate(cfg: SyntheticConfig) -> str:
    """CSV text with a header row and ``cfg.n_events`` data rows."""
    lat, lon, cls, minutes, missing = sample_events(cfg)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SYNTH_HEADER)
    base = np.datetime64("2016-01-01T00:00")
    for i in range(cfg.n_events):
        ts = (base + np.timedelta64(int(minutes[i]), "m")).astype(object)
        date = ts.strftime("%m/%d/%Y %I:%M:%S %p")
        name = cfg.classes[cls[i]].name
        la, lo = ("", "") if missing[i] else (f"{lat[i]:.9f}", f"{lon[i]:.9f}")
        w.writerow([i + 1, date, name, "SYNTHETIC", "false", "0000", "000", "0", "00",
                    la, lo])
    return out.getvalue()


def neighborhood_dataset(seed: int = 0, box: BBox = BBox(), cell_deg: float = 0.02,
                         threshold_km: float = 3.0, ratios=(0.7, 0.1, 0.2)):
    """Node-level fixture whose labels depend only on the neighbours' counts.

    Every cell of the grid is occupied with a Poisson count drawn from a
    two-level rate. A node is HIGH when the edge-weighted mean z-count of its
    neighbours (itself excluded) exceeds the median, LOW otherwise, so its own
    three features carry little of the label.

    Returns (NodeDataset with masks, SpatialGraph).
    """
    from .features import NodeDataset, zscore
    from .geo import GridSpec, minmax_normalize
    from .graph import build_edges

    spec = GridSpec.from_bbox(box, cell_deg, cell_deg)
    rng = np.random.default_rng(seed)
    r, c = np.meshgrid(np.arange(spec.n_rows), np.arange(spec.n_cols), indexing="ij")
    r, c = r.ravel(), c.ravel()
    lat = spec.origin.lat + (r + 0.5) * cell_deg
    lon = spec.origin.lon + (c + 0.5) * cell_deg
    g = build_edges(np.column_stack([lat, lon]), threshold_km)
    counts = rng.poisson(rng.choice([5.0, 60.0], size=len(r)))
    z = zscore(counts)
    A = g.to_scipy()
    wsum = np.asarray(A.sum(axis=1)).ravel()
    nbr_mean = (A @ z) / np.where(wsum > 0, wsum, 1.0)
    y = (nbr_mean > np.median(nbr_mean)).astype(np.int64)
    X = np.column_stack([minmax_normalize(lat), minmax_normalize(lon), z])
    ds = NodeDataset(X, y, ["LOW", "HIGH"]).with_split(ratios, seed)
    return ds, g
