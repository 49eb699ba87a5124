"""Node features, modal-type labels with rare-class consolidation, and stratified masks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .geo import minmax_normalize
from .graph import CellTable

OTHER = "OTHER"


@dataclass(frozen=True)
class LabelMap:
    class_names: list[str]
    raw_to_class: dict[str, int]
    min_count: int

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def to_dict(self) -> dict:
        return {"class_names": list(self.class_names), "raw_to_class": dict(self.raw_to_class),
                "min_count": self.min_count}

    @classmethod
    def from_dict(cls, d: dict) -> "LabelMap":
        return cls(list(d["class_names"]), {k: int(v) for k, v in d["raw_to_class"].items()},
                   int(d["min_count"]))


def consolidate_rare(class_counts: Mapping[str, int], min_count: int = 1000) -> LabelMap:
    """Fold types with fewer than ``min_count`` events into OTHER.

    Surviving types get ids by descending count (name breaks ties); OTHER,
    when present, takes the last id.
    """
    if not class_counts:
        raise ValueError("no crime types to consolidate")
    if any(c < 0 for c in class_counts.values()):
        raise ValueError("counts must be non-negative")
    kept = [t for t, c in class_counts.items() if c >= min_count and t != OTHER]
    kept.sort(key=lambda t: (-class_counts[t], t))
    rare = [t for t in class_counts if t not in kept]
    names = kept + ([OTHER] if rare else [])
    mapping = {t: i for i, t in enumerate(kept)}
    for t in rare:
        mapping[t] = len(kept)
    return LabelMap(names, mapping, min_count)


def zscore(values) -> np.ndarray:
    """Population z-score; a constant column maps to zeros."""
    v = np.asarray(values, dtype=float)
    sd = v.std()
    if sd == 0:
        return np.zeros_like(v)
    return (v - v.mean()) / sd


@dataclass
class NodeDataset:
    features: np.ndarray  # (n, 3): norm lat, norm lon, z-scored count
    labels: np.ndarray
    class_names: list[str]
    train_mask: np.ndarray | None = None
    val_mask: np.ndarray | None = None
    test_mask: np.ndarray | None = None
    split_seed: int | None = None
    split_ratios: tuple[float, float, float] | None = None

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def with_split(self, ratios=(0.7, 0.1, 0.2), seed: int = 0) -> "NodeDataset":
        tr, va, te = stratified_split(self.labels, ratios, seed)
        return NodeDataset(self.features, self.labels, self.class_names, tr, va, te,
                           seed, tuple(ratios))


def build_dataset(cells: CellTable, labels: LabelMap) -> NodeDataset:
    """Features and modal-class labels; ``cells.class_counts`` must be in LabelMap id space."""
    if len(cells) == 0:
        raise ValueError("no occupied cells")
    if cells.n_classes != labels.n_classes:
        raise ValueError(f"cell table has {cells.n_classes} classes, label map {labels.n_classes}")
    X = np.column_stack([
        minmax_normalize(cells.centroid_lat),
        minmax_normalize(cells.centroid_lon),
        zscore(cells.counts),
    ])
    # argmax returns the first maximum, i.e. the lower (more frequent) class id
    y = np.argmax(cells.class_counts, axis=1).astype(np.int64)
    return NodeDataset(X, y, list(labels.class_names))


def _largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    quotas = [n * r for r in ratios]
    base = [int(np.floor(q)) for q in quotas]
    left = n - sum(base)
    # ties resolve toward the earlier split (train, then val)
    order = sorted(range(len(ratios)), key=lambda k: (-(quotas[k] - base[k]), k))
    for k in order[:left]:
        base[k] += 1
    return base


def stratified_split(labels, ratios=(0.7, 0.1, 0.2), seed: int = 0):
    """Per-class seeded shuffle, sized by largest-remainder rounding.

    Returns boolean (train, val, test) masks that partition all nodes.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    masks = [np.zeros(len(labels), dtype=bool) for _ in range(3)]
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        sizes = _largest_remainder(len(idx), ratios)
        if sizes[0] == 0:
            donor = int(np.argmax(sizes))
            sizes[donor] -= 1
            sizes[0] += 1
        bounds = np.cumsum([0] + sizes)
        for k in range(3):
            masks[k][idx[bounds[k]:bounds[k + 1]]] = True
    return tuple(masks)
