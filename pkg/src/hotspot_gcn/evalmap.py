"""Classification metrics, heat-map export (GeoJSON / PPM) and the comparison table."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .geo import GridSpec
from .graph import CellTable


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    weighted_f1: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    confusion: list[list[int]]
    mask_digest: str = ""
    wall_time_seconds: float | None = None

    def to_dict(self, with_time: bool = True) -> dict:
        per_class = [
            {"precision": p, "recall": r, "f1": f, "support": s}
            for p, r, f, s in zip(self.precision, self.recall, self.f1, self.support)
        ]
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "per_class": per_class,
            "confusion": self.confusion,
            "mask_digest": self.mask_digest,
            "wall_time_seconds": self.wall_time_seconds if with_time else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        pc = d["per_class"]
        return cls(d["accuracy"], d["macro_f1"], d["weighted_f1"],
                   [c["precision"] for c in pc], [c["recall"] for c in pc],
                   [c["f1"] for c in pc], [c["support"] for c in pc],
                   d["confusion"], d.get("mask_digest", ""), d.get("wall_time_seconds"))


def mask_digest(mask) -> str:
    m = np.asarray(mask, dtype=bool)
    return hashlib.sha256(np.packbits(m).tobytes() + len(m).to_bytes(8, "little")).hexdigest()[:16]


def metrics_from_confusion(confusion) -> dict:
    cm = np.asarray(confusion, dtype=np.int64)
    tp = np.diag(cm).astype(float)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 0.0)
        recall = np.where(support > 0, tp / np.maximum(support, 1), 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / np.where(denom > 0, denom, 1), 0.0)
    present = support > 0
    total = cm.sum()
    return {
        "accuracy": float(tp.sum() / total),
        "macro_f1": float(f1[present].mean()) if present.any() else 0.0,
        "weighted_f1": float((f1 * support).sum() / support.sum()),
        "precision": precision.tolist(),
        "recall": recall.tolist(),
        "f1": f1.tolist(),
        "support": support.tolist(),
    }


def compute_metrics(predictions, labels, mask=None, n_classes: int | None = None) -> MetricsReport:
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if pred.shape != true.shape:
        raise ValueError(f"{len(pred)} predictions vs {len(true)} labels")
    mask = np.ones(len(true), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != true.shape:
        raise ValueError("mask length differs from labels")
    if not mask.any():
        raise ValueError("metrics mask selects no nodes")
    if n_classes is None:
        n_classes = int(max(pred.max(), true.max())) + 1
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (true[mask], pred[mask]), 1)
    m = metrics_from_confusion(cm)
    return MetricsReport(confusion=cm.tolist(), mask_digest=mask_digest(mask), **m)


@dataclass
class HeatMapLayer:
    class_id: int
    class_name: str
    values: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    grid: GridSpec


def heatmap_layers(proba, cells: CellTable, grid: GridSpec, class_names=None) -> list[HeatMapLayer]:
    proba = np.asarray(proba, dtype=float)
    if proba.shape[0] != len(cells):
        raise ValueError("probability rows do not match the cell table")
    names = class_names or [str(c) for c in range(proba.shape[1])]
    return [HeatMapLayer(c, names[c], proba[:, c].copy(), cells.rows, cells.cols, grid)
            for c in range(proba.shape[1])]


def export_geojson(layer: HeatMapLayer, metadata: dict | None = None) -> str:
    """One CCW rectangle Polygon per occupied cell, coordinates [lon, lat]."""
    g = layer.grid
    features = []
    for r, c, p in zip(layer.rows.tolist(), layer.cols.tolist(), layer.values.tolist()):
        s, n = float(g.lat_edge(r)), float(g.lat_edge(r + 1))
        w, e = float(g.lon_edge(c)), float(g.lon_edge(c + 1))
        ring = [[w, s], [e, s], [e, n], [w, n], [w, s]]
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": {"row": r, "col": c, "class": layer.class_name, "probability": p},
        })
    doc = {"type": "FeatureCollection", "features": features}
    if metadata:
        doc["metadata"] = metadata
    return json.dumps(doc, separators=(",", ":"))


NEUTRAL_GRAY = (128, 128, 128)


def ramp_color(p: float) -> tuple[int, int, int]:
    """Blue (0) to red (1), linear."""
    p = min(1.0, max(0.0, float(p)))
    return int(round(255 * p)), 0, int(round(255 * (1 - p)))


def export_raster(layer: HeatMapLayer, comment: str | None = None) -> bytes:
    """Binary PPM (P6), one pixel per grid cell, north up."""
    g = layer.grid
    img = np.empty((g.n_rows, g.n_cols, 3), dtype=np.uint8)
    img[:] = NEUTRAL_GRAY
    for r, c, p in zip(layer.rows.tolist(), layer.cols.tolist(), layer.values.tolist()):
        img[g.n_rows - 1 - r, c] = ramp_color(p)
    head = "P6\n"
    if comment:
        head += "".join(f"# {line}\n" for line in comment.splitlines())
    head += f"{g.n_cols} {g.n_rows}\n255\n"
    return head.encode("ascii") + img.tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    """Parse a P6 image written by :func:`export_raster` into (h, w, 3)."""
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P6":
        raise ValueError("not a P6 image")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(data[pos + 1:pos + 1 + w * h * 3], dtype=np.uint8).reshape(h, w, 3)


@dataclass
class KdeRecord:
    accuracy: float
    bandwidth_km: float
    quantile: float
    wall_time_seconds: float | None = None


_TRAITS = {"GCN": ("Explicit", "Learned"), "SVM": ("Implicit", "Ignored"), "KDE": ("None", "Ignored")}


def comparison_report(gcn: MetricsReport, svm: MetricsReport, kde: KdeRecord) -> tuple[str, dict]:
    """Aligned text table plus the same numbers as a dict."""
    if gcn.mask_digest != svm.mask_digest:
        raise ValueError("GCN and SVM metrics were computed on different test masks")

    def fmt_time(t):
        return "n/a" if t is None else f"{t:.2f}"

    rows = [
        ("GCN", gcn.accuracy, gcn.macro_f1, gcn.wall_time_seconds),
        ("SVM", svm.accuracy, svm.macro_f1, svm.wall_time_seconds),
        ("KDE", kde.accuracy, None, kde.wall_time_seconds),
    ]
    payload = {"test_mask_digest": gcn.mask_digest, "methods": []}
    header = ("Method", "Accuracy", "Macro-F1", "Wall time (s)", "Spatial awareness", "Neighborhood effects")
    table = [header]
    for name, acc, f1, t in rows:
        aware, nbhd = _TRAITS[name]
        payload["methods"].append({"method": name, "accuracy": acc, "macro_f1": f1,
                                   "wall_time_seconds": t, "spatial_awareness": aware,
                                   "neighborhood_effects": nbhd})
        table.append((name, f"{acc:.4f}", "n/a" if f1 is None else f"{f1:.4f}", fmt_time(t), aware, nbhd))
    widths = [max(len(r[k]) for r in table) for k in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.append(f"Note: KDE accuracy is binary hotspot agreement (top {kde.quantile:g} of cells, "
                 f"bandwidth {kde.bandwidth_km:g} km).")
    return "\n".join(lines) + "\n", payload
