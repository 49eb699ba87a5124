"""Pipeline stages over a work directory of config-hash-addressed artifacts.

Every stage reads its upstream artifacts for the current config hash and
writes ``<stage>-<hash>.<ext>`` files. Re-running a stage with the same
inputs and config rewrites identical bytes.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import canonical_json, read_container, write_container
from .baselines import kde_density, kde_fit, kde_hotspot_classify, svm_predict, svm_train
from .config import ConfigError, PipelineConfig
from .evalmap import (KdeRecord, MetricsReport, comparison_report, compute_metrics,
                      export_geojson, export_raster, heatmap_layers)
from .features import LabelMap, NodeDataset, build_dataset, consolidate_rare
from .gcn import GcnParams, TrainHistory, predict_proba, train
from .geo import BBox, GridSpec
from .graph import CellTable, SpatialGraph, build_edges, build_nodes, graph_stats, normalize_adjacency
from .ingest import RECORD_DTYPE, IngestReport, Schema, ingest_csv

log = logging.getLogger(__name__)

STAGES = ("ingest", "graph", "train", "baseline-kde", "baseline-svm", "eval", "heatmap", "report")


class MissingPrerequisite(RuntimeError):
    def __init__(self, stage: str, path: Path):
        super().__init__(f"missing {path.name}: run the '{stage}' stage first")
        self.stage = stage


class ConfigMismatch(ConfigError):
    pass


class Workspace:
    def __init__(self, cfg: PipelineConfig, overwrite: bool = False):
        self.cfg = cfg
        self.root = Path(cfg.paths.work_dir)
        self.hash = cfg.hash()
        self.overwrite = overwrite

    def path(self, stem: str, ext: str) -> Path:
        return self.root / f"{stem}-{self.hash}.{ext}"

    def require(self, stage: str, stem: str, ext: str) -> Path:
        p = self.path(stem, ext)
        if not p.exists():
            raise MissingPrerequisite(stage, p)
        return p

    def meta(self, **extra) -> dict:
        return {"tool": "hotspot_gcn", "version": __version__, "config_hash": self.hash, **extra}

    def claim(self) -> None:
        """Refuse to mix configs in one work dir unless overwriting."""
        self.root.mkdir(parents=True, exist_ok=True)
        manifest = self.root / "manifest.json"
        if manifest.exists():
            current = json.loads(manifest.read_text()).get("config_hash")
            if current != self.hash and not self.overwrite:
                raise ConfigMismatch(
                    f"{self.root} holds artifacts for config {current}, current config is "
                    f"{self.hash}; use another work dir or pass --overwrite")
        body = {"config_hash": self.hash, "version": __version__, "config": self.cfg.to_dict()}
        body["config"].pop("paths")
        manifest.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")

    def write_json(self, stem: str, obj: dict) -> Path:
        p = self.path(stem, "json")
        p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        return p

    def read_json(self, stage: str, stem: str) -> dict:
        return json.loads(self.require(stage, stem, "json").read_text())

    def record_time(self, stage: str, seconds: float) -> None:
        # timings are kept apart so the other artifacts stay byte-reproducible
        p = self.path("timings", "json")
        data = json.loads(p.read_text()) if p.exists() else self.meta()
        data.setdefault("seconds", {})[stage] = seconds
        p.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")

    def timings(self) -> dict:
        p = self.path("timings", "json")
        return json.loads(p.read_text()).get("seconds", {}) if p.exists() else {}


def _grid(cfg: PipelineConfig) -> GridSpec:
    return GridSpec.from_bbox(BBox(**asdict(cfg.bbox)), cfg.grid.cell_lat_deg, cfg.grid.cell_lon_deg)


# -- ingest -----------------------------------------------------------------

def stage_ingest(ws: Workspace, schema: Schema | None = None) -> None:
    src = Path(ws.cfg.paths.raw_csv)
    if not src.exists():
        raise MissingPrerequisite("synth (or supply paths.raw_csv)", src)
    with open(src, newline="", encoding="utf-8") as fh:
        res = ingest_csv(fh, schema, BBox(**asdict(ws.cfg.bbox)))
    header = ws.meta(stage="ingest", type_names=res.type_names, report=res.report.to_dict(),
                     parse_errors=res.parse_errors)
    write_container(ws.path("ingest", "bin"), header, {"records": res.records})
    ws.write_json("ingest-report", ws.meta(**res.report.to_dict(), parse_errors=res.parse_errors))


def load_events(ws: Workspace) -> tuple[np.ndarray, list[str], IngestReport]:
    header, arrays = read_container(ws.require("ingest", "ingest", "bin"))
    rec = arrays["records"].astype(RECORD_DTYPE, copy=False)
    return rec, header["type_names"], IngestReport(**header["report"])


# -- graph + features ----------------------------------------------------------

def event_classes(records: np.ndarray, type_names: list[str], min_count: int) -> tuple[LabelMap, np.ndarray]:
    counts = np.bincount(records["type_id"], minlength=len(type_names))
    labels = consolidate_rare({t: int(c) for t, c in zip(type_names, counts)}, min_count)
    lookup = np.array([labels.raw_to_class[t] for t in type_names], dtype=np.int64)
    return labels, lookup[records["type_id"]]


def stage_graph(ws: Workspace) -> None:
    cfg = ws.cfg
    records, type_names, _ = load_events(ws)
    if len(records) == 0:
        raise RuntimeError("no events survived ingest; nothing to build a graph from")
    labels, cls = event_classes(records, type_names, cfg.features.min_count)
    spec = _grid(cfg)
    cells = build_nodes(records["lat"], records["lon"], cls, spec, labels.n_classes)
    g = build_edges(cells.centroids, cfg.graph.threshold_km, cfg.graph.epsilon)
    ds = build_dataset(cells, labels).with_split(cfg.features.split_ratios, cfg.features.split_seed)

    write_container(
        ws.path("graph", "bin"),
        ws.meta(stage="graph", grid=spec.to_dict(), n=g.n, threshold_km=g.threshold_km,
                epsilon=g.epsilon),
        {"offsets": g.indptr.astype(np.uint32), "neighbors": g.indices.astype(np.uint32),
         "weights": g.weights.astype(np.float64)},
    )
    ws.write_json("gridspec", ws.meta(**spec.to_dict()))
    ws.write_json("graph-stats", ws.meta(**graph_stats(g).to_dict()))
    write_container(
        ws.path("dataset", "bin"),
        ws.meta(stage="graph", class_names=ds.class_names, label_map=labels.to_dict(),
                seed=ds.split_seed, ratios=list(ds.split_ratios),
                features=["norm_lat", "norm_lon", "z_count"]),
        {"features": ds.features, "labels": ds.labels.astype(np.int32),
         "train": ds.train_mask.astype(np.uint8), "val": ds.val_mask.astype(np.uint8),
         "test": ds.test_mask.astype(np.uint8), "rows": cells.rows.astype(np.uint32),
         "cols": cells.cols.astype(np.uint32), "class_counts": cells.class_counts.astype(np.uint32)},
    )


def load_graph(ws: Workspace) -> tuple[SpatialGraph, GridSpec]:
    header, a = read_container(ws.require("graph", "graph", "bin"))
    g = SpatialGraph(header["n"], a["offsets"].astype(np.int64), a["neighbors"].astype(np.int64),
                     a["weights"], header["threshold_km"], header["epsilon"])
    return g, GridSpec.from_dict(header["grid"])


def load_dataset(ws: Workspace) -> tuple[NodeDataset, CellTable]:
    header, a = read_container(ws.require("graph", "dataset", "bin"))
    ds = NodeDataset(a["features"], a["labels"].astype(np.int64), header["class_names"],
                     a["train"].astype(bool), a["val"].astype(bool), a["test"].astype(bool),
                     header["seed"], tuple(header["ratios"]))
    spec = _grid(ws.cfg)
    rows, cols = a["rows"].astype(np.int64), a["cols"].astype(np.int64)
    cc = a["class_counts"].astype(np.int64)
    cells = CellTable(rows, cols, spec.origin.lat + (rows + 0.5) * spec.cell_lat_deg,
                      spec.origin.lon + (cols + 0.5) * spec.cell_lon_deg, cc.sum(axis=1), cc)
    return ds, cells


# -- GCN ------------------------------------------------------------------

def save_checkpoint(path, params: GcnParams, header: dict) -> None:
    arrays = {}
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"W{k}"] = w.astype(np.float64)
        arrays[f"b{k}"] = b.astype(np.float64)
    write_container(path, dict(header, n_layers=params.n_layers), arrays)


def load_checkpoint(path) -> tuple[GcnParams, dict]:
    header, a = read_container(path)
    n = header["n_layers"]
    return GcnParams([a[f"W{k}"] for k in range(n)], [a[f"b{k}"] for k in range(n)]), header


def stage_train(ws: Workspace) -> None:
    g, _ = load_graph(ws)
    ds, _ = load_dataset(ws)
    adj = normalize_adjacency(g)
    t0 = time.perf_counter()
    params, hist = train(ds, adj, ws.cfg.gcn)
    ws.record_time("train", time.perf_counter() - t0)
    save_checkpoint(ws.path("model", "bin"), params,
                    ws.meta(stage="train", config=ws.cfg.gcn.to_dict(), class_names=ds.class_names,
                            features=["norm_lat", "norm_lon", "z_count"], seed=ws.cfg.gcn.seed,
                            best_epoch=hist.best_epoch, stopped_epoch=hist.stopped_epoch))
    ws.path("history", "csv").write_text(f"# config_hash={ws.hash} version={__version__}\n"
                                         + hist.to_csv())


def gcn_probabilities(ws: Workspace) -> np.ndarray:
    g, _ = load_graph(ws)
    ds, _ = load_dataset(ws)
    params, _ = load_checkpoint(ws.require("train", "model", "bin"))
    return predict_proba(params, normalize_adjacency(g), ds.features)


def stage_eval(ws: Workspace) -> None:
    ds, _ = load_dataset(ws)
    proba = gcn_probabilities(ws)
    pred = np.argmax(proba, axis=1)
    m = compute_metrics(pred, ds.labels, ds.test_mask, ds.n_classes)
    ws.write_json("metrics-gcn", ws.meta(method="GCN", **m.to_dict(with_time=False)))


# -- baselines ------------------------------------------------------------------

def stage_baseline_svm(ws: Workspace) -> None:
    ds, _ = load_dataset(ws)
    s = ws.cfg.svm
    t0 = time.perf_counter()
    model = svm_train(ds.features, ds.labels, ds.train_mask, ds.n_classes,
                      gamma=s.gamma or None, lam=s.lam or None, iterations=s.iterations or None,
                      seed=s.seed)
    ws.record_time("baseline-svm", time.perf_counter() - t0)
    pred = svm_predict(model, ds.features)
    m = compute_metrics(pred, ds.labels, ds.test_mask, ds.n_classes)
    ws.write_json("metrics-svm", ws.meta(method="SVM", gamma=model.gamma, lam=model.lam,
                                         iterations=model.iterations, **m.to_dict(with_time=False)))


def stage_baseline_kde(ws: Workspace) -> None:
    """Fit on a seeded share of events; score hotspots against the held-out share."""
    k = ws.cfg.kde
    records, _, _ = load_events(ws)
    _, cells = load_dataset(ws)
    spec = _grid(ws.cfg)
    rng = np.random.default_rng(k.seed)
    fit = rng.random(len(records)) < k.fit_fraction
    t0 = time.perf_counter()
    model = kde_fit(records["lat"][fit], records["lon"][fit], k.bandwidths_km, k.cv_folds, k.seed,
                    k.max_samples, k.cv_max_samples)
    density = kde_density(model, cells.centroid_lat, cells.centroid_lon)
    ws.record_time("baseline-kde", time.perf_counter() - t0)
    held = build_nodes(records["lat"][~fit], records["lon"][~fit],
                       np.zeros((~fit).sum(), dtype=np.int64), spec, 1)
    lin_cells = cells.rows * spec.n_cols + cells.cols
    lin_held = held.rows * spec.n_cols + held.cols
    actual = np.zeros(len(cells), dtype=np.int64)
    pos = np.searchsorted(lin_cells, lin_held)
    ok = (pos < len(lin_cells)) & (lin_cells[np.minimum(pos, len(lin_cells) - 1)] == lin_held)
    actual[pos[ok]] = held.counts[ok]
    pred, truth, acc = kde_hotspot_classify(density, actual, k.quantile)
    ws.write_json("kde", ws.meta(method="KDE", accuracy=acc, bandwidth_km=model.bandwidth_km,
                                 bandwidth_grid=list(model.bandwidth_grid),
                                 cv_scores=list(model.cv_scores), quantile=k.quantile,
                                 n_fit_events=int(fit.sum()), density=density.tolist(),
                                 predicted_hotspots=pred.astype(int).tolist(),
                                 true_hotspots=truth.astype(int).tolist()))


# -- outputs -----------------------------------------------------------------

def stage_heatmap(ws: Workspace) -> list[Path]:
    ds, cells = load_dataset(ws)
    spec = _grid(ws.cfg)
    proba = gcn_probabilities(ws)
    written = []
    layers = heatmap_layers(proba, cells, spec, ds.class_names)
    for a, b in zip(layers, layers[1:]):
        if np.array_equal(a.values, b.values):
            log.warning("heat maps for %s and %s are identical", a.class_name, b.class_name)
    for layer in layers:
        slug = layer.class_name.lower().replace(" ", "_").replace("/", "_")
        meta = ws.meta(class_id=layer.class_id, class_name=layer.class_name)
        gj = ws.root / f"heatmap-{slug}-{ws.hash}.geojson"
        gj.write_text(export_geojson(layer, meta))
        ppm = ws.root / f"heatmap-{slug}-{ws.hash}.ppm"
        ppm.write_bytes(export_raster(layer, canonical_json(meta)))
        written += [gj, ppm]
    return written


def stage_report(ws: Workspace) -> str:
    times = ws.timings()
    reports = []
    for method, stage in (("gcn", "eval"), ("svm", "baseline-svm")):
        d = ws.read_json(stage, f"metrics-{method}")
        if d.get("config_hash") != ws.hash:
            raise ConfigMismatch(f"metrics-{method} was produced by config {d.get('config_hash')}")
        m = MetricsReport.from_dict(d)
        m.wall_time_seconds = times.get("train" if method == "gcn" else "baseline-svm")
        reports.append(m)
    kd = ws.read_json("baseline-kde", "kde")
    if kd.get("config_hash") != ws.hash:
        raise ConfigMismatch(f"kde results were produced by config {kd.get('config_hash')}")
    kde = KdeRecord(kd["accuracy"], kd["bandwidth_km"], kd["quantile"], times.get("baseline-kde"))
    text, payload = comparison_report(reports[0], reports[1], kde)
    text += f"config {ws.hash}, hotspot_gcn {__version__}\n"
    ws.path("report", "txt").write_text(text)
    ws.write_json("report", ws.meta(**payload))
    return text


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "graph": stage_graph,
    "train": stage_train,
    "baseline-kde": stage_baseline_kde,
    "baseline-svm": stage_baseline_svm,
    "eval": stage_eval,
    "heatmap": stage_heatmap,
    "report": stage_report,
}


def run_stage(stage: str, cfg: PipelineConfig, overwrite: bool = False):
    if stage not in STAGE_FUNCS:
        raise ConfigError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    ws = Workspace(cfg, overwrite)
    ws.claim()
    log.info("stage %s (config %s)", stage, ws.hash)
    return STAGE_FUNCS[stage](ws)


def run_all(cfg: PipelineConfig, overwrite: bool = False) -> str:
    out = None
    for stage in STAGES:
        out = run_stage(stage, cfg, overwrite)
    return out
