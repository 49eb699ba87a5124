import json

import numpy as np
import pytest

from hotspot_gcn.evalmap import (KdeRecord, MetricsReport, compute_metrics, comparison_report,
                                 export_geojson, export_raster, heatmap_layers, metrics_from_confusion,
                                 read_ppm)
from hotspot_gcn.geo import BBox, GridSpec
from hotspot_gcn.graph import CellTable

SPEC = GridSpec.from_bbox(BBox())


def table(rows, cols):
    rows, cols = np.asarray(rows), np.asarray(cols)
    n = len(rows)
    return CellTable(rows, cols, SPEC.origin.lat + (rows + 0.5) * 0.02,
                     SPEC.origin.lon + (cols + 0.5) * 0.02, np.ones(n, int), np.ones((n, 1), int))


def recount(pred, true, mask, c):
    cm = [[0] * c for _ in range(c)]
    for p, t, m in zip(pred, true, mask):
        if m:
            cm[t][p] += 1
    return cm


def test_perfect_predictions():
    y = np.array([0, 1, 2, 1])
    m = compute_metrics(y, y)
    assert m.accuracy == 1.0 and m.macro_f1 == 1.0
    assert m.confusion == [[1, 0, 0], [0, 2, 0], [0, 0, 1]]


def test_all_zero_predictions():
    m = compute_metrics(np.zeros(4, int), np.array([0, 0, 1, 1]), n_classes=2)
    assert m.accuracy == 0.5
    assert m.f1[1] == 0.0
    assert m.macro_f1 == pytest.approx(1 / 3, abs=1e-15)


def test_errors():
    with pytest.raises(ValueError):
        compute_metrics([0, 1], [0])
    with pytest.raises(ValueError):
        compute_metrics([0, 1], [0, 1], [False, False])


def test_macro_f1_ignores_absent_classes():
    m = compute_metrics(np.array([0, 0, 2]), np.array([0, 0, 0]), n_classes=3)
    assert m.support == [3, 0, 0]
    assert m.macro_f1 == pytest.approx(m.f1[0])


@pytest.mark.parametrize("seed", range(50))
def test_metrics_agree_with_recount(seed):
    rng = np.random.default_rng(seed)
    c = int(rng.integers(2, 7))
    n = int(rng.integers(5, 80))
    pred, true = rng.integers(0, c, n), rng.integers(0, c, n)
    mask = rng.random(n) < 0.7
    mask[0] = True
    m = compute_metrics(pred, true, mask, c)
    cm = recount(pred, true, mask, c)
    assert m.confusion == cm
    assert m.accuracy == sum(cm[k][k] for k in range(c)) / sum(map(sum, cm))
    assert [sum(r) for r in m.confusion] == m.support
    again = metrics_from_confusion(m.confusion)
    assert again["accuracy"] == m.accuracy and again["macro_f1"] == m.macro_f1


def test_metrics_json_round_trip():
    m = compute_metrics([0, 1, 1], [0, 1, 0], n_classes=2)
    d = json.loads(json.dumps(m.to_dict()))
    assert set(d) >= {"accuracy", "macro_f1", "weighted_f1", "per_class", "confusion", "wall_time_seconds"}
    assert MetricsReport.from_dict(d) == m


def test_heatmap_layers_split_columns():
    layers = heatmap_layers(np.array([[0.7, 0.3]]), table([0], [0]), SPEC, ["THEFT", "NARCOTICS"])
    assert [l.values.tolist() for l in layers] == [[0.7], [0.3]]
    proba = np.random.default_rng(0).dirichlet(np.ones(4), 30)
    layers = heatmap_layers(proba, table(np.arange(30) % 25, np.arange(30) % 20), SPEC)
    np.testing.assert_allclose(sum(l.values for l in layers), 1.0, atol=1e-12)


def test_geojson_single_cell():
    layer = heatmap_layers(np.array([[0.123456789012345678]]), table([3], [4]), SPEC)[0]
    doc = json.loads(export_geojson(layer))
    assert len(doc["features"]) == 1
    ring = doc["features"][0]["geometry"]["coordinates"][0]
    assert len(ring) == 5 and ring[0] == ring[-1]
    area2 = sum(x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in zip(ring, ring[1:]))
    assert area2 > 0  # counter-clockwise
    lons, lats = zip(*ring)
    assert min(lats) < 42.1 and min(lons) < -87.5  # [lon, lat] order
    props = doc["features"][0]["properties"]
    assert props["probability"] == 0.123456789012345678
    assert (props["row"], props["col"]) == (3, 4)


def test_geojson_shared_edges_exact():
    rows, cols = np.meshgrid(np.arange(4), np.arange(5), indexing="ij")
    cells = table(rows.ravel(), cols.ravel())
    proba = np.random.default_rng(1).random((20, 1))
    doc = json.loads(export_geojson(heatmap_layers(proba, cells, SPEC)[0]))
    assert len(doc["features"]) == 20
    rings = {(f["properties"]["row"], f["properties"]["col"]): f["geometry"]["coordinates"][0]
             for f in doc["features"]}
    for (r, c), ring in rings.items():
        if (r, c + 1) in rings:
            right = rings[(r, c + 1)]
            assert ring[1] == right[0] and ring[2] == right[3]
        if (r + 1, c) in rings:
            up = rings[(r + 1, c)]
            assert ring[3] == up[0] and ring[2] == up[1]


def test_raster_ramp_and_orientation():
    cells = table([0, 24, 5], [0, 19, 5])
    layer = heatmap_layers(np.array([[0.0], [1.0], [0.5]]), cells, SPEC)[0]
    img = read_ppm(export_raster(layer, "note"))
    assert img.shape == (25, 20, 3)
    assert img[24, 0].tolist() == [0, 0, 255]      # row 0 is the bottom line
    assert img[0, 19].tolist() == [255, 0, 0]
    assert img[10, 10].tolist() == [128, 128, 128]


def test_raster_uniform_and_rank_agreement():
    rows, cols = np.meshgrid(np.arange(25), np.arange(20), indexing="ij")
    cells = table(rows.ravel()[:60], cols.ravel()[:60])
    img = read_ppm(export_raster(heatmap_layers(np.full((60, 1), 0.4), cells, SPEC)[0]))
    occupied = img[25 - 1 - cells.rows, cells.cols]
    assert len({tuple(p) for p in occupied.tolist()}) == 1

    probs = np.linspace(0.0, 1.0, 60)[np.random.default_rng(2).permutation(60)]
    layer = heatmap_layers(probs[:, None], cells, SPEC)[0]
    img = read_ppm(export_raster(layer))
    red = img[25 - 1 - cells.rows, cells.cols, 0].astype(int)
    gj = json.loads(export_geojson(layer))
    gj_probs = [f["properties"]["probability"] for f in gj["features"]]
    assert np.array_equal(np.argsort(red, kind="stable"), np.argsort(gj_probs, kind="stable"))


def _reports():
    mask = np.array([True, True, False, True])
    y = np.array([0, 1, 1, 0])
    g = compute_metrics(np.array([0, 1, 0, 0]), y, mask, 2)
    s = compute_metrics(np.array([0, 0, 0, 0]), y, mask, 2)
    return g, s, KdeRecord(0.8, 1.5, 0.2, 0.4)


def test_comparison_report():
    g, s, k = _reports()
    text, payload = comparison_report(g, s, k)
    rows = [l for l in text.splitlines() if l.split()[:1] in (["GCN"], ["SVM"], ["KDE"])]
    assert len(rows) == 3
    for m in payload["methods"]:
        assert f"{m['accuracy']:.4f}" in text
    assert comparison_report(g, s, k) == (text, payload)


def test_comparison_rejects_different_masks():
    g, _, k = _reports()
    other = compute_metrics(np.array([0, 0, 0, 0]), np.array([0, 1, 1, 0]), np.ones(4, bool), 2)
    with pytest.raises(ValueError):
        comparison_report(g, other, k)
