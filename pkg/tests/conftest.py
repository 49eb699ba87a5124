import numpy as np
import pytest

from hotspot_gcn.geo import BBox, GridSpec


def grid_centroids(n_rows, n_cols, origin=(41.6, -87.9), cell=0.02):
    r, c = np.meshgrid(np.arange(n_rows), np.arange(n_cols), indexing="ij")
    return np.column_stack([origin[0] + (r.ravel() + 0.5) * cell, origin[1] + (c.ravel() + 0.5) * cell])


def power_iteration(matvec, n, iters=2000, seed=0):
    """Largest-magnitude eigenvalue of a symmetric operator."""
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = matvec(v)
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
    return lam


def random_geo_graph(n, seed, spread=0.15):
    rng = np.random.default_rng(seed)
    return np.column_stack([41.85 + rng.uniform(-spread, spread, n), -87.7 + rng.uniform(-spread, spread, n)])


@pytest.fixture
def chicago_grid():
    return GridSpec.from_bbox(BBox())


_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): exit criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        name = marker.args[0]
        if hasattr(item, "callspec"):
            name += f" [{item.callspec.id}]"
        _ACCEPTANCE.append((status, name, rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, secs in _ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {name}  ({secs:.2f}s)")
