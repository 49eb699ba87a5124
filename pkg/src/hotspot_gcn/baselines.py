"""KDE hotspot baseline and one-vs-rest kernel SVM baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .geo import haversine_km_array

DEFAULT_BANDWIDTHS_KM = (0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0)


@dataclass
class KdeModel:
    sample_lat: np.ndarray
    sample_lon: np.ndarray
    bandwidth_km: float
    bandwidth_grid: tuple[float, ...]
    cv_folds: int
    cv_scores: tuple[float, ...]  # mean held-out log-likelihood per candidate


def _pairwise_sq_km(lat_a, lon_a, lat_b, lon_b) -> np.ndarray:
    d = haversine_km_array(np.asarray(lat_a)[:, None], np.asarray(lon_a)[:, None],
                           np.asarray(lat_b)[None, :], np.asarray(lon_b)[None, :])
    return d * d


def _log_density(sq_km: np.ndarray, h: float) -> np.ndarray:
    """log of the mean 2-D Gaussian kernel along axis 1."""
    n = sq_km.shape[1]
    return logsumexp(-sq_km / (2 * h * h), axis=1) - math.log(n) - math.log(2 * math.pi * h * h)


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    perm = np.random.default_rng(seed).permutation(n)
    out = np.empty(n, dtype=np.int64)
    out[perm] = np.arange(n) % folds
    return out


def cv_log_likelihood(lat, lon, bandwidths, folds: int, seed: int) -> np.ndarray:
    """Mean held-out log-likelihood for each candidate bandwidth."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    fold = fold_assignment(len(lat), folds, seed)
    totals = np.zeros(len(bandwidths))
    for f in range(folds):
        held = fold == f
        sq = _pairwise_sq_km(lat[held], lon[held], lat[~held], lon[~held])
        for k, h in enumerate(bandwidths):
            totals[k] += _log_density(sq, h).sum()
    return totals / len(lat)


def kde_fit(lat, lon, bandwidth_grid=DEFAULT_BANDWIDTHS_KM, cv_folds: int = 5, seed: int = 0,
            max_samples: int = 100_000, cv_max_samples: int = 2_000) -> KdeModel:
    """Pick the bandwidth with the best k-fold held-out log-likelihood.

    Events are subsampled (seeded, uniform) to ``max_samples`` for the model
    and to ``cv_max_samples`` for the cross-validation. Ties go to the
    smaller bandwidth.
    """
    grid = tuple(sorted(float(h) for h in bandwidth_grid))
    if not grid:
        raise ValueError("bandwidth grid is empty")
    if any(h <= 0 for h in grid):
        raise ValueError("bandwidths must be positive")
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if len(lat) < cv_folds:
        raise ValueError(f"need at least {cv_folds} events for {cv_folds}-fold CV")
    rng = np.random.default_rng(seed)
    if len(lat) > max_samples:
        keep = np.sort(rng.choice(len(lat), max_samples, replace=False))
        lat, lon = lat[keep], lon[keep]
    if len(grid) == 1:
        return KdeModel(lat, lon, grid[0], grid, cv_folds, (math.nan,))
    cv_lat, cv_lon = lat, lon
    if len(lat) > cv_max_samples:
        keep = np.sort(rng.choice(len(lat), cv_max_samples, replace=False))
        cv_lat, cv_lon = lat[keep], lon[keep]
    scores = cv_log_likelihood(cv_lat, cv_lon, grid, cv_folds, seed)
    # argmax takes the first of equal scores -> smallest bandwidth
    best = int(np.argmax(scores))
    return KdeModel(lat, lon, grid[best], grid, cv_folds, tuple(float(s) for s in scores))


def kde_density(model: KdeModel, lat, lon, chunk: int = 256) -> np.ndarray:
    """Density (per km^2) at each query point."""
    lat = np.atleast_1d(np.asarray(lat, dtype=float))
    lon = np.atleast_1d(np.asarray(lon, dtype=float))
    h = model.bandwidth_km
    out = np.empty(len(lat))
    norm = 1.0 / (2 * math.pi * h * h * len(model.sample_lat))
    for s in range(0, len(lat), chunk):
        sq = _pairwise_sq_km(lat[s:s + chunk], lon[s:s + chunk], model.sample_lat, model.sample_lon)
        out[s:s + chunk] = np.exp(-sq / (2 * h * h)).sum(axis=1) * norm
    return out


def top_fraction_mask(values, q: float) -> np.ndarray:
    """Mark the ceil(q*n) largest values; equal values rank by index."""
    values = np.asarray(values, dtype=float)
    k = math.ceil(q * len(values))
    order = np.lexsort((np.arange(len(values)), -values))
    mask = np.zeros(len(values), dtype=bool)
    mask[order[:k]] = True
    return mask


def kde_hotspot_classify(density, actual_counts, q: float = 0.2):
    """Compare top-q density cells with top-q count cells.

    Returns (predicted mask, truth mask, accuracy).
    """
    if not 0 < q < 1:
        raise ValueError("q must be in (0, 1)")
    pred = top_fraction_mask(density, q)
    truth = top_fraction_mask(actual_counts, q)
    return pred, truth, float(np.mean(pred == truth))


@dataclass
class SvmModel:
    dual_coef: np.ndarray     # (n_classes, n_train): alpha_j * y_j / (lambda * T)
    train_features: np.ndarray
    gamma: float
    lam: float
    iterations: int

    @property
    def n_classes(self) -> int:
        return self.dual_coef.shape[0]


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def pegasos_binary(K: np.ndarray, y: np.ndarray, lam: float, order: np.ndarray) -> np.ndarray:
    """Kernelized Pegasos on labels y in {-1, +1}; returns the support counts alpha.

    ``order`` is the sequence of sample indices visited, one per iteration.
    """
    n = len(y)
    alpha = np.zeros(n)
    # g[i] = sum_j alpha_j y_j K(j, i)
    g = np.zeros(n)
    for t, i in enumerate(order, start=1):
        if y[i] * g[i] / (lam * t) < 1.0:
            alpha[i] += 1.0
            g += y[i] * K[:, i]
    return alpha


def svm_train(features, labels, train_mask, n_classes: int, gamma: float | None = None,
              lam: float | None = None, iterations: int | None = None, seed: int = 0) -> SvmModel:
    """One-vs-rest RBF SVM on the training nodes.

    Defaults: gamma = 1 / n_features, lambda = 1 / n_train (C = 1),
    iterations = 50 * n_train. Every class reuses the same visiting order.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    mask = np.asarray(train_mask, dtype=bool)
    Xt, yt = X[mask], y[mask]
    if len(Xt) == 0:
        raise ValueError("training mask is empty")
    if len(np.unique(yt)) < 2:
        raise ValueError("SVM needs at least two classes in the training set")
    n = len(Xt)
    gamma = 1.0 / X.shape[1] if gamma is None else gamma
    lam = 1.0 / n if lam is None else lam
    iterations = 50 * n if iterations is None else iterations
    K = rbf_kernel(Xt, Xt, gamma)
    order = np.random.default_rng(seed).integers(0, n, size=iterations)
    coef = np.zeros((n_classes, n))
    for c in range(n_classes):
        yc = np.where(yt == c, 1.0, -1.0)
        alpha = pegasos_binary(K, yc, lam, order)
        coef[c] = alpha * yc / (lam * iterations)
    return SvmModel(coef, Xt, gamma, lam, iterations)


def svm_decision(model: SvmModel, features) -> np.ndarray:
    """(n_samples, n_classes) one-vs-rest decision values."""
    return rbf_kernel(features, model.train_features, model.gamma) @ model.dual_coef.T


def svm_predict(model: SvmModel, features) -> np.ndarray:
    return argmax_lowest(svm_decision(model, features))


def argmax_lowest(values) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest column."""
    return np.argmax(np.asarray(values), axis=1)
