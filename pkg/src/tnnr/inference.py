"""Anchor-ensemble predictions of the original targets.

For a query x and labelled anchors (x_j, y_j) each anchor gives the estimate
e_j = F(x, x_j)/2 - F(x_j, x)/2 + y_j; the prediction is the mean of the
e_j and the uncertainty their population standard deviation.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UsageError

# Queries x anchors evaluated per block; bounds peak memory.
BLOCK_PAIRS = 1 << 18


@dataclass
class PredictionSummary:
    mean: float
    std: float
    n_anchors: int
    per_anchor: np.ndarray = None


def _anchor_arrays(model, anchor_x, anchor_y):
    ax = np.atleast_2d(np.asarray(anchor_x, dtype=np.float64))
    ay = np.asarray(anchor_y, dtype=np.float64).ravel()
    if ay.size == 0 or ax.shape[0] == 0:
        raise UsageError("ensemble prediction needs at least one anchor")
    if ax.shape != (ay.size, model.feature_dim):
        raise DimensionError(
            f"anchors must be ({ay.size}, {model.feature_dim}), got {ax.shape}"
        )
    return ax, ay


def anchor_estimates(model, queries, anchor_x, anchor_y):
    """Matrix of per-anchor estimates, shape ``(n_queries, n_anchors)``."""
    ax, ay = _anchor_arrays(model, anchor_x, anchor_y)
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if q.shape[1] != model.feature_dim:
        raise DimensionError(f"queries must have {model.feature_dim} columns, got {q.shape[1]}")
    nq, m = q.shape[0], ay.size
    stacked = np.vstack([q, ax])
    out = np.empty((nq, m))
    block = max(1, BLOCK_PAIRS // m)
    anchor_idx = np.arange(nq, nq + m, dtype=np.int64)
    for start in range(0, nq, block):
        stop = min(start + block, nq)
        qi = np.repeat(np.arange(start, stop, dtype=np.int64), m)
        aj = np.tile(anchor_idx, stop - start)
        fwd = model.evaluate_indexed(stacked, qi, aj).reshape(stop - start, m)
        rev = model.evaluate_indexed(stacked, aj, qi).reshape(stop - start, m)
        out[start:stop] = 0.5 * fwd - 0.5 * rev + ay
    return out


def ensemble_predict(model, x, anchor_x, anchor_y, keep_per_anchor=True):
    est = anchor_estimates(model, np.asarray(x, dtype=np.float64).reshape(1, -1), anchor_x, anchor_y)[0]
    return PredictionSummary(
        mean=float(est.mean()),
        std=float(est.std()),
        n_anchors=est.size,
        per_anchor=est if keep_per_anchor else None,
    )


def predict_many(model, queries, anchor_x, anchor_y):
    """Means and standard deviations for every query row."""
    est = anchor_estimates(model, queries, anchor_x, anchor_y)
    return est.mean(axis=1), est.std(axis=1)


def batch_rmse(model, rows_x, rows_y, anchor_x, anchor_y):
    rows_y = np.asarray(rows_y, dtype=np.float64).ravel()
    if rows_y.size == 0:
        raise UsageError("RMSE of an empty row set")
    pred, _ = predict_many(model, rows_x, anchor_x, anchor_y)
    return float(np.sqrt(np.mean((pred - rows_y) ** 2)))


def write_predictions(path, means, stds, n_anchors, row_ids=None):
    """CSV with columns row_id, y_pred, y_std, n_anchors."""
    if row_ids is None:
        row_ids = range(len(means))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_id", "y_pred", "y_std", "n_anchors"])
        for rid, mu, sd in zip(row_ids, means, stds):
            w.writerow([rid, repr(float(mu)), repr(float(sd)), n_anchors])
