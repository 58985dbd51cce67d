"""Twin network F(x1, x2) predicting the label difference y1 - y2.

F is a plain dense network over the concatenation [x1 || x2]; nothing ties
the two halves of the first layer together and F is not forced to be
antisymmetric.

Model files are ``.npz`` archives with these entries:

``format_version``  int, currently 1
``config``          JSON string of :meth:`NetConfig.to_dict`
``feature_dim``     int
``params``          float64 vector, layers in order, each weight matrix
                    (fan_out x fan_in, row-major) followed by its bias
``norm_min``/``norm_max``   optional, feature normalisation bounds
``anchor_x``/``anchor_y``   optional, normalised labelled anchors
"""
import json
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DimensionError, LoadError
from .nn import NetConfig, NetParams, forward, init_params

FORMAT_VERSION = 1
EVAL_CHUNK = 8192


@dataclass(frozen=True)
class TriplePrediction:
    f_ij: float
    f_jk: float
    f_ki: float

    @property
    def loop_sum(self):
        return self.f_ij + self.f_jk + self.f_ki


class TnnModel:
    """Pair-input difference network for ``feature_dim``-dimensional data."""

    def __init__(self, params, feature_dim):
        if params.config.input_dim != 2 * feature_dim:
            raise DimensionError(
                f"network input_dim {params.config.input_dim} != 2 * feature_dim {feature_dim}"
            )
        self.params = params
        self.feature_dim = int(feature_dim)

    @classmethod
    def create(cls, feature_dim, hidden_dims=(192, 192), seed=0):
        config = NetConfig(2 * feature_dim, tuple(hidden_dims), seed=seed)
        return cls(init_params(config), feature_dim)

    @property
    def config(self):
        return self.params.config

    def copy(self):
        return TnnModel(self.params.copy(), self.feature_dim)

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.feature_dim:
            raise DimensionError(
                f"feature vectors must have dimension {self.feature_dim}, got {x.shape[-1]}"
            )
        return x

    def predict_pairs(self, left, right):
        """Vectorised F over row pairs ``(left[p], right[p])``."""
        left = np.atleast_2d(self._check(left))
        right = np.atleast_2d(self._check(right))
        if left.shape != right.shape:
            raise DimensionError(f"pair arrays differ in shape: {left.shape} vs {right.shape}")
        return self.evaluate(np.hstack([left, right]))

    def evaluate(self, pair_inputs):
        """F on an already concatenated ``(P, 2d)`` matrix, chunked for memory."""
        n = pair_inputs.shape[0]
        if n <= EVAL_CHUNK:
            return forward(self.params, pair_inputs)[0]
        out = np.empty(n)
        for start in range(0, n, EVAL_CHUNK):
            stop = min(start + EVAL_CHUNK, n)
            out[start:stop] = forward(self.params, pair_inputs[start:stop])[0]
        return out

    def evaluate_indexed(self, X, left, right):
        """F(X[left[p]], X[right[p]]) without materialising every pair at once."""
        k = _backend.kernels
        left = np.ascontiguousarray(left, dtype=np.int64)
        right = np.ascontiguousarray(right, dtype=np.int64)
        X = np.ascontiguousarray(X, dtype=np.float64)
        n = left.shape[0]
        out = np.empty(n)
        buf = np.empty((min(n, EVAL_CHUNK), 2 * self.feature_dim))
        for start in range(0, n, EVAL_CHUNK):
            stop = min(start + EVAL_CHUNK, n)
            pairs = buf[: stop - start]
            k.gather_pairs(X, left[start:stop], right[start:stop], pairs)
            out[start:stop] = forward(self.params, pairs, check_finite=False)[0]
        return out


def predict_pair(model, x1, x2):
    """F(x1, x2) for single feature vectors."""
    x1 = model._check(x1)
    x2 = model._check(x2)
    if x1.ndim != 1 or x2.ndim != 1:
        raise DimensionError("predict_pair expects two 1-d feature vectors")
    return float(model.evaluate(np.concatenate([x1, x2])[None, :])[0])


def predict_triple(model, x1, x2, x3):
    """(F(x1,x2), F(x2,x3), F(x3,x1)) from one shared-weight batch."""
    a = model._check(np.stack([x1, x2, x3]))
    if a.ndim != 2:
        raise DimensionError("predict_triple expects 1-d feature vectors")
    out = model.predict_pairs(a, a[[1, 2, 0]])
    return TriplePrediction(float(out[0]), float(out[1]), float(out[2]))


def save_model(model, path, norm=None, anchors=None):
    """Write ``model`` (and optionally normaliser and anchors) to ``path``."""
    payload = {
        "format_version": np.array(FORMAT_VERSION),
        "config": np.array(json.dumps(model.config.to_dict())),
        "feature_dim": np.array(model.feature_dim),
        "params": model.params.flat,
    }
    if norm is not None:
        payload["norm_min"] = norm.min
        payload["norm_max"] = norm.max
    if anchors is not None:
        ax, ay = anchors
        payload["anchor_x"] = np.asarray(ax, dtype=np.float64)
        payload["anchor_y"] = np.asarray(ay, dtype=np.float64)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_model(path):
    """Read a model file; returns ``(model, norm_or_None, anchors_or_None)``."""
    from .data import NormStats

    try:
        with np.load(path, allow_pickle=False) as z:
            version = int(z["format_version"])
            if version != FORMAT_VERSION:
                raise LoadError(f"{path}: unsupported model format version {version}")
            cfg = json.loads(str(z["config"]))
            config = NetConfig(
                cfg["input_dim"], tuple(cfg["hidden_dims"]), cfg["activation"],
                cfg["output_dim"], cfg["seed"],
            )
            model = TnnModel(NetParams(config, z["params"].copy()), int(z["feature_dim"]))
            norm = None
            if "norm_min" in z:
                norm = NormStats(z["norm_min"].copy(), z["norm_max"].copy())
            anchors = None
            if "anchor_x" in z:
                anchors = (z["anchor_x"].copy(), z["anchor_y"].copy())
    except (OSError, KeyError, ValueError) as exc:
        if isinstance(exc, LoadError):
            raise
        raise LoadError(f"{path}: cannot read model file ({exc})") from exc
    return model, norm, anchors
