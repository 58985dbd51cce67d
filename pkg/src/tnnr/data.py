"""Datasets, synthetic generators, normalisation and train/validation/test splits."""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LoadError, SplitError, UsageError

# key -> (rows, features)
KNOWN_SIZES = {
    "BC": (779, 14),
    "BH": (506, 13),
    "CS": (1030, 8),
    "EE": (768, 8),
    "RCL": (4000, 6),
    "TF": (1000, 2),
    "WN": (1599, 11),
    "WSB": (200, 4),
    "YH": (308, 6),
}
KEY_ALIASES = {"EF": "EE"}
SYNTHETIC = ("TF", "RCL", "WSB")

NOISE_STD = 0.1

# Sampling boxes for the synthetic sets, as (low, high) per feature.
TF_RANGE = (-2.0, 2.0)
RCL_RANGES = {
    "V0": (0.5, 2.0),
    "omega": (0.5, 2.0),
    "t": (0.0, 2.0 * math.pi),
    "R": (0.5, 2.0),
    "L": (0.5, 2.0),
    "C": (0.5, 2.0),
}
WSB_RANGES = {"U": (0.5, 2.0), "R1": (0.5, 2.0), "R2": (0.5, 2.0), "R3": (0.5, 2.0)}


def canonical_key(name):
    if name is None:
        return None
    key = str(name).upper()
    return KEY_ALIASES.get(key, key)


@dataclass
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    feature_names: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise LoadError(
                f"features {self.features.shape} and labels {self.labels.shape} do not line up"
            )
        if not self.feature_names:
            self.feature_names = [f"x{i + 1}" for i in range(self.features.shape[1])]

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def to_csv(self, path, target_name="y"):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*self.feature_names, target_name])
            for x, y in zip(self.features, self.labels):
                w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def load_csv(path, name=None, target=None, expected_features=None, expected_rows=None):
    """Read a headed, comma separated file of numbers.

    The target is the last column unless ``target`` names a column (or gives
    its index). When ``name`` is a known dataset key, row and feature counts
    are checked against ``KNOWN_SIZES``.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise LoadError(f"cannot open {path}: {exc}") from exc
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise LoadError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    ncol = len(header)
    if ncol < 2:
        raise LoadError(f"{path}: need at least one feature and a target column")
    if target is None:
        t_idx = ncol - 1
    elif isinstance(target, int):
        t_idx = target if target >= 0 else ncol + target
    elif target in header:
        t_idx = header.index(target)
    else:
        raise LoadError(f"{path}: target column {target!r} not in header")
    if not 0 <= t_idx < ncol:
        raise LoadError(f"{path}: target index {target} out of range")

    data = np.empty((len(rows) - 1, ncol))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != ncol:
            raise LoadError(f"{path}: row {r} has {len(row)} cells, expected {ncol}")
        for c, cell in enumerate(row):
            try:
                data[r - 2, c] = float(cell)
            except ValueError:
                raise LoadError(
                    f"{path}: non-numeric value {cell!r} at row {r}, column {c + 1} ({header[c]})"
                ) from None
            if not math.isfinite(data[r - 2, c]):
                raise LoadError(f"{path}: missing or non-finite value at row {r}, column {c + 1}")

    keep = [c for c in range(ncol) if c != t_idx]
    key = canonical_key(name)
    if key in KNOWN_SIZES:
        exp_rows, exp_feat = KNOWN_SIZES[key]
        expected_rows = exp_rows if expected_rows is None else expected_rows
        expected_features = exp_feat if expected_features is None else expected_features
    if expected_rows is not None and data.shape[0] != expected_rows:
        raise LoadError(f"{path}: expected {expected_rows} data rows for {key}, found {data.shape[0]}")
    if expected_features is not None and len(keep) != expected_features:
        raise LoadError(
            f"{path}: expected {expected_features} feature columns, found {len(keep)}"
        )
    return Dataset(
        name=key or str(path),
        features=data[:, keep],
        labels=data[:, t_idx],
        feature_names=[header[c] for c in keep],
    )


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    return int(n)


def _uniform_columns(rng, n, ranges):
    return np.column_stack([rng.uniform(lo, hi, size=n) for lo, hi in ranges])


def tf_target(x1, x2):
    return x1**3 + x1**2 - x1 - 1 + x1 * x2 + np.sin(x2)


def rcl_current(V0, omega, t, R, L, C):
    return V0 * np.cos(omega * t) / np.sqrt(R**2 + (omega * L - 1.0 / (omega * C)) ** 2)


def wheatstone_voltage(U, R1, R2, R3):
    # Three-resistor form: both ratios share R2.
    return U * (R2 / (R1 + R2) - R3 / (R2 + R3))


def gen_test_function(n=1000, seed=0):
    """Noise-free samples of x1^3 + x1^2 - x1 - 1 + x1*x2 + sin(x2)."""
    n = _check_n(n)
    rng = np.random.default_rng(seed)
    X = _uniform_columns(rng, n, [TF_RANGE, TF_RANGE])
    return Dataset("TF", X, tf_target(X[:, 0], X[:, 1]), ["x1", "x2"])


def gen_rcl(n=4000, seed=0, noise=NOISE_STD):
    """RCL circuit current with additive Gaussian label noise."""
    n = _check_n(n)
    rng = np.random.default_rng(seed)
    names = list(RCL_RANGES)
    X = _uniform_columns(rng, n, [RCL_RANGES[k] for k in names])
    y = rcl_current(*X.T) + rng.normal(0.0, noise, size=n)
    return Dataset("RCL", X, y, names)


def gen_wsb(n=200, seed=0, noise=NOISE_STD):
    """Wheatstone bridge voltage with additive Gaussian label noise."""
    n = _check_n(n)
    rng = np.random.default_rng(seed)
    names = list(WSB_RANGES)
    X = _uniform_columns(rng, n, [WSB_RANGES[k] for k in names])
    y = wheatstone_voltage(*X.T) + rng.normal(0.0, noise, size=n)
    return Dataset("WSB", X, y, names)


GENERATORS = {"TF": gen_test_function, "RCL": gen_rcl, "WSB": gen_wsb}


def generate(key, n=None, seed=0):
    key = canonical_key(key)
    if key not in GENERATORS:
        raise KeyError(f"no generator for {key!r}; synthetic sets are {', '.join(SYNTHETIC)}")
    return GENERATORS[key](KNOWN_SIZES[key][0] if n is None else n, seed)


@dataclass
class NormStats:
    """Per-column bounds taken from the labelled training rows."""

    min: np.ndarray
    max: np.ndarray

    def apply(self, rows):
        return apply_normalizer(self, rows)


def fit_normalizer(ds, train_idx):
    idx = np.asarray(train_idx, dtype=np.int64)
    if idx.size == 0:
        raise UsageError("cannot fit a normaliser on an empty training index")
    X = ds.features if isinstance(ds, Dataset) else np.asarray(ds, dtype=np.float64)
    sub = X[idx]
    return NormStats(sub.min(axis=0), sub.max(axis=0))


def apply_normalizer(stats, rows):
    """Map each column affinely so the training range becomes [-1, 1].

    Constant training columns map to 0 everywhere.
    """
    rows = np.asarray(rows, dtype=np.float64)
    span = stats.max - stats.min
    const = span == 0
    safe = np.where(const, 1.0, span)
    out = 2.0 * (rows - stats.min) / safe - 1.0
    if np.any(const):
        out[..., const] = 0.0
    return out


REGIMES = {
    # (labelled train, unlabelled val, unlabelled transductive test, inductive test)
    "T80": (0.8, 0.1, 0.1, 0.0),
    "T30": (0.3, 0.1, 0.5, 0.1),
}


@dataclass
class SplitAssignment:
    labelled_train: np.ndarray
    unlabelled_val: np.ndarray
    unlabelled_test_transductive: np.ndarray
    inductive_test: np.ndarray
    seed: int
    regime: str = "T80"

    @property
    def sizes(self):
        return (
            len(self.labelled_train),
            len(self.unlabelled_val),
            len(self.unlabelled_test_transductive),
            len(self.inductive_test),
        )

    @property
    def unlabelled_pool(self):
        """Unlabelled rows visible to training (inductive rows excluded)."""
        return np.concatenate([self.unlabelled_val, self.unlabelled_test_transductive])

    def fingerprint(self):
        import hashlib

        h = hashlib.sha256()
        for part in (self.labelled_train, self.unlabelled_val,
                     self.unlabelled_test_transductive, self.inductive_test):
            h.update(np.asarray(part, dtype=np.int64).tobytes())
            h.update(b"|")
        return h.hexdigest()


def make_split(n_rows, regime="T80", seed=0):
    """Shuffle ``range(n_rows)`` and cut it per ``regime``.

    Every part except the labelled set is ``floor(fraction * N)``; the
    labelled set takes the remainder.
    """
    if isinstance(n_rows, Dataset):
        n_rows = n_rows.n_rows
    regime = str(regime).upper()
    if regime not in REGIMES:
        raise SplitError(f"unknown regime {regime!r}; choose from {sorted(REGIMES)}")
    _, f_val, f_test, f_ind = REGIMES[regime]
    n_val = math.floor(f_val * n_rows + 1e-9)
    n_test = math.floor(f_test * n_rows + 1e-9)
    n_ind = math.floor(f_ind * n_rows + 1e-9)
    n_train = n_rows - n_val - n_test - n_ind
    if min(n_val, n_test) < 1 or n_train < 3 or (f_ind > 0 and n_ind < 1):
        raise SplitError(f"{n_rows} rows are too few for regime {regime}")
    perm = np.random.default_rng(seed).permutation(n_rows)
    cuts = np.cumsum([n_train, n_val, n_test])
    parts = np.split(perm, cuts)
    return SplitAssignment(*(np.sort(p) for p in parts), seed=seed, regime=regime)
