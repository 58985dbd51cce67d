"""Repeated-split experiments over a grid of loop weights.

Every repeat index fixes one random split and one training seed; all loop
weights of that repeat reuse both, so the Lambda = 0 cell is the supervised
baseline for exactly the same data and initial weights.

Report JSON (``schema_version`` 1) is the nested form of
:meth:`ExperimentReport.to_dict`. The CSV form has one row per
(dataset, lambda, role) with columns
``dataset, regime, lambda, role, mean_rmse, se_rmse, n_repeats``; roles are
``train``, ``val``, ``test`` (transductive) and, for T30, ``inductive``.
"""
import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import _backend, data as data_mod
from .errors import ConfigError, UsageError
from .inference import batch_rmse
from .loops import parse_loop_types
from .tnn import TnnModel
from .training import TrainConfig, train

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LOOP_WEIGHT_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1, 2, 5, 10, 20, 50, 100, 200, 500)
DEFAULT_GRID = (0.0, *LOOP_WEIGHT_GRID)
WORKERS_ENV = "TNNR_WORKERS"

_SPLIT_TAG, _TRAIN_TAG = 1, 2


def derive_seed(base_seed, tag, repeat):
    """64-bit seed for stream ``tag`` of repeat ``repeat``."""
    ss = np.random.SeedSequence([int(base_seed), int(tag), int(repeat)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class SweepSpec:
    dataset: str
    regime: str = "T80"
    lambda_grid: tuple = DEFAULT_GRID
    n_repeats: int = 25
    base_seed: int = 0
    loop_types: str = None
    max_epochs: int = 2000
    batch_size: int = 16
    hidden_dims: tuple = (192, 192)
    n_rows: int = None
    data_seed: int = 0
    target: str = None
    selection: str = "mean"
    workers: int = None
    partial_path: str = None
    cache_dir: str = None

    def __post_init__(self):
        self.regime = str(self.regime).upper()
        self.lambda_grid = tuple(float(v) for v in self.lambda_grid)
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if not self.lambda_grid:
            raise ConfigError("lambda_grid must not be empty")
        if any(not (v >= 0 and math.isfinite(v)) for v in self.lambda_grid):
            raise ConfigError("lambda_grid entries must be finite and non-negative")
        if list(self.lambda_grid) != sorted(set(self.lambda_grid)):
            raise ConfigError("lambda_grid must be sorted and free of duplicates")
        if self.n_repeats < 1:
            raise ConfigError("n_repeats must be >= 1")
        if self.selection not in ("mean", "per_repeat"):
            raise ConfigError("selection must be 'mean' or 'per_repeat'")
        if self.regime not in data_mod.REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}")
        if self.loop_types is not None:
            self.loop_types = "".join(sorted(t.value for t in parse_loop_types(self.loop_types)))

    @property
    def roles(self):
        return ("train", "val", "test", "inductive") if self.regime == "T30" else ("train", "val", "test")


@dataclass
class CellResult:
    lam: float
    repeat: int
    rmse: dict
    epochs: int
    best_epoch: int
    split_hash: str


@dataclass
class LambdaSummary:
    lam: float
    mean: dict
    se: dict


@dataclass
class ExperimentReport:
    dataset: str
    regime: str
    lambda_grid: list
    n_repeats: int
    base_seed: int
    loop_types: str
    selection: str
    config: dict
    cells: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    selected_lambda: float = None
    selected_per_repeat: list = None
    headline: dict = field(default_factory=dict)
    partial: bool = False
    schema_version: int = SCHEMA_VERSION

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')}")
        d["cells"] = [CellResult(**c) for c in d.get("cells", [])]
        d["summary"] = [LambdaSummary(**s) for s in d.get("summary", [])]
        return cls(**d)

    def summary_for(self, lam):
        for s in self.summary:
            if s.lam == lam:
                return s
        raise KeyError(lam)


@lru_cache(maxsize=4)
def _load_dataset(dataset, n_rows, data_seed, target):
    key = data_mod.canonical_key(dataset)
    if key in data_mod.GENERATORS and not os.path.exists(dataset):
        return data_mod.generate(key, n_rows, data_seed)
    stem = os.path.splitext(os.path.basename(dataset))[0]
    name = data_mod.canonical_key(stem)
    return data_mod.load_csv(dataset, name=name if name in data_mod.KNOWN_SIZES else None,
                             target=target)


def resolve_dataset(spec):
    return _load_dataset(spec.dataset, spec.n_rows, spec.data_seed, spec.target)


def prepare_repeat(spec, repeat):
    """Split, normalised features and training seed for one repeat index."""
    ds = resolve_dataset(spec)
    split = data_mod.make_split(ds.n_rows, spec.regime, derive_seed(spec.base_seed, _SPLIT_TAG, repeat))
    norm = data_mod.fit_normalizer(ds, split.labelled_train)
    X = data_mod.apply_normalizer(norm, ds.features)
    return ds, split, norm, X, derive_seed(spec.base_seed, _TRAIN_TAG, repeat)


def train_config(spec, lam, seed):
    return TrainConfig(lam=lam, batch_size=spec.batch_size, max_epochs=spec.max_epochs,
                       loop_types=spec.loop_types, seed=seed)


def evaluate_split(model, split, X, y, roles):
    """Full-anchor RMSE for each split role."""
    L = split.labelled_train
    rows = {
        "train": L,
        "val": split.unlabelled_val,
        "test": split.unlabelled_test_transductive,
        "inductive": split.inductive_test,
    }
    return {r: batch_rmse(model, X[rows[r]], y[rows[r]], X[L], y[L]) for r in roles}


def run_cell(spec, lam, repeat, on_epoch=None):
    ds, split, _, X, seed = prepare_repeat(spec, repeat)
    model = TnnModel.create(ds.n_features, spec.hidden_dims, seed=seed)
    model, trace = train(model, split, X, ds.labels, train_config(spec, lam, seed), on_epoch=on_epoch)
    rmse = evaluate_split(model, split, X, ds.labels, spec.roles)
    best = -1 if trace.best_epoch is None else trace.best_epoch
    return CellResult(lam, repeat, rmse, len(trace), best, split.fingerprint())


@lru_cache(maxsize=1)
def _source_fingerprint():
    h = hashlib.sha256()
    pkg = os.path.dirname(os.path.abspath(__file__))
    for name in sorted(os.listdir(pkg)):
        if name.endswith((".py", ".pyx")):
            h.update(name.encode())
            with open(os.path.join(pkg, name), "rb") as fh:
                h.update(fh.read())
    return h.hexdigest()


def _dataset_fingerprint(ds):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(ds.features, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(ds.labels, dtype=np.float64).tobytes())
    return h.hexdigest()


def cell_key(spec, lam, repeat):
    """Content hash of everything that determines one cell's result.

    Covers the data values, split and training settings, the package
    source and the active kernel backend, so a cached cell is never reused
    after a code change.
    """
    fields = {
        "data": _dataset_fingerprint(resolve_dataset(spec)),
        "regime": spec.regime,
        "base_seed": spec.base_seed,
        "loop_types": spec.loop_types,
        "max_epochs": spec.max_epochs,
        "batch_size": spec.batch_size,
        "hidden_dims": list(spec.hidden_dims),
        "lam": float(lam),
        "repeat": int(repeat),
        "source": _source_fingerprint(),
        "backend": _backend.kernels.BACKEND,
    }
    return hashlib.sha256(json.dumps(fields, sort_keys=True).encode()).hexdigest()[:32]


def _cell_job(args):
    spec, lam, repeat = args
    if not spec.cache_dir:
        return run_cell(spec, lam, repeat)
    path = os.path.join(spec.cache_dir, cell_key(spec, lam, repeat) + ".json")
    if os.path.exists(path):
        with open(path) as fh:
            return CellResult(**json.load(fh))
    cell = run_cell(spec, lam, repeat)
    os.makedirs(spec.cache_dir, exist_ok=True)
    tmp = f"{path}.{os.getpid()}.tmp"
    with open(tmp, "w") as fh:
        json.dump(asdict(cell), fh, sort_keys=True)
    os.replace(tmp, path)
    return cell


def _limit_blas_threads():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return
    threadpool_limits(1)


def worker_count(spec):
    if spec.workers is not None:
        return max(1, int(spec.workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return 1


def _stats(values):
    v = np.asarray(values, dtype=np.float64)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def aggregate(spec, cells):
    """Per-lambda means and standard errors, lambda selection and gains."""
    by_lam = {}
    for c in cells:
        by_lam.setdefault(c.lam, []).append(c)
    summary = []
    for lam in spec.lambda_grid:
        group = sorted(by_lam.get(lam, []), key=lambda c: c.repeat)
        if not group:
            continue
        mean, se = {}, {}
        for role in spec.roles:
            mean[role], se[role] = _stats([c.rmse[role] for c in group])
        summary.append(LambdaSummary(lam, mean, se))

    selected, per_repeat, headline = None, None, {}
    base = next((s for s in summary if s.lam == 0.0), None)
    semi = [s for s in summary if s.lam > 0]
    test_roles = [r for r in ("test", "inductive") if r in spec.roles]

    def gain(sup, new):
        return 0.0 if sup == 0 else (sup - new) / sup

    if spec.selection == "mean":
        if semi:
            cand = min(semi, key=lambda s: (s.mean["val"], s.lam))
            if base is not None and not cand.mean["val"] < base.mean["val"]:
                cand = base
        else:
            cand = base
        if cand is not None:
            selected = cand.lam
            for role in test_roles:
                name = "transductive" if role == "test" else "inductive"
                if base is not None:
                    headline[f"supervised_{role}"] = [base.mean[role], base.se[role]]
                headline[f"{name}_{role}"] = [cand.mean[role], cand.se[role]]
                headline[f"gain_{name}"] = (
                    gain(base.mean[role], cand.mean[role]) if base is not None else None
                )
    else:
        repeats = sorted({c.repeat for c in cells})
        table = {(c.lam, c.repeat): c for c in cells}
        per_repeat = []
        chosen = []
        for r in repeats:
            row = [table[(lam, r)] for lam in spec.lambda_grid if (lam, r) in table]
            b = next((c for c in row if c.lam == 0.0), None)
            s = [c for c in row if c.lam > 0]
            pick = min(s, key=lambda c: (c.rmse["val"], c.lam)) if s else b
            if b is not None and pick is not None and not pick.rmse["val"] < b.rmse["val"]:
                pick = b
            per_repeat.append(pick.lam)
            chosen.append((b, pick))
        for role in test_roles:
            name = "transductive" if role == "test" else "inductive"
            sel = _stats([p.rmse[role] for _, p in chosen])
            headline[f"{name}_{role}"] = list(sel)
            if all(b is not None for b, _ in chosen):
                sup = _stats([b.rmse[role] for b, _ in chosen])
                headline[f"supervised_{role}"] = list(sup)
                headline[f"gain_{name}"] = gain(sup[0], sel[0])
            else:
                headline[f"gain_{name}"] = None
    return summary, selected, per_repeat, headline


def _build_report(spec, cells, partial):
    cells = sorted(cells, key=lambda c: (c.lam, c.repeat))
    summary, selected, per_repeat, headline = aggregate(spec, cells)
    config = {
        "max_epochs": spec.max_epochs,
        "batch_size": spec.batch_size,
        "hidden_dims": list(spec.hidden_dims),
        "n_rows": spec.n_rows,
        "data_seed": spec.data_seed,
        "train_defaults": {
            k: v for k, v in asdict(TrainConfig()).items()
            if k not in ("lam", "seed", "loop_types", "max_epochs", "batch_size")
        },
    }
    return ExperimentReport(
        dataset=str(spec.dataset),
        regime=spec.regime,
        lambda_grid=list(spec.lambda_grid),
        n_repeats=spec.n_repeats,
        base_seed=spec.base_seed,
        loop_types=spec.loop_types or "BCD",
        selection=spec.selection,
        config=config,
        cells=cells,
        summary=summary,
        selected_lambda=selected,
        selected_per_repeat=per_repeat,
        headline=headline,
        partial=partial,
    )


def run_sweep(spec, progress=None):
    """Train and evaluate every (lambda, repeat) cell of ``spec``."""
    resolve_dataset(spec)
    jobs = [(spec, lam, r) for r in range(spec.n_repeats) for lam in spec.lambda_grid]
    cells = []
    n_workers = worker_count(spec)
    try:
        if n_workers == 1:
            for job in jobs:
                cells.append(_cell_job(job))
                if progress:
                    progress(cells[-1], len(cells), len(jobs))
        else:
            with ProcessPoolExecutor(n_workers, initializer=_limit_blas_threads) as pool:
                for cell in pool.map(_cell_job, jobs):
                    cells.append(cell)
                    if progress:
                        progress(cell, len(cells), len(jobs))
    except BaseException:
        if spec.partial_path and cells:
            emit_report(_build_report(spec, cells, partial=True), "json", spec.partial_path)
            log.error("sweep failed; %d finished cells written to %s", len(cells), spec.partial_path)
        raise
    return _build_report(spec, cells, partial=False)


def report_rows(report):
    roles = ("train", "val", "test", "inductive") if report.regime == "T30" else ("train", "val", "test")
    for s in report.summary:
        for role in roles:
            yield [report.dataset, report.regime, repr(float(s.lam)), role,
                   repr(float(s.mean[role])), repr(float(s.se[role])), report.n_repeats]


def emit_report(report, fmt, path):
    """Write ``report`` as ``json`` or ``csv``. Refuses reports without cells."""
    if not report.cells or not report.summary:
        raise UsageError("refusing to write a report with no finished cells")
    fmt = fmt.lower()
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
        with open(path, "w") as fh:
            fh.write(text)
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dataset", "regime", "lambda", "role", "mean_rmse", "se_rmse", "n_repeats"])
            w.writerows(report_rows(report))
    else:
        raise UsageError(f"unknown report format {fmt!r}")
    return path


def load_report(path):
    with open(path) as fh:
        return ExperimentReport.from_dict(json.load(fh))
