"""Losses, the combined training step and the epoch driver.

Epochs are ``steps_per_epoch`` generator batches (by default enough to
consume about m supervised loops). After each epoch the validation RMSE is
measured with a fixed subsample of labelled anchors; it drives a plateau
learning-rate decay, realised as a multiplicative scale on the Adadelta
step, and early stopping.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TrainingError, UsageError
from .inference import batch_rmse
from .loops import LoopSampler, parse_loop_types
from .nn import AdadeltaState, adadelta_step, backward, forward


@dataclass
class TrainConfig:
    lam: float = 0.0
    batch_size: int = 16
    max_epochs: int = 2000
    steps_per_epoch: int = None
    lr_decay_factor: float = 0.5
    lr_decay_patience: int = 50
    early_stop_patience: int = 150
    restore_best: bool = True
    val_anchors: int = 64
    loop_types: frozenset = None
    seed: int = 0
    rho: float = 0.95
    epsilon: float = 1e-6
    base_lr: float = 1.0

    def __post_init__(self):
        if not self.lam >= 0 or not math.isfinite(self.lam):
            raise ConfigError(f"loop weight must be finite and >= 0, got {self.lam}")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigError(f"batch_size must be even and >= 2, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ConfigError("steps_per_epoch must be >= 1")
        if not 0 < self.lr_decay_factor < 1:
            raise ConfigError("lr_decay_factor must lie in (0, 1)")
        if self.lr_decay_patience < 1 or self.early_stop_patience < 1:
            raise ConfigError("callback patience must be >= 1")
        self.loop_types = parse_loop_types(self.loop_types)

    def epoch_steps(self, n_labelled):
        if self.steps_per_epoch is not None:
            return self.steps_per_epoch
        return max(1, math.ceil(n_labelled / (self.batch_size // 2)))


@dataclass
class TrainTrace:
    sup_loss: list = field(default_factory=list)
    loop_loss: list = field(default_factory=list)
    val_rmse: list = field(default_factory=list)
    lr_scale: list = field(default_factory=list)
    best_epoch: int = None

    def __len__(self):
        return len(self.val_rmse)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "sup_loss", "loop_loss", "val_rmse", "lr_scale"])
            for e, row in enumerate(zip(self.sup_loss, self.loop_loss, self.val_rmse, self.lr_scale)):
                w.writerow([e, *(repr(float(v)) for v in row)])


@dataclass
class StepLosses:
    total: float
    sup: float
    loop: float


def _as_triples(preds):
    if isinstance(preds, np.ndarray):
        arr = np.asarray(preds, dtype=np.float64)
    else:
        arr = np.array([[p.f_ij, p.f_jk, p.f_ki] if hasattr(p, "f_ij") else p for p in preds],
                       dtype=np.float64)
    return arr.reshape(-1, 3)


def mse_pair_loss(preds, diff_labels):
    """Mean squared residual over all 3 * n (prediction, difference label) pairs."""
    p = _as_triples(preds)
    if any(v is None for row in np.asarray(diff_labels, dtype=object).reshape(-1, 3) for v in row):
        raise UsageError("supervised loss needs every difference label (type-A loops only)")
    d = np.asarray(diff_labels, dtype=np.float64).reshape(-1, 3)
    if d.shape != p.shape:
        raise UsageError(f"{p.shape[0]} predicted loops but {d.shape[0]} labelled loops")
    if p.size == 0:
        return 0.0
    return float(np.mean((p - d) ** 2))


def loop_loss(preds):
    """Mean over loops of (f_ij + f_jk + f_ki)^2."""
    p = _as_triples(preds)
    if p.size == 0:
        return 0.0
    return float(np.mean(p.sum(axis=1) ** 2))


def _pair_indices(triples):
    return triples.ravel(), triples[:, [1, 2, 0]].ravel()


def loss_and_grads(model, batch, X, y, lam):
    """Combined loss of one batch and its gradient wrt the model parameters.

    Both halves go through a single shared-weight forward pass. At
    ``lam == 0`` the unsupervised half is ignored entirely.
    """
    sup = batch.supervised
    unsup = batch.unsupervised if lam > 0 else batch.unsupervised[:0]
    ns, nu = len(sup), len(unsup)
    tri = np.concatenate([sup, unsup]) if nu else sup
    left, right = _pair_indices(tri)
    pairs = np.hstack([X[left], X[right]])
    out, cache = forward(model.params, pairs, check_finite=False)
    out = out.reshape(-1, 3)
    g = np.zeros_like(out)

    sup_loss = 0.0
    if ns:
        resid = out[:ns] - batch.supervised_diffs(y)
        sup_loss = float(np.mean(resid**2))
        g[:ns] = (2.0 / resid.size) * resid
    loop_l = 0.0
    if nu:
        s = out[ns:].sum(axis=1)
        loop_l = float(np.mean(s**2))
        g[ns:] = ((2.0 * lam / nu) * s)[:, None]
    total = sup_loss + lam * loop_l
    if not math.isfinite(total):
        raise TrainingError(f"non-finite loss (supervised {sup_loss}, loop {loop_l})")
    grads = backward(model.params, cache, g.ravel())
    return StepLosses(total, sup_loss, loop_l), grads


def combined_step(model, batch, X, y, config, state, lr_scale=1.0):
    """One Adadelta update on loss_MSE + lam * loss_loop; returns the losses."""
    losses, grads = loss_and_grads(model, batch, X, y, config.lam)
    adadelta_step(model.params, grads, state, lr_scale)
    return losses


def _seeds(seed):
    sampler_ss, anchor_ss = np.random.SeedSequence(seed).spawn(2)
    return sampler_ss, np.random.default_rng(anchor_ss)


def train(model, split, X, y, config, on_epoch=None):
    """Train ``model`` in place and return ``(model, TrainTrace)``.

    ``X`` holds the (normalised) features of every row and ``y`` the labels;
    only labels of ``split.labelled_train`` enter a loss. Validation labels
    are read solely to compute the callback signal. ``on_epoch(epoch, model,
    trace)`` is called after each epoch.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    labelled = np.asarray(split.labelled_train, dtype=np.int64)
    val = np.asarray(split.unlabelled_val, dtype=np.int64)
    trace = TrainTrace()
    if config.max_epochs == 0:
        return model, trace
    if len(val) == 0:
        raise UsageError("training needs a non-empty validation set for its callbacks")

    sampler_ss, anchor_rng = _seeds(config.seed)
    sampler = LoopSampler(labelled, split.unlabelled_pool, sampler_ss, config.loop_types)
    semi = config.lam > 0
    n_anchor = min(len(labelled), config.val_anchors)
    anchors = np.sort(anchor_rng.choice(labelled, size=n_anchor, replace=False))
    ax, ay, vx, vy = X[anchors], y[anchors], X[val], y[val]

    state = AdadeltaState.for_params(
        model.params, rho=config.rho, epsilon=config.epsilon, base_lr=config.base_lr
    )
    steps = config.epoch_steps(len(labelled))
    lr_scale = 1.0
    best, best_flat = math.inf, None
    wait = plateau = 0
    for epoch in range(config.max_epochs):
        sup_sum = loop_sum = 0.0
        for _ in range(steps):
            batch = sampler.sample(config.batch_size, with_unsupervised=semi)
            losses = combined_step(model, batch, X, y, config, state, lr_scale)
            sup_sum += losses.sup
            loop_sum += losses.loop
        v = batch_rmse(model, vx, vy, ax, ay)
        trace.sup_loss.append(sup_sum / steps)
        trace.loop_loss.append(loop_sum / steps)
        trace.val_rmse.append(v)
        trace.lr_scale.append(lr_scale)
        if not math.isfinite(v):
            raise TrainingError(f"validation RMSE became non-finite at epoch {epoch}")
        if v < best:
            best, wait, plateau = v, 0, 0
            trace.best_epoch = epoch
            best_flat = model.params.flat.copy()
        else:
            wait += 1
            plateau += 1
            if plateau >= config.lr_decay_patience:
                lr_scale *= config.lr_decay_factor
                plateau = 0
        if on_epoch is not None:
            on_epoch(epoch, model, trace)
        if wait >= config.early_stop_patience:
            break
    if config.restore_best and best_flat is not None:
        model.params.flat[:] = best_flat
        model.params.version += 1
    return model, trace
