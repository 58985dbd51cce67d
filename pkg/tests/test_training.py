import numpy as np
import pytest

from conftest import random_model, random_params
from helpers import central_difference, factorized_model, relative_error, scalar_loop_loss, scalar_mse
from tnnr import data
from tnnr.errors import ConfigError, UsageError
from tnnr.loops import LoopBatch, LoopSampler
from tnnr.nn import AdadeltaState, backward, forward
from tnnr.tnn import TnnModel, TriplePrediction
from tnnr.training import (
    TrainConfig, TrainTrace, combined_step, loop_loss, loss_and_grads, mse_pair_loss, train,
)


def test_mse_zero_when_exact():
    d = np.array([[1.0, -3.0, 2.0], [0.5, 0.5, -1.0]])
    assert mse_pair_loss(d.copy(), d) == 0.0


def test_mse_single_loop():
    assert mse_pair_loss([TriplePrediction(1.0, 0.0, 0.0)], [(0.0, 0.0, 0.0)]) == pytest.approx(1 / 3)


def test_mse_matches_scalar_oracle(rng):
    p = rng.normal(size=(13, 3))
    d = rng.normal(size=(13, 3))
    assert mse_pair_loss(p, d) == pytest.approx(scalar_mse(p.tolist(), d.tolist()), abs=1e-12)


def test_mse_rejects_missing_labels():
    with pytest.raises(UsageError):
        mse_pair_loss([[1.0, 2.0, 3.0]], [[1.0, None, 2.0]])


@pytest.mark.parametrize("preds,expected", [
    ([(1.0, 2.0, -3.0)], 0.0),
    ([(1.0, 1.0, 1.0)], 9.0),
    ([(1.0, 1.0, 1.0), (1.0, 2.0, -3.0)], 4.5),
])
def test_loop_loss_values(preds, expected):
    assert loop_loss([TriplePrediction(*p) for p in preds]) == expected


def test_loop_loss_matches_scalar_oracle(rng):
    p = rng.normal(size=(17, 3))
    assert loop_loss(p) == pytest.approx(scalar_loop_loss(p.tolist()), abs=1e-12)


def _setup(rng, n=60, d=3, seed=0):
    X = rng.normal(size=(n, d))
    y = rng.normal(size=n)
    split = data.make_split(n, "T80", seed)
    sampler = LoopSampler(split.labelled_train, split.unlabelled_pool, seed)
    return X, y, split, sampler


def _batch_loss(model, batch, X, y, lam):
    sup = batch.supervised
    unsup = batch.unsupervised
    f = lambda tri: model.predict_pairs(X[tri.ravel()], X[tri[:, [1, 2, 0]].ravel()]).reshape(-1, 3)
    total = mse_pair_loss(f(sup), batch.supervised_diffs(y))
    if lam > 0 and len(unsup):
        total += lam * loop_loss(f(unsup))
    return total


def test_combined_gradient_matches_finite_differences(backend):
    rng = np.random.default_rng(77)
    for trial in range(20):
        d = int(rng.integers(1, 4))
        hidden = tuple(int(h) for h in rng.integers(2, 7, size=2))
        model = TnnModel(random_params(rng, 2 * d, hidden), d)
        X, y, _, sampler = _setup(rng, d=d, seed=trial)
        lam = float(rng.uniform(0.1, 5.0))
        batch = sampler.sample(8)
        losses, grads = loss_and_grads(model, batch, X, y, lam)
        assert losses.total == pytest.approx(losses.sup + lam * losses.loop, abs=1e-12)
        assert losses.total == pytest.approx(_batch_loss(model, batch, X, y, lam), abs=1e-12)
        numeric = central_difference(lambda: _batch_loss(model, batch, X, y, lam), model.params.flat)
        assert relative_error(grads.flat, numeric, floor=1e-6).max() <= 1e-5


def test_lambda_zero_equals_pure_supervised_gradient(backend, rng):
    model = random_model(rng)
    X, y, _, sampler = _setup(rng)
    batch = sampler.sample(16)
    _, grads = loss_and_grads(model, batch, X, y, 0.0)

    tri = batch.supervised
    pairs = np.hstack([X[tri.ravel()], X[tri[:, [1, 2, 0]].ravel()]])
    out, cache = forward(model.params, pairs)
    resid = out - batch.supervised_diffs(y).ravel()
    ref = backward(model.params, cache, 2.0 * resid / resid.size)
    np.testing.assert_allclose(grads.flat, ref.flat, rtol=0, atol=1e-12)


def test_factorized_model_gets_no_loop_gradient(backend, rng):
    g = random_params(rng, 3, (4, 4))
    model = factorized_model(g, 3)
    X, y, _, sampler = _setup(rng)
    batch = sampler.sample(16)
    only_loops = LoopBatch(batch.supervised[:0], batch.unsupervised, batch.unsupervised_types)
    losses, grads = loss_and_grads(model, only_loops, X, y, 1e6)
    assert losses.loop < 1e-24
    assert np.abs(grads.flat).max() < 1e-6


def test_loop_loss_is_pseudo_label_mse(rng):
    # With f_jk and f_ki frozen, d/d f_ij of (f_ij + f_jk + f_ki)^2 equals the
    # gradient of (f_ij - t)^2 for t = -(f_jk + f_ki).
    model = random_model(rng)
    X = rng.normal(size=(3, 3))
    tri = np.array([[0, 1, 2]])
    pairs = np.hstack([X[tri.ravel()], X[tri[:, [1, 2, 0]].ravel()]])
    out, cache = forward(model.params, pairs)
    s = out.sum()
    g_loop = backward(model.params, cache, np.array([2 * s, 0.0, 0.0]))
    target = -(out[1] + out[2])
    g_mse = backward(model.params, cache, np.array([2 * (out[0] - target), 0.0, 0.0]))
    np.testing.assert_allclose(g_loop.flat, g_mse.flat, rtol=1e-12, atol=1e-15)


def test_combined_step_updates_params(backend, rng):
    model = random_model(rng)
    X, y, _, sampler = _setup(rng)
    before = model.params.flat.copy()
    cfg = TrainConfig(lam=1.0)
    state = AdadeltaState.for_params(model.params)
    losses = combined_step(model, sampler.sample(16), X, y, cfg, state)
    assert losses.total > 0
    assert not np.array_equal(before, model.params.flat)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(lam=-1)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=15)
    with pytest.raises(ConfigError):
        TrainConfig(lr_decay_factor=1.0)
    assert TrainConfig().epoch_steps(800) == 100
    assert TrainConfig().epoch_steps(3) == 1
    assert TrainConfig(steps_per_epoch=7).epoch_steps(800) == 7


def _tf_problem(n=120, seed=0):
    ds = data.gen_test_function(n, seed=seed)
    split = data.make_split(ds, "T80", seed=seed)
    norm = data.fit_normalizer(ds, split.labelled_train)
    return ds, split, data.apply_normalizer(norm, ds.features)


def test_zero_epochs_returns_initial_model():
    ds, split, X = _tf_problem()
    model = TnnModel.create(2, hidden_dims=(8,), seed=1)
    before = model.params.flat.copy()
    out, trace = train(model, split, X, ds.labels, TrainConfig(max_epochs=0))
    assert out is model and np.array_equal(model.params.flat, before)
    assert len(trace) == 0 and trace.best_epoch is None


@pytest.mark.parametrize("seed", range(5))
def test_training_reduces_loss(seed):
    ds, split, X = _tf_problem(seed=seed)
    model = TnnModel.create(2, hidden_dims=(16, 16), seed=seed)
    _, trace = train(model, split, X, ds.labels, TrainConfig(max_epochs=30, seed=seed))
    assert trace.sup_loss[-1] < trace.sup_loss[0]


def test_trace_invariants_and_restore_best(tmp_path):
    ds, split, X = _tf_problem()
    model = TnnModel.create(2, hidden_dims=(16, 16), seed=2)
    snapshots = {}

    def keep(epoch, m, trace):
        snapshots[epoch] = m.params.flat.copy()

    cfg = TrainConfig(lam=0.5, max_epochs=40, seed=3, lr_decay_patience=3, early_stop_patience=8)
    _, trace = train(model, split, X, ds.labels, cfg, on_epoch=keep)
    n = len(trace)
    assert len(trace.sup_loss) == len(trace.loop_loss) == len(trace.lr_scale) == n
    assert trace.val_rmse[trace.best_epoch] == min(trace.val_rmse)
    assert np.array_equal(model.params.flat, snapshots[trace.best_epoch])
    assert all(b <= a for a, b in zip(trace.lr_scale, trace.lr_scale[1:]))
    trace.to_csv(tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "epoch,sup_loss,loop_loss,val_rmse,lr_scale"
    assert len(lines) == n + 1


def test_early_stopping_on_constant_labels():
    ds, split, X = _tf_problem()
    y = np.full(ds.n_rows, 2.5)
    model = TnnModel.create(2, hidden_dims=(8,), seed=0)
    # constant labels: the all-anchor prediction is exact from epoch 0 up to tiny
    # network offsets, so validation stops improving almost at once.
    cfg = TrainConfig(max_epochs=500, seed=0, early_stop_patience=1)
    _, trace = train(model, split, X, y, cfg)
    assert len(trace) < 50


def test_lambda_zero_ignores_unlabelled_pool():
    ds, split, X = _tf_problem()
    cfg = TrainConfig(lam=0.0, max_epochs=5, seed=9)
    a, _ = train(TnnModel.create(2, hidden_dims=(8, 8), seed=4), split, X, ds.labels, cfg)
    shrunk = data.SplitAssignment(split.labelled_train, split.unlabelled_val,
                                  split.unlabelled_test_transductive[:1], split.inductive_test, 0)
    X2 = X.copy()
    X2[split.unlabelled_test_transductive] = 123.0
    b, _ = train(TnnModel.create(2, hidden_dims=(8, 8), seed=4), shrunk, X2, ds.labels, cfg)
    assert np.array_equal(a.params.flat, b.params.flat)


def test_empty_validation_rejected():
    ds, split, X = _tf_problem()
    bad = data.SplitAssignment(split.labelled_train, split.unlabelled_val[:0],
                               split.unlabelled_test_transductive, split.inductive_test, 0)
    with pytest.raises(UsageError):
        train(TnnModel.create(2, hidden_dims=(4,)), bad, X, ds.labels, TrainConfig(max_epochs=1))


def test_trace_default_is_empty():
    assert len(TrainTrace()) == 0
