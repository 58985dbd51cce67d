import numpy as np
import pytest

from conftest import random_params
from helpers import factorized_model, naive_forward
from tnnr.errors import DimensionError, LoadError
from tnnr.nn import NetConfig, NetParams, forward
from tnnr.tnn import TnnModel, load_model, predict_pair, predict_triple, save_model
from tnnr.training import loop_loss


def test_zero_network_predicts_zero(rng):
    m = TnnModel(NetParams(NetConfig(6, (4,))), 3)
    a, b, c = rng.normal(size=(3, 3))
    assert predict_pair(m, a, b) == 0.0
    t = predict_triple(m, a, b, c)
    assert (t.f_ij, t.f_jk, t.f_ki) == (0.0, 0.0, 0.0)


def test_predict_pair_is_forward_on_concatenation(backend, small_model, rng):
    a, b = rng.normal(size=(2, 3))
    direct = forward(small_model.params, np.concatenate([a, b])[None])[0][0]
    assert predict_pair(small_model, a, b) == direct
    assert predict_pair(small_model, a, b) == pytest.approx(
        naive_forward(small_model.params, np.concatenate([a, b])), abs=1e-12
    )


def test_order_matters(small_model, rng):
    a, b = rng.normal(size=(2, 3))
    assert predict_pair(small_model, a, b) != predict_pair(small_model, b, a)


def test_predict_triple_matches_pairs(backend, small_model, rng):
    for _ in range(20):
        a, b, c = rng.normal(size=(3, 3))
        t = predict_triple(small_model, a, b, c)
        np.testing.assert_allclose(
            [t.f_ij, t.f_jk, t.f_ki],
            [predict_pair(small_model, a, b), predict_pair(small_model, b, c),
             predict_pair(small_model, c, a)],
            rtol=0, atol=1e-12,
        )


def test_dimension_errors(small_model):
    with pytest.raises(DimensionError):
        predict_pair(small_model, np.zeros(3), np.zeros(2))
    with pytest.raises(DimensionError):
        TnnModel(NetParams(NetConfig(5, (3,))), 3)


def test_factorized_model_has_consistent_loops(backend, rng):
    d = 3
    for _ in range(5):
        g = random_params(rng, d, (5, 4))
        m = factorized_model(g, d)
        a, b, c = rng.normal(size=(3, d))
        ga, gb = naive_forward(g, a), naive_forward(g, b)
        assert predict_pair(m, a, b) == pytest.approx(ga - gb, abs=1e-12)
        t = predict_triple(m, a, b, c)
        assert abs(t.loop_sum) < 1e-12


def test_pairs_chunking_matches_unchunked(monkeypatch, small_model, rng):
    import tnnr.tnn as tnn_mod

    left, right = rng.normal(size=(2, 50, 3))
    full = small_model.predict_pairs(left, right)
    monkeypatch.setattr(tnn_mod, "EVAL_CHUNK", 7)
    np.testing.assert_array_equal(small_model.predict_pairs(left, right), full)
    X = np.vstack([left, right])
    idx = np.arange(50)
    np.testing.assert_array_equal(small_model.evaluate_indexed(X, idx, idx + 50), full)


def test_save_load_roundtrip(tmp_path, small_model, rng):
    from tnnr.data import NormStats

    norm = NormStats(np.array([0.0, 1.0, 2.0]), np.array([1.0, 3.0, 2.0]))
    anchors = (rng.normal(size=(4, 3)), rng.normal(size=4))
    path = tmp_path / "m.npz"
    save_model(small_model, path, norm=norm, anchors=anchors)
    m2, norm2, anchors2 = load_model(path)
    assert m2.params == small_model.params
    assert m2.feature_dim == 3
    np.testing.assert_array_equal(norm2.max, norm.max)
    np.testing.assert_array_equal(anchors2[0], anchors[0])
    a, b = rng.normal(size=(2, 3))
    assert predict_pair(m2, a, b) == predict_pair(small_model, a, b)


def test_load_rejects_bad_files(tmp_path, small_model):
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not a zip")
    with pytest.raises(LoadError):
        load_model(bad)
    old = tmp_path / "old.npz"
    save_model(small_model, old)
    with np.load(old) as z:
        payload = dict(z)
    payload["format_version"] = np.array(99)
    np.savez(old, **payload)
    with pytest.raises(LoadError, match="version"):
        load_model(old)


def _random_features(rng, norm, n):
    from tnnr.data import apply_normalizer, gen_test_function

    ds = gen_test_function(n, seed=int(rng.integers(1 << 30)))
    return apply_normalizer(norm, ds.features)


def test_self_pair_mean_near_zero(trained_pair, rng):
    models, norm, _, _ = trained_pair
    x = _random_features(rng, norm, 100)
    f = models[0.0].predict_pairs(x, x)
    se = f.std(ddof=1) / np.sqrt(f.size)
    assert abs(f.mean()) < 3 * se


def test_loop_training_reduces_loop_inconsistency(trained_pair):
    models, _, X, split = trained_pair
    tri = np.random.default_rng(0).choice(split.unlabelled_pool, size=(2000, 3))
    left, right = tri.ravel(), tri[:, [1, 2, 0]].ravel()
    losses = {}
    for lam, m in models.items():
        p = m.evaluate_indexed(X, left, right).reshape(-1, 3)
        losses[lam] = loop_loss(p)
    assert losses[0.1] < losses[0.0]
