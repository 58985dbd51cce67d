import sys

import numpy as np
import pytest

from tnnr import _backend
from tnnr.nn import NetConfig, init_params
from tnnr.tnn import TnnModel

BACKENDS = ["python"]
try:
    _backend.get_kernels("cython")
    BACKENDS.append("cython")
except ImportError:  # extension not built
    pass


@pytest.fixture(params=BACKENDS)
def backend(request):
    with _backend.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_params(rng, input_dim, hidden, seed=None, bias_scale=0.3):
    """Glorot weights plus non-zero biases so every code path is exercised."""
    seed = int(rng.integers(0, 2**32)) if seed is None else seed
    params = init_params(NetConfig(input_dim, tuple(hidden), seed=seed))
    for b in params.biases:
        b[:] = rng.normal(0.0, bias_scale, size=b.shape)
    return params


def random_model(rng, feature_dim=3, hidden=(6, 5)):
    params = random_params(rng, 2 * feature_dim, hidden)
    return TnnModel(params, feature_dim)


@pytest.fixture
def small_model(rng):
    return random_model(rng)


@pytest.fixture(scope="session")
def trained_pair():
    """Two small models trained on the test function at lambda = 0 and 0.1.

    Returns (models, norm, X, split)."""
    from tnnr import data
    from tnnr.training import TrainConfig, train

    ds = data.gen_test_function(300, seed=3)
    split = data.make_split(ds, "T80", seed=4)
    norm = data.fit_normalizer(ds, split.labelled_train)
    X = data.apply_normalizer(norm, ds.features)
    models = {}
    for lam in (0.0, 0.1):
        m = TnnModel.create(2, hidden_dims=(64, 64), seed=0)
        cfg = TrainConfig(lam=lam, max_epochs=600, seed=0)
        models[lam], _ = train(m, split, X, ds.labels, cfg)
    return models, norm, X, split


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section(f"acceptance criteria (scale: {mod.SCALE})")
    for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
        terminalreporter.write_line(line)
