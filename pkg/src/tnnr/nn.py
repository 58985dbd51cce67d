"""Dense ReLU network with exact gradients and Adadelta.

All parameters live in one flat float64 vector; per-layer weights and
biases are views into it. Gradients use the same layout, which lets the
optimizer run as a single fused loop.

The ReLU derivative at exactly zero is taken as 0.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConfigError, DimensionError, InputError, TrainingError, UsageError

__all__ = [
    "NetConfig",
    "NetParams",
    "AdadeltaState",
    "init_params",
    "forward",
    "backward",
    "adadelta_step",
]


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    hidden_dims: tuple = (192, 192)
    activation: str = "relu"
    output_dim: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if int(self.input_dim) < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.hidden_dims:
            raise ConfigError("hidden_dims must be non-empty")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"hidden dims must be >= 1, got {self.hidden_dims}")
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}")
        if self.output_dim != 1:
            raise ConfigError("only scalar-output networks are supported")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")

    @property
    def dims(self):
        return (int(self.input_dim), *self.hidden_dims, int(self.output_dim))

    @property
    def layer_shapes(self):
        d = self.dims
        return [(d[l + 1], d[l]) for l in range(len(d) - 1)]

    @property
    def n_params(self):
        return sum(o * i + o for o, i in self.layer_shapes)

    def to_dict(self):
        return {
            "input_dim": int(self.input_dim),
            "hidden_dims": list(self.hidden_dims),
            "activation": self.activation,
            "output_dim": int(self.output_dim),
            "seed": int(self.seed),
        }


def _layer_views(flat, config):
    weights, biases = [], []
    pos = 0
    for o, i in config.layer_shapes:
        weights.append(flat[pos:pos + o * i].reshape(o, i))
        pos += o * i
        biases.append(flat[pos:pos + o])
        pos += o
    return weights, biases


class NetParams:
    """Parameters of a :class:`NetConfig` network.

    ``flat`` owns the storage; ``weights[l]`` has shape ``(dims[l+1], dims[l])``.
    Also used for gradients, which share the layout.
    """

    def __init__(self, config, flat=None):
        self.config = config
        if flat is None:
            flat = np.zeros(config.n_params)
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        if flat.shape != (config.n_params,):
            raise DimensionError(
                f"expected {config.n_params} parameters, got shape {flat.shape}"
            )
        self.flat = flat
        self.weights, self.biases = _layer_views(flat, config)
        self.version = 0

    def copy(self):
        return NetParams(self.config, self.flat.copy())

    def locate(self, index):
        """Map a flat index to a human-readable parameter location."""
        pos = 0
        for l, (o, i) in enumerate(self.config.layer_shapes):
            if index < pos + o * i:
                r, c = divmod(index - pos, i)
                return f"layer {l} weight[{r}, {c}]"
            pos += o * i
            if index < pos + o:
                return f"layer {l} bias[{index - pos}]"
            pos += o
        raise IndexError(index)

    def __eq__(self, other):
        if not isinstance(other, NetParams):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.flat, other.flat)

    def __repr__(self):
        return f"NetParams(dims={self.config.dims})"


ParamGrads = NetParams


def init_params(config):
    """Glorot-uniform weights, zero biases, deterministic in ``config.seed``."""
    if not isinstance(config, NetConfig):
        raise ConfigError("init_params expects a NetConfig")
    rng = np.random.default_rng(int(config.seed))
    params = NetParams(config)
    for W in params.weights:
        fan_out, fan_in = W.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
    return params


@dataclass
class ForwardCache:
    """Layer inputs recorded by :func:`forward` (post-activations)."""

    params_id: int
    params_version: int
    activations: list = field(default_factory=list)


def forward(params, batch, check_finite=True):
    """Evaluate the network on a ``(B, input_dim)`` batch.

    Returns the output vector of length B and a cache for :func:`backward`.
    """
    X = np.ascontiguousarray(batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.config.input_dim:
        raise DimensionError(
            f"batch must have shape (B, {params.config.input_dim}), got {np.shape(batch)}"
        )
    if check_finite and not np.isfinite(X).all():
        raise InputError("batch contains non-finite values")
    k = _backend.kernels
    n = X.shape[0]
    acts = [X]
    last = len(params.weights) - 1
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        out = np.empty((n, W.shape[0]))
        k.dense_forward(acts[-1], W, b, out, l < last)
        acts.append(out)
    outputs = acts.pop()[:, 0]
    return outputs, ForwardCache(id(params), params.version, acts)


def backward(params, cache, output_grads):
    """Gradient of ``sum_b output_grads[b] * output[b]`` wrt every parameter."""
    if cache.params_id != id(params) or cache.params_version != params.version:
        raise UsageError("forward cache does not belong to the current parameters")
    acts = cache.activations
    n = acts[0].shape[0]
    g = np.asarray(output_grads, dtype=np.float64)
    if g.shape != (n,):
        raise DimensionError(f"output_grads must have shape ({n},), got {g.shape}")
    k = _backend.kernels
    grads = NetParams(params.config)
    d_out = np.ascontiguousarray(g.reshape(n, 1))
    for l in range(len(params.weights) - 1, -1, -1):
        W = params.weights[l]
        d_in = np.empty((n, W.shape[1])) if l > 0 else None
        k.dense_backward(d_out, acts[l], W, grads.weights[l], grads.biases[l], d_in, l > 0)
        d_out = d_in
    return grads


class AdadeltaState:
    """Running averages of squared gradients and squared updates."""

    def __init__(self, n_params, rho=0.95, epsilon=1e-6, base_lr=1.0):
        if not 0.0 < rho < 1.0:
            raise ConfigError(f"rho must lie in (0, 1), got {rho}")
        if epsilon <= 0 or base_lr <= 0:
            raise ConfigError("epsilon and base_lr must be positive")
        self.acc_grad = np.zeros(n_params)
        self.acc_delta = np.zeros(n_params)
        self.rho = float(rho)
        self.epsilon = float(epsilon)
        self.base_lr = float(base_lr)

    @classmethod
    def for_params(cls, params, **kwargs):
        return cls(params.config.n_params, **kwargs)

    def copy(self):
        new = AdadeltaState(self.acc_grad.size, self.rho, self.epsilon, self.base_lr)
        new.acc_grad[:] = self.acc_grad
        new.acc_delta[:] = self.acc_delta
        return new


def adadelta_step(params, grads, state, scale=1.0):
    """Apply one Adadelta update in place and return ``(params, state)``.

    The step is ``base_lr * scale`` times the Adadelta delta; the squared-update
    accumulator tracks the unscaled delta.
    """
    if grads.flat.shape != params.flat.shape or state.acc_grad.shape != params.flat.shape:
        raise DimensionError("parameter, gradient and optimizer shapes differ")
    bad = _backend.kernels.adadelta_update(
        params.flat, grads.flat, state.acc_grad, state.acc_delta,
        state.rho, state.epsilon, state.base_lr * scale,
    )
    if bad >= 0:
        raise TrainingError(f"non-finite gradient at {params.locate(bad)}")
    params.version += 1
    return params, state
