"""Residual sine MLP: parameters, forward/backward passes and optimizer.

Architecture::

    h = sin(omega0 * (W_in x + b_in))
    for each residual block:
        h = h + sin(omega0 * (W2 sin(omega0 * (W1 h + b1)) + b2))
        h = dropout(h)            # only on blocks selected by the placement
    y = W_out h + b_out

Parameters live in one flat float64 array in canonical order: input layer
``W, b``; every block's first layer ``W, b`` then second layer ``W, b``;
output layer ``W, b``.  Weight matrices are stored ``(fan_out, fan_in)``
row-major.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NonFiniteActivation, NonFiniteUpdate, ShapeMismatch

PLACEMENTS = ("none", "last_block", "last_half", "all_blocks")
_PLACEMENT_ALIASES = {"last": "last_block", "last-half": "last_half", "all": "all_blocks",
                      "last-block": "last_block", "all-blocks": "all_blocks"}


def canonical_placement(name: str) -> str:
    name = _PLACEMENT_ALIASES.get(name, name)
    if name not in PLACEMENTS:
        raise ValueError(f"unknown dropout placement {name!r}")
    return name


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int = 2
    output_dim: int = 2
    hidden_width: int = 100
    num_res_blocks: int = 10
    omega0: float = 30.0
    dropout_placement: str = "last_block"
    dropout_p_train: float = 0.05
    dropout_p_test: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "dropout_placement", canonical_placement(self.dropout_placement))
        if self.input_dim not in (2, 3) or self.output_dim not in (2, 3):
            raise ValueError("input_dim and output_dim must be 2 or 3")
        if self.hidden_width < 1 or self.num_res_blocks < 1:
            raise ValueError("hidden_width and num_res_blocks must be >= 1")
        if not self.omega0 > 0:
            raise ValueError("omega0 must be positive")
        for p in (self.dropout_p_train, self.dropout_p_test):
            if not 0.0 <= p < 1.0:
                raise ValueError(f"dropout probability {p} outside [0, 1)")

    @classmethod
    def standard(cls, ndim: int, **overrides) -> "NetworkConfig":
        """Width 100 / 10 blocks for 2D data, width 120 / 14 blocks for 3D."""
        base = dict(input_dim=ndim, output_dim=ndim,
                    hidden_width=100 if ndim == 2 else 120,
                    num_res_blocks=10 if ndim == 2 else 14)
        base.update(overrides)
        return cls(**base)

    def dropout_blocks(self) -> tuple[int, ...]:
        """Indices of residual blocks whose output is followed by dropout."""
        n = self.num_res_blocks
        return {
            "none": (),
            "last_block": (n - 1,),
            "last_half": tuple(range(n // 2, n)),
            "all_blocks": tuple(range(n)),
        }[self.dropout_placement]

    def layer_shapes(self) -> list[tuple[int, int]]:
        """``(fan_out, fan_in)`` of every linear layer in canonical order."""
        w = self.hidden_width
        return [(w, self.input_dim)] + [(w, w)] * (2 * self.num_res_blocks) + [(self.output_dim, w)]

    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def with_(self, **kw) -> "NetworkConfig":
        return replace(self, **kw)


def unpack(params: np.ndarray, config: NetworkConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views ``(W, b)`` into the flat parameter array, one per linear layer."""
    if params.shape != (config.n_params(),):
        raise ShapeMismatch(f"expected {config.n_params()} parameters, got {params.shape}")
    layers, k = [], 0
    for o, i in config.layer_shapes():
        W = params[k:k + o * i].reshape(o, i)
        k += o * i
        b = params[k:k + o]
        k += o
        layers.append((W, b))
    return layers


def init_parameters(config: NetworkConfig, seed: int) -> np.ndarray:
    """SIREN initialisation; biases start at zero.

    First layer weights are uniform in ``[-1/d, 1/d]``; every other weight is
    uniform in ``[-sqrt(6/fan_in)/omega0, sqrt(6/fan_in)/omega0]``.
    """
    rng = np.random.default_rng(seed)
    params = np.zeros(config.n_params())
    for k, (W, _) in enumerate(unpack(params, config)):
        fan_in = W.shape[1]
        bound = 1.0 / fan_in if k == 0 else np.sqrt(6.0 / fan_in) / config.omega0
        W[...] = rng.uniform(-bound, bound, size=W.shape)
    return params


@dataclass
class ForwardTrace:
    """Everything :func:`backward` needs from one forward pass."""

    x: np.ndarray
    # inputs to each linear layer, canonical order
    inputs: list = field(default_factory=list)
    # scaled pre-activations omega0 * (W h + b) of each sine layer
    pre: list = field(default_factory=list)
    # dropout scale arrays (mask / (1 - p)) keyed by block index
    masks: dict = field(default_factory=dict)


def forward(params, config: NetworkConfig, batch, p=None, rng=None, masks=None):
    """Evaluate the network on normalized coordinates ``batch`` ``(n, d)``.

    With ``p`` and ``rng`` given, inverted dropout with drop probability ``p``
    is applied after every block selected by ``config.dropout_placement``;
    ``masks`` may instead supply fixed scale arrays keyed by block index.
    Returns ``(predictions (n, v), ForwardTrace)``.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise ShapeMismatch(f"batch must be (n, {config.input_dim}), got {x.shape}")
    layers = unpack(params, config)
    w0 = config.omega0
    trace = ForwardTrace(x=x)
    drop = set(config.dropout_blocks()) if (p is not None or masks is not None) else set()

    def sine(layer, h):
        W, b = layer
        trace.inputs.append(h)
        z = w0 * (h @ W.T + b)
        trace.pre.append(z)
        return np.sin(z)

    with np.errstate(over="ignore", invalid="ignore"):
        h = sine(layers[0], x)
        for k in range(config.num_res_blocks):
            a = sine(layers[1 + 2 * k], h)
            h = h + sine(layers[2 + 2 * k], a)
            if k in drop:
                if masks is not None:
                    scale = masks[k]
                else:
                    keep = rng.random(h.shape) >= p
                    scale = keep / (1.0 - p)
                trace.masks[k] = scale
                h = h * scale
        W, b = layers[-1]
        trace.inputs.append(h)
        y = h @ W.T + b
    if not np.all(np.isfinite(y)):
        raise NonFiniteActivation("network produced non-finite values")
    return y, trace


def predict(params, config, batch, batch_size=None):
    """Deterministic forward pass, evaluated in chunks of ``batch_size`` rows."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch_size is None or batch_size >= len(batch):
        return forward(params, config, batch)[0]
    return np.concatenate([forward(params, config, batch[i:i + batch_size])[0]
                           for i in range(0, len(batch), batch_size)])


def backward(trace: ForwardTrace, params, config: NetworkConfig, upstream) -> np.ndarray:
    """Gradient of ``sum(upstream * predictions)`` with respect to ``params``."""
    upstream = np.asarray(upstream, dtype=np.float64)
    n = trace.x.shape[0]
    if upstream.shape != (n, config.output_dim):
        raise ShapeMismatch(f"upstream must be {(n, config.output_dim)}, got {upstream.shape}")
    layers = unpack(params, config)
    grad = np.zeros_like(params)
    glayers = unpack(grad, config)
    w0 = config.omega0

    def linear_back(k, g_out):
        # g_out: gradient wrt this layer's affine output
        W, _ = layers[k]
        gW, gb = glayers[k]
        gW[...] = g_out.T @ trace.inputs[k]
        gb[...] = g_out.sum(axis=0)
        return g_out @ W

    def dsin(k):
        return w0 * np.cos(trace.pre[k])

    g = linear_back(len(layers) - 1, upstream)
    for k in reversed(range(config.num_res_blocks)):
        if k in trace.masks:
            g = g * trace.masks[k]
        l1, l2 = 1 + 2 * k, 2 + 2 * k
        ga = linear_back(l2, g * dsin(l2))
        g = g + linear_back(l1, ga * dsin(l1))
    linear_back(0, g * dsin(0))
    return grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 5e-5

    @classmethod
    def zeros(cls, n, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **kw)


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam update; returns ``(new_state, new_params)``."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeMismatch("Adam state, parameters and gradients differ in length")
    b1, b2 = state.beta1, state.beta2
    t = state.t + 1
    m = b1 * state.m + (1 - b1) * grads
    v = b2 * state.v + (1 - b2) * grads * grads
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    new = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    if not np.all(np.isfinite(new)):
        raise NonFiniteUpdate(f"non-finite parameters after Adam step {t}")
    return replace(state, m=m, v=v, t=t), new


def plateau_scheduler_step(current_lr, loss_history, patience=10, factor=0.1, min_lr=0.0):
    """Learning rate for the next epoch given every epoch loss so far.

    The rate is multiplied by ``factor`` (never below ``min_lr``) each time
    the number of epochs since the last strict improvement of the best loss
    reaches a positive multiple of ``patience``.
    """
    if len(loss_history) == 0:
        raise ValueError("loss_history must not be empty")
    best = loss_history[0]
    stale = 0
    for loss in loss_history[1:]:
        if loss < best:
            best, stale = loss, 0
        else:
            stale += 1
    if stale > 0 and stale % patience == 0:
        return max(current_lr * factor, min_lr)
    return current_lr
