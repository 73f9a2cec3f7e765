"""Minimal dense feed-forward classifier with hand-rolled backprop.

Supplies forward inference, exact analytic parameter/input gradients, and a
binary checkpoint format. Everything is float64 and single-example; there is
no batching, no autodiff graph, no convolution.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "identity")

_CKPT_MAGIC = b"RFNETCKP"
_CKPT_VERSION = 1
_ACT_CODES = {"identity": 0, "relu": 1}
_ACT_NAMES = {code: name for name, code in _ACT_CODES.items()}


@dataclass
class Layer:
    """One dense layer: y = act(W @ x + b). W has shape (out_dim, in_dim)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("layer expects a 2-d weight matrix and 1-d bias")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ValueError(
                f"bias length {self.bias.shape[0]} does not match "
                f"weight rows {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Network:
    """Ordered dense layers; the final layer's output are the logits."""

    layers: list[Layer]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(
                    f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def num_classes(self) -> int:
        return self.layers[-1].out_dim


@dataclass
class GradientBundle:
    """Loss plus exact gradients w.r.t. every parameter and the input."""

    loss: float
    param_grads: list[tuple[np.ndarray, np.ndarray]]  # (dW, db) per layer
    input_grad: np.ndarray = field(repr=False, default=None)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _activate_deriv(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        # subgradient choice: relu'(0) = 0
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def _check_input(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != net.input_dim:
        raise ValueError(
            f"input has {x.shape[0]} entries, network expects {net.input_dim}"
        )
    if not np.isfinite(x).all():
        raise ValueError("input must be finite")
    return x


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Logits for a single flattened input."""
    a = _check_input(net, x)
    for layer in net.layers:
        a = _activate(layer.weights @ a + layer.bias, layer.activation)
    return a


def _forward_trace(net: Network, x: np.ndarray):
    """Forward pass keeping pre-activations and activations for backprop."""
    a = _check_input(net, x)
    activations = [a]
    pre = []
    for layer in net.layers:
        z = layer.weights @ a + layer.bias
        a = _activate(z, layer.activation)
        pre.append(z)
        activations.append(a)
    return pre, activations


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def cross_entropy(logits: np.ndarray, y: int) -> float:
    shifted = logits - np.max(logits)
    return float(np.log(np.exp(shifted).sum()) - shifted[y])


def _check_label(net: Network, y: int) -> int:
    y = int(y)
    if not 0 <= y < net.num_classes:
        raise ValueError(f"label {y} outside [0, {net.num_classes})")
    return y


def _backprop(net: Network, x: np.ndarray, y: int, want_param_grads: bool):
    """Shared backprop core; softmax cross-entropy on the logits."""
    y = _check_label(net, y)
    pre, activations = _forward_trace(net, x)
    logits = activations[-1]
    loss = cross_entropy(logits, y)

    # d loss / d logits for softmax cross-entropy is p - onehot(y)
    delta = softmax(logits)
    delta[y] -= 1.0
    # undo the final layer's activation
    delta = delta * _activate_deriv(pre[-1], net.layers[-1].activation)

    param_grads: list[tuple[np.ndarray, np.ndarray]] = []
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if want_param_grads:
            param_grads.append((np.outer(delta, activations[i]), delta.copy()))
        delta = layer.weights.T @ delta
        if i > 0:
            delta = delta * _activate_deriv(pre[i - 1], net.layers[i - 1].activation)
    param_grads.reverse()
    return loss, param_grads, delta


def loss_and_gradients(net: Network, x: np.ndarray, y: int) -> GradientBundle:
    """Cross-entropy loss and exact gradients w.r.t. parameters and input."""
    loss, param_grads, input_grad = _backprop(net, x, y, want_param_grads=True)
    return GradientBundle(loss=loss, param_grads=param_grads, input_grad=input_grad)


def loss_and_input_grad(net: Network, x: np.ndarray, y: int) -> tuple[float, np.ndarray]:
    """Loss and input gradient only; skips the parameter outer products."""
    loss, _, input_grad = _backprop(net, x, y, want_param_grads=False)
    return loss, input_grad


def predict(net: Network, x: np.ndarray) -> int:
    """Argmax label; ties break toward the lowest index."""
    return int(np.argmax(forward(net, x)))


def random_network(
    dims: list[int], seed: int, final_activation: str = "identity"
) -> Network:
    """He-initialized ReLU MLP with the given layer widths.

    dims = [input, hidden..., num_classes]; hidden layers use relu.
    """
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        w = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
        b = np.zeros(fan_out)
        act = "relu" if i < len(dims) - 2 else final_activation
        layers.append(Layer(w, b, act))
    return Network(layers)


def save_checkpoint(net: Network, path) -> None:
    """Binary checkpoint; layout documented in the README (big-endian)."""
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack(">II", _CKPT_VERSION, len(net.layers)))
        for layer in net.layers:
            f.write(
                struct.pack(
                    ">IIB", layer.out_dim, layer.in_dim, _ACT_CODES[layer.activation]
                )
            )
        for layer in net.layers:
            f.write(np.ascontiguousarray(layer.weights, dtype=">f8").tobytes())
            f.write(np.ascontiguousarray(layer.bias, dtype=">f8").tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(_CKPT_MAGIC)] != _CKPT_MAGIC:
        raise ValueError(f"not a network checkpoint: bad magic in {path}")
    off = len(_CKPT_MAGIC)
    version, n_layers = struct.unpack_from(">II", blob, off)
    off += 8
    if version != _CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    headers = []
    for _ in range(n_layers):
        out_dim, in_dim, act = struct.unpack_from(">IIB", blob, off)
        off += 9
        if act not in _ACT_NAMES:
            raise ValueError(f"unknown activation code {act}")
        headers.append((out_dim, in_dim, _ACT_NAMES[act]))
    layers = []
    for out_dim, in_dim, act in headers:
        w_bytes = out_dim * in_dim * 8
        if off + w_bytes + out_dim * 8 > len(blob):
            raise ValueError("truncated checkpoint")
        w = np.frombuffer(blob, dtype=">f8", count=out_dim * in_dim, offset=off)
        off += w_bytes
        b = np.frombuffer(blob, dtype=">f8", count=out_dim, offset=off)
        off += out_dim * 8
        layers.append(
            Layer(w.astype(np.float64).reshape(out_dim, in_dim),
                  b.astype(np.float64), act)
        )
    return Network(layers)
