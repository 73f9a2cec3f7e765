import numpy as np
import pytest

from robustfeat import netcore
from robustfeat.netcore import Layer, Network


def matmul_oracle(w, x, b):
    """Naive triple/double-loop matrix-vector product, independent of numpy's
    dot path."""
    out = []
    for i in range(w.shape[0]):
        acc = 0.0
        for j in range(w.shape[1]):
            acc += w[i][j] * x[j]
        out.append(acc + b[i])
    return np.array(out)


def forward_oracle(net: Network, x):
    a = np.asarray(x, dtype=np.float64)
    for layer in net.layers:
        z = matmul_oracle(layer.weights, a, layer.bias)
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return a


def finite_difference_bundle(net: Network, x, y, h=1e-5):
    """Central-difference gradients of the cross-entropy loss w.r.t. every
    parameter and the input."""

    def loss_at(xv):
        return netcore.cross_entropy(netcore.forward(net, xv), y)

    param_grads = []
    for layer in net.layers:
        dw = np.zeros_like(layer.weights)
        for i in range(layer.weights.shape[0]):
            for j in range(layer.weights.shape[1]):
                orig = layer.weights[i, j]
                layer.weights[i, j] = orig + h
                up = loss_at(x)
                layer.weights[i, j] = orig - h
                dn = loss_at(x)
                layer.weights[i, j] = orig
                dw[i, j] = (up - dn) / (2 * h)
        db = np.zeros_like(layer.bias)
        for i in range(layer.bias.shape[0]):
            orig = layer.bias[i]
            layer.bias[i] = orig + h
            up = loss_at(x)
            layer.bias[i] = orig - h
            dn = loss_at(x)
            layer.bias[i] = orig
            db[i] = (up - dn) / (2 * h)
        param_grads.append((dw, db))
    x = np.asarray(x, dtype=np.float64)
    dx = np.zeros_like(x)
    for i in range(x.size):
        bumped = x.copy()
        bumped[i] += h
        up = loss_at(bumped)
        bumped[i] -= 2 * h
        dn = loss_at(bumped)
        dx[i] = (up - dn) / (2 * h)
    return param_grads, dx


def max_rel_error(analytic, numeric, floor=1e-4):
    # the floor keeps central-difference roundoff (~1e-9 absolute) from
    # dominating the ratio on near-zero entries; genuine formula errors show
    # up on O(1) entries where the floor is inactive
    a = np.asarray(analytic).reshape(-1)
    f = np.asarray(numeric).reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
    return float(np.max(np.abs(a - f) / denom))


def random_net(rng, dims=None, max_width=32):
    if dims is None:
        depth = rng.integers(1, 4)
        dims = [int(rng.integers(2, max_width + 1)) for _ in range(depth + 1)]
    layers = []
    for i in range(len(dims) - 1):
        w = rng.standard_normal((dims[i + 1], dims[i]))
        b = rng.standard_normal(dims[i + 1]) * 0.1
        act = "relu" if i < len(dims) - 2 else "identity"
        layers.append(Layer(w, b, act))
    return Network(layers)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class QuantizingExtractor:
    """Stub group-feature extractor with a constructible robust radius.

    T(x) = floor(mean(x) / cell). The pixel mean moves by at most delta under
    an L-inf perturbation of size delta, so T is provably constant on
    B(x, r) where r = distance of mean(x) to the nearest cell boundary.
    """

    def __init__(self, cell: float):
        self.cell = cell

    def extract(self, img) -> int:
        pixels = img.pixels if hasattr(img, "pixels") else np.asarray(img)
        return int(np.floor(pixels.mean() / self.cell))

    def robust_radius(self, img) -> float:
        pixels = img.pixels if hasattr(img, "pixels") else np.asarray(img)
        frac = (pixels.mean() / self.cell) % 1.0
        return min(frac, 1.0 - frac) * self.cell


def random_group_map(rng, values, num_labels):
    """Random value -> label-set table over integer labels."""
    from robustfeat.groupfeat import GroupLabelMap

    table = {}
    for v in values:
        size = int(rng.integers(1, max(2, num_labels)))
        table[v] = frozenset(int(l) for l in rng.choice(num_labels, size=size, replace=False))
    return GroupLabelMap(table)
