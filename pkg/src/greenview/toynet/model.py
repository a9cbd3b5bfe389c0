"""A small encoder-decoder segmentation net with additive skip connections.

Encoder stage ``i`` (1-based): 3x3 conv -> ReLU -> 2x2 max-pool, with
``base_channels * 2**(i-1)`` channels.  Decoder stage ``i`` (deepest first):
2x2 stride-2 transposed conv -> add the stage-``i`` encoder map taken just
before pooling -> 3x3 conv -> ReLU.  A 1x1 conv maps to class scores.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import EmptyImage, InvalidSpec, ShapeMismatch
from ..labelspace import VOID
from ..lossfn import LossValue, WeightVector, log_softmax, softmax
from . import layers as L


@dataclass(frozen=True)
class NetworkConfig:
    depth: int = 2
    base_channels: int = 8
    C_out: int = 2
    seed: int = 0
    kernel: int = 3

    def __post_init__(self):
        if self.depth < 1:
            raise InvalidSpec("depth must be >= 1")
        if self.base_channels < 1:
            raise InvalidSpec("base_channels must be >= 1")
        if self.C_out < 2:
            raise InvalidSpec("C_out must be >= 2")
        if self.kernel != 3:
            raise InvalidSpec("only 3x3 kernels are supported")

    def channels(self, stage: int) -> int:
        return self.base_channels * 2 ** (stage - 1)

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        """Parameter names and shapes, in checkpoint order."""
        out = []
        cin = 3
        for i in range(1, self.depth + 1):
            c = self.channels(i)
            out += [(f"enc{i}.conv.k", (3, 3, cin, c)), (f"enc{i}.conv.b", (c,))]
            cin = c
        for i in range(self.depth, 0, -1):
            c = self.channels(i)
            out += [
                (f"dec{i}.up.k", (2, 2, cin, c)),
                (f"dec{i}.up.b", (c,)),
                (f"dec{i}.conv.k", (3, 3, c, c)),
                (f"dec{i}.conv.b", (c,)),
            ]
            cin = c
        out += [("head.k", (cin, self.C_out)), ("head.b", (self.C_out,))]
        return out

    def to_dict(self) -> dict:
        return asdict(self)


class ParameterSet:
    """Flat float64 parameter vector with named views in a fixed layout."""

    def __init__(self, config: NetworkConfig, vector: np.ndarray | None = None):
        self.config = config
        self.layout = config.layout()
        self._offsets = {}
        pos = 0
        for name, shape in self.layout:
            size = int(np.prod(shape))
            self._offsets[name] = (pos, size, shape)
            pos += size
        self.size = pos
        if vector is None:
            vector = np.zeros(pos)
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (pos,):
            raise ShapeMismatch(f"expected {pos} parameters, got {vector.shape}")
        self.vector = vector

    def __getitem__(self, name: str) -> np.ndarray:
        start, size, shape = self._offsets[name]
        return self.vector[start:start + size].reshape(shape)

    def names(self) -> list[str]:
        return [n for n, _ in self.layout]

    def slice(self, name: str) -> slice:
        start, size, _ = self._offsets[name]
        return slice(start, start + size)

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.config, self.vector.copy())

    def with_vector(self, vector) -> "ParameterSet":
        return ParameterSet(self.config, vector)


def init_params(config: NetworkConfig) -> ParameterSet:
    """He-normal kernels from ``config.seed``, zero biases."""
    rng = np.random.default_rng(config.seed)
    params = ParameterSet(config)
    for name, shape in params.layout:
        if name.endswith(".b"):
            continue
        if name.startswith("head"):
            fan_in = shape[0]
        elif ".up." in name:
            fan_in = shape[2]
        else:
            fan_in = 9 * shape[2]
        params[name][...] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    return params


def _as_batch(params: ParameterSet, images) -> tuple[np.ndarray, bool]:
    x = np.asarray(images, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[-1] != 3:
        raise ShapeMismatch(f"expected (H, W, 3) or (N, H, W, 3) images, got {np.shape(images)}")
    step = 2 ** params.config.depth
    if x.shape[1] % step or x.shape[2] % step:
        raise ShapeMismatch(f"image size {x.shape[1]}x{x.shape[2]} is not divisible by {step}")
    return x, single


def _forward(params: ParameterSet, x: np.ndarray, skip: bool = True):
    depth = params.config.depth
    caches = []
    skips = []
    h = x
    for i in range(1, depth + 1):
        h, c_conv = L.conv3x3_forward(h, params[f"enc{i}.conv.k"], params[f"enc{i}.conv.b"])
        h, c_relu = L.relu_forward(h)
        skips.append(h)
        h, c_pool = L.maxpool2x2_forward(h)
        caches.append((c_conv, c_relu, c_pool))
    dcaches = []
    for i in range(depth, 0, -1):
        h, c_up = L.tconv2x2_forward(h, params[f"dec{i}.up.k"], params[f"dec{i}.up.b"])
        if skip:
            h = h + skips[i - 1]
        h, c_conv = L.conv3x3_forward(h, params[f"dec{i}.conv.k"], params[f"dec{i}.conv.b"])
        h, c_relu = L.relu_forward(h)
        dcaches.append((c_up, c_conv, c_relu))
    out, c_head = L.conv1x1_forward(h, params["head.k"], params["head.b"])
    return out, (caches, dcaches, c_head, skip)


def _backward(params: ParameterSet, dout: np.ndarray, cache) -> np.ndarray:
    caches, dcaches, c_head, skip = cache
    depth = params.config.depth
    grad = ParameterSet(params.config)
    dh, grad["head.k"][...], grad["head.b"][...] = L.conv1x1_backward(dout, c_head)
    dskips = [None] * depth
    for i, (c_up, c_conv, c_relu) in zip(range(1, depth + 1), reversed(dcaches)):
        dh = L.relu_backward(dh, c_relu)
        dh, grad[f"dec{i}.conv.k"][...], grad[f"dec{i}.conv.b"][...] = L.conv3x3_backward(dh, c_conv)
        if skip:
            dskips[i - 1] = dh
        dh, grad[f"dec{i}.up.k"][...], grad[f"dec{i}.up.b"][...] = L.tconv2x2_backward(dh, c_up)
    for i in range(depth, 0, -1):
        c_conv, c_relu, c_pool = caches[i - 1]
        dh = L.maxpool2x2_backward(dh, c_pool)
        if dskips[i - 1] is not None:
            dh = dh + dskips[i - 1]
        dh = L.relu_backward(dh, c_relu)
        dh, grad[f"enc{i}.conv.k"][...], grad[f"enc{i}.conv.b"][...] = L.conv3x3_backward(dh, c_conv)
    return grad.vector


def forward(params: ParameterSet, image, skip: bool = True) -> np.ndarray:
    """Class activations ``(H, W, C)`` for an ``(H, W, 3)`` image in [0, 1].

    A leading batch axis is accepted and preserved.  ``skip=False`` drops
    the skip additions (ablation only).
    """
    x, single = _as_batch(params, image)
    out, _ = _forward(params, x, skip)
    return out[0] if single else out


def batch_loss_and_grad(params: ParameterSet, images, labels, weights) -> tuple[float, np.ndarray, np.ndarray, int]:
    """Summed weighted loss over a batch and its parameter gradient.

    ``weights`` is ``(N, C)``, one weight vector per image.  Returns
    ``(total, per_class, grad_vector, valid_pixels)``.
    """
    x, _ = _as_batch(params, images)
    y = np.asarray(labels)
    if y.ndim == 2:
        y = y[None]
    if y.shape != x.shape[:3]:
        raise ShapeMismatch(f"labels {y.shape} vs images {x.shape[:3]}")
    weights = np.asarray(weights, dtype=np.float64).reshape(y.shape[0], -1)
    a, cache = _forward(params, x)
    C = a.shape[-1]
    valid = y != VOID
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise EmptyImage()
    # per-image nonzero check matches the single-image contract
    if not valid.reshape(len(y), -1).any(axis=1).all():
        raise EmptyImage("a batch image has no valid pixels")
    img_idx = np.broadcast_to(np.arange(len(y))[:, None, None], y.shape)[valid]
    t = y[valid]
    wpix = weights[img_idx, t]
    lp = log_softmax(a[valid])
    rows = np.arange(t.size)
    nll = -lp[rows, t]
    per_class = np.zeros(C)
    np.add.at(per_class, t, wpix * nll)
    g = np.exp(lp)
    g[rows, t] -= 1.0
    g *= wpix[:, None]
    da = np.zeros_like(a)
    da[valid] = g
    grad = _backward(params, da, cache)
    return float(per_class.sum()), per_class, grad, n_valid


def backward(params: ParameterSet, image, y, w) -> tuple[LossValue, np.ndarray]:
    """Weighted loss of one image and its gradient w.r.t. the flat parameter vector."""
    weights = w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=np.float64)
    if weights.size != params.config.C_out:
        raise ShapeMismatch(f"{weights.size} weights for {params.config.C_out} classes")
    total, per_class, grad, n = batch_loss_and_grad(params, np.asarray(image)[None], np.asarray(y)[None], weights[None])
    return LossValue(total, per_class, n), grad


def predict(params: ParameterSet, image) -> np.ndarray:
    """Argmax class per pixel; ties go to the lowest index. Never returns void."""
    return np.argmax(softmax(forward(params, image)), axis=-1).astype(np.int64)
