"""Tiny CNN over MFE spectrograms: spec, init, forward/backward, SGD training, persistence.

Tensors are plain float64 numpy arrays. Internally every layer works on a batch
(N, C, H, W); the single-sample entry points wrap a batch of one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dsp import MelSpectrogram

LABELS = ("normal", "slam")
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class Conv2d:
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool2d:
    pool_h: int
    pool_w: int


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    out_features: int


@dataclass(frozen=True)
class Softmax:
    pass


Layer = Union[Conv2d, ReLU, MaxPool2d, Flatten, Dense, Softmax]
_LAYER_TYPES = {cls.__name__.lower(): cls for cls in (Conv2d, ReLU, MaxPool2d, Flatten, Dense, Softmax)}


def _layer_to_dict(layer: Layer) -> dict:
    d = {"type": type(layer).__name__.lower()}
    d.update(layer.__dict__)
    return d


def _layer_from_dict(d: dict) -> Layer:
    d = dict(d)
    kind = d.pop("type")
    if kind not in _LAYER_TYPES:
        raise ValueError(f"unknown layer type {kind!r}")
    return _LAYER_TYPES[kind](**d)


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple
    input_shape: tuple = (1, 199, 40)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        self.shapes()

    def shapes(self) -> list[tuple]:
        """Output shape of every layer (without batch axis). Raises ValueError if inconsistent."""
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ValueError(f"input shape must be (C, H, W) with positive dims, got {self.input_shape}")
        if len(self.layers) < 2 or self.layers[-2] != Dense(2) or self.layers[-1] != Softmax():
            raise ValueError("model must end with Dense(2) followed by Softmax")
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv2d):
                if len(shape) != 3:
                    raise ValueError(f"layer {i}: Conv2d needs a (C, H, W) input, got {shape}")
                if min(layer.out_channels, layer.kernel_h, layer.kernel_w, layer.stride) < 1 or layer.padding < 0:
                    raise ValueError(f"layer {i}: invalid Conv2d parameters {layer}")
                c, h, w = shape
                ho = (h + 2 * layer.padding - layer.kernel_h) // layer.stride + 1
                wo = (w + 2 * layer.padding - layer.kernel_w) // layer.stride + 1
                if h + 2 * layer.padding < layer.kernel_h or w + 2 * layer.padding < layer.kernel_w:
                    raise ValueError(f"layer {i}: kernel larger than input {shape}")
                shape = (layer.out_channels, ho, wo)
            elif isinstance(layer, MaxPool2d):
                if len(shape) != 3:
                    raise ValueError(f"layer {i}: MaxPool2d needs a (C, H, W) input, got {shape}")
                if min(layer.pool_h, layer.pool_w) < 1:
                    raise ValueError(f"layer {i}: invalid pool size")
                c, h, w = shape
                if h < layer.pool_h or w < layer.pool_w:
                    raise ValueError(f"layer {i}: pool larger than input {shape}")
                shape = (c, h // layer.pool_h, w // layer.pool_w)
            elif isinstance(layer, Flatten):
                shape = (math.prod(shape),)
            elif isinstance(layer, Dense):
                if len(shape) != 1:
                    raise ValueError(f"layer {i}: Dense needs a flat input, got {shape}; add Flatten")
                if layer.out_features < 1:
                    raise ValueError(f"layer {i}: invalid Dense width")
                shape = (layer.out_features,)
            elif isinstance(layer, Softmax):
                if i != len(self.layers) - 1:
                    raise ValueError("Softmax is only allowed as the final layer")
            elif not isinstance(layer, ReLU):
                raise ValueError(f"layer {i}: unsupported layer {layer!r}")
            out.append(shape)
        return out

    def param_shapes(self) -> dict[str, tuple]:
        shapes = {}
        prev = self.input_shape
        for i, (layer, shape) in enumerate(zip(self.layers, self.shapes())):
            if isinstance(layer, Conv2d):
                shapes[f"{i}.kernel"] = (layer.out_channels, prev[0], layer.kernel_h, layer.kernel_w)
                shapes[f"{i}.bias"] = (layer.out_channels,)
            elif isinstance(layer, Dense):
                shapes[f"{i}.kernel"] = (layer.out_features, prev[0])
                shapes[f"{i}.bias"] = (layer.out_features,)
            prev = shape
        return shapes

    def to_list(self) -> list[dict]:
        return [_layer_to_dict(layer) for layer in self.layers]

    @classmethod
    def from_list(cls, layers: Sequence[dict], input_shape) -> "ModelSpec":
        return cls(tuple(_layer_from_dict(d) for d in layers), tuple(input_shape))


def default_spec(input_shape=(1, 199, 40), time_pool: bool = True) -> ModelSpec:
    """Two conv blocks and a dense softmax head.

    With time_pool the second max-pool spans the whole remaining time axis, so the
    head sees the per-band peak response of each filter wherever the event falls
    in the clip. time_pool=False gives the plain 2x2 pool with a positional head.
    """
    _, h, _ = input_shape
    pooled_h = ((h - 2) // 2 - 2) if time_pool else 2
    if pooled_h < 1:
        raise ValueError(f"input {input_shape} is too small for the default architecture")
    return ModelSpec(
        (
            Conv2d(8, 3, 3),
            ReLU(),
            MaxPool2d(2, 2),
            Conv2d(16, 3, 3),
            ReLU(),
            MaxPool2d(pooled_h, 2),
            Flatten(),
            Dense(2),
            Softmax(),
        ),
        input_shape,
    )


@dataclass(eq=False)
class Weights:
    """Learned tensors keyed "<layer index>.kernel" / "<layer index>.bias", plus input normalization."""

    tensors: dict[str, np.ndarray]
    norm_mean: float = 0.0
    norm_std: float = 1.0

    def copy(self) -> "Weights":
        return Weights({k: v.copy() for k, v in self.tensors.items()}, self.norm_mean, self.norm_std)

    def equals(self, other: "Weights") -> bool:
        """Bitwise equality of every tensor and the normalization constants."""
        if self.tensors.keys() != other.tensors.keys():
            return False
        if (self.norm_mean, self.norm_std) != (other.norm_mean, other.norm_std):
            return False
        return all(
            self.tensors[k].shape == other.tensors[k].shape
            and self.tensors[k].tobytes() == other.tensors[k].tobytes()
            for k in self.tensors
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 30
    batch_size: int = 16
    rng_seed: int = 0
    # None: derive from the training split
    norm_mean: float | None = None
    norm_std: float | None = None

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.norm_std is not None and not self.norm_std > 0:
            raise ValueError("norm_std must be positive")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    accuracy: float


def fan_bound(spec: ModelSpec, name: str) -> float:
    shape = spec.param_shapes()[name]
    receptive = math.prod(shape[2:])
    fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_weights(spec: ModelSpec, seed: int) -> Weights:
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".kernel"):
            b = fan_bound(spec, name)
            tensors[name] = rng.uniform(-b, b, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    return Weights(tensors)


def _check_weights(spec: ModelSpec, weights: Weights) -> None:
    expected = spec.param_shapes()
    if set(expected) != set(weights.tensors):
        raise ValueError(f"weights {sorted(weights.tensors)} do not match spec {sorted(expected)}")
    for name, shape in expected.items():
        if weights.tensors[name].shape != shape:
            raise ValueError(f"{name}: expected shape {shape}, got {weights.tensors[name].shape}")


def _as_batch(spec: ModelSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == len(spec.input_shape):
        x = x[None]
    if x.shape[1:] != spec.input_shape:
        raise ValueError(f"input shape {x.shape[1:]} does not match model input {spec.input_shape}")
    return x


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _conv_windows(x, layer: Conv2d):
    if layer.padding:
        p = layer.padding
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(x, (layer.kernel_h, layer.kernel_w), axis=(2, 3))
    return x, win[:, :, :: layer.stride, :: layer.stride]


def forward_batch(spec: ModelSpec, weights: Weights, x):
    """Returns (probabilities (N, 2), cache) for a batch shaped (N, C, H, W)."""
    x = _as_batch(spec, x)
    cache = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv2d):
            k, b = weights.tensors[f"{i}.kernel"], weights.tensors[f"{i}.bias"]
            padded, win = _conv_windows(x, layer)
            y = np.tensordot(win, k, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
            cache.append((padded.shape, win))
            x = y + b[None, :, None, None]
        elif isinstance(layer, ReLU):
            mask = x > 0
            cache.append(mask)
            x = np.where(mask, x, 0.0)
        elif isinstance(layer, MaxPool2d):
            n, c, h, w = x.shape
            ph, pw = layer.pool_h, layer.pool_w
            ho, wo = h // ph, w // pw
            blocks = (
                x[:, :, : ho * ph, : wo * pw]
                .reshape(n, c, ho, ph, wo, pw)
                .transpose(0, 1, 2, 4, 3, 5)
                .reshape(n, c, ho, wo, ph * pw)
            )
            idx = blocks.argmax(axis=-1)  # first maximum wins ties
            cache.append((x.shape, idx))
            x = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
        elif isinstance(layer, Flatten):
            cache.append(x.shape)
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dense):
            k, b = weights.tensors[f"{i}.kernel"], weights.tensors[f"{i}.bias"]
            cache.append(x)
            x = x @ k.T + b
        elif isinstance(layer, Softmax):
            cache.append(None)
            x = softmax(x)
    return x, cache


def forward(spec: ModelSpec, weights: Weights, x):
    """Single-sample inference: x is (C, H, W). Returns (probabilities, cache)."""
    _check_weights(spec, weights)
    probs, cache = forward_batch(spec, weights, x)
    return probs[0], cache


def backward_batch(spec: ModelSpec, weights: Weights, cache, probs, labels) -> dict[str, np.ndarray]:
    """Gradient of the batch-mean cross-entropy w.r.t. every tensor in weights."""
    labels = np.asarray(labels)
    n = probs.shape[0]
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    # softmax + cross-entropy fused: d loss / d logits = p - onehot
    grad = (probs - onehot) / n
    grads = {}
    for i in range(len(spec.layers) - 2, -1, -1):
        layer, saved = spec.layers[i], cache[i]
        if isinstance(layer, Dense):
            k = weights.tensors[f"{i}.kernel"]
            grads[f"{i}.kernel"] = grad.T @ saved
            grads[f"{i}.bias"] = grad.sum(axis=0)
            grad = grad @ k
        elif isinstance(layer, Flatten):
            grad = grad.reshape(saved)
        elif isinstance(layer, MaxPool2d):
            in_shape, idx = saved
            nb, c, h, w = in_shape
            ph, pw = layer.pool_h, layer.pool_w
            ho, wo = idx.shape[2], idx.shape[3]
            blocks = np.zeros((nb, c, ho, wo, ph * pw))
            np.put_along_axis(blocks, idx[..., None], grad[..., None], axis=-1)
            full = np.zeros(in_shape)
            full[:, :, : ho * ph, : wo * pw] = (
                blocks.reshape(nb, c, ho, wo, ph, pw).transpose(0, 1, 2, 4, 3, 5).reshape(nb, c, ho * ph, wo * pw)
            )
            grad = full
        elif isinstance(layer, ReLU):
            grad = np.where(saved, grad, 0.0)
        elif isinstance(layer, Conv2d):
            padded_shape, win = saved
            k = weights.tensors[f"{i}.kernel"]
            grads[f"{i}.kernel"] = np.tensordot(grad, win, axes=([0, 2, 3], [0, 2, 3]))
            grads[f"{i}.bias"] = grad.sum(axis=(0, 2, 3))
            if i == 0:
                break
            s = layer.stride
            ho, wo = grad.shape[2], grad.shape[3]
            dx = np.zeros(padded_shape)
            for a in range(layer.kernel_h):
                for b in range(layer.kernel_w):
                    contrib = np.tensordot(grad, k[:, :, a, b], axes=([1], [0])).transpose(0, 3, 1, 2)
                    dx[:, :, a : a + s * (ho - 1) + 1 : s, b : b + s * (wo - 1) + 1 : s] += contrib
            p = layer.padding
            grad = dx[:, :, p : padded_shape[2] - p, p : padded_shape[3] - p] if p else dx
    return grads


def backward(spec: ModelSpec, weights: Weights, x, true_label: int) -> dict[str, np.ndarray]:
    if true_label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {true_label}")
    _check_weights(spec, weights)
    probs, cache = forward_batch(spec, weights, x)
    return backward_batch(spec, weights, cache, probs, [true_label])


def cross_entropy(probabilities, true_label: int) -> float:
    if true_label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {true_label}")
    return -math.log(max(float(probabilities[true_label]), PROB_FLOOR))


def decide(probabilities) -> tuple[int, float]:
    """argmax with ties going to label 0 (normal); returns (label, confidence)."""
    p0, p1 = float(probabilities[0]), float(probabilities[1])
    return (1, p1) if p1 > p0 else (0, p0)


def _spectrogram_values(spectrogram) -> np.ndarray:
    if isinstance(spectrogram, MelSpectrogram):
        return spectrogram.values
    return np.asarray(spectrogram, dtype=np.float64)


def to_input(weights: Weights, spectrogram) -> np.ndarray:
    """Normalized (1, n_frames, n_mels) model input."""
    values = _spectrogram_values(spectrogram)
    return ((values - weights.norm_mean) / weights.norm_std)[None]


def predict_proba(spec: ModelSpec, weights: Weights, spectrograms: Sequence, batch_size: int = 64) -> np.ndarray:
    _check_weights(spec, weights)
    out = []
    for start in range(0, len(spectrograms), batch_size):
        batch = np.stack([to_input(weights, s) for s in spectrograms[start : start + batch_size]])
        out.append(forward_batch(spec, weights, batch)[0])
    return np.concatenate(out) if out else np.zeros((0, 2))


def predict(spec: ModelSpec, weights: Weights, spectrogram) -> tuple[int, float]:
    probs, _ = forward(spec, weights, to_input(weights, spectrogram))
    return decide(probs)


def normalization_constants(spectrograms: Sequence) -> tuple[float, float]:
    stacked = np.stack([_spectrogram_values(s) for s in spectrograms])
    std = float(stacked.std())
    return float(stacked.mean()), std if std > 0 else 1.0


def train(
    spec: ModelSpec,
    dataset: Sequence[tuple],
    cfg: TrainConfig = TrainConfig(),
    on_epoch: Callable[[EpochStats], None] | None = None,
) -> tuple[Weights, list[EpochStats]]:
    """Mini-batch SGD on the mean cross-entropy.

    dataset holds (MelSpectrogram, label) pairs. Epoch loss and accuracy are
    accumulated over the batches as they are visited, before each update.
    """
    if not dataset:
        raise ValueError("training set is empty")
    labels = np.array([int(label) for _, label in dataset])
    if set(labels.tolist()) != {0, 1}:
        raise ValueError("training set must contain both classes")
    if cfg.norm_mean is None or cfg.norm_std is None:
        mean, std = normalization_constants([s for s, _ in dataset])
    else:
        mean, std = cfg.norm_mean, cfg.norm_std
    weights = init_weights(spec, cfg.rng_seed)
    weights.norm_mean, weights.norm_std = mean, std
    inputs = np.stack([to_input(weights, s) for s, _ in dataset])
    rng = np.random.default_rng([cfg.rng_seed, 1])
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        total_loss, correct = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            probs, cache = forward_batch(spec, weights, inputs[idx])
            batch_labels = labels[idx]
            total_loss += float(-np.log(np.maximum(probs[np.arange(len(idx)), batch_labels], PROB_FLOOR)).sum())
            correct += int(((probs[:, 1] > probs[:, 0]).astype(int) == batch_labels).sum())
            grads = backward_batch(spec, weights, cache, probs, batch_labels)
            for name, g in grads.items():
                weights.tensors[name] -= cfg.learning_rate * g
        stats = EpochStats(epoch + 1, total_loss / len(order), correct / len(order))
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
    return weights, history


def weights_to_json(spec: ModelSpec, weights: Weights) -> str:
    return json.dumps(
        {
            "input_shape": list(spec.input_shape),
            "spec": spec.to_list(),
            "norm": {"mean": float(weights.norm_mean).hex(), "std": float(weights.norm_std).hex()},
            "tensors": {
                name: {"shape": list(t.shape), "values": [float(v).hex() for v in t.ravel()]}
                for name, t in sorted(weights.tensors.items())
            },
        },
        indent=1,
    )


def weights_from_json(text: str) -> tuple[ModelSpec, Weights]:
    obj = json.loads(text)
    spec = ModelSpec.from_list(obj["spec"], obj["input_shape"])
    tensors = {
        name: np.array([float.fromhex(v) for v in t["values"]], dtype=np.float64).reshape(t["shape"])
        for name, t in obj["tensors"].items()
    }
    weights = Weights(tensors, float.fromhex(obj["norm"]["mean"]), float.fromhex(obj["norm"]["std"]))
    _check_weights(spec, weights)
    return spec, weights


def save_model(path, spec: ModelSpec, weights: Weights) -> None:
    Path(path).write_text(weights_to_json(spec, weights))


def load_model(path) -> tuple[ModelSpec, Weights]:
    return weights_from_json(Path(path).read_text())
