"""The four architectures compared in the study, assembled from the layer zoo.

All models consume a (batch, F) feature matrix and emit (batch, 3) logits;
the sequence models first reshape each row to a length-F series of one
channel. The hybrid network is

    [Conv1D(64, 3) -> BatchNorm -> ReLU -> MaxPool(4)] x 2
        -> LSTM(64) -> Dense(3)

so with F = 118 the sequence lengths run 118 -> 116 -> 29 -> 27 -> 6 and the
LSTM consumes (batch, 6, 64). Baselines follow the uniform "two hidden
layers, 64 nodes" reading: the DNN stacks two dense-64 + ReLU blocks, the
LSTM baseline stacks two 64-unit LSTM layers, and the CNN baseline reuses
the hybrid's convolutional trunk with a flattening dense head so the
hybrid-vs-CNN comparison isolates the recurrent part.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CompatibilityError, ShapeError
from .layers import LSTM, BatchNorm, Conv1D, Dense, Layer, MaxPool1D, ReLU
from .tensor import Tensor, reshape

MODEL_KINDS = ("dnn", "cnn", "lstm", "cnn_lstm")

N_CLASSES = 3
CONV_FILTERS = 64
CONV_KERNEL = 3
POOL_SIZE = 4
LSTM_UNITS = 64
DENSE_HIDDEN = 64


@dataclass(frozen=True)
class ArchitectureDescriptor:
    """Everything needed to rebuild a model's parameter shapes."""

    kind: str
    feature_length: int
    hyperparams: dict = field(default_factory=dict)
    param_count: int = 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "feature_length": self.feature_length,
                "hyperparams": dict(self.hyperparams),
                "param_count": self.param_count}

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureDescriptor":
        return cls(kind=d["kind"], feature_length=int(d["feature_length"]),
                   hyperparams=dict(d["hyperparams"]),
                   param_count=int(d["param_count"]))


def conv_block_lengths(feature_length: int) -> list[int]:
    """Sequence lengths through the two conv+pool blocks, starting at F."""
    lengths = [feature_length]
    n = feature_length
    for _ in range(2):
        n = n - (CONV_KERNEL - 1)
        lengths.append(n)
        n = n // POOL_SIZE
        lengths.append(n)
    return lengths


def _check_conv_lengths(feature_length: int) -> list[int]:
    lengths = conv_block_lengths(feature_length)
    for i, n in enumerate(lengths):
        if n < 1:
            raise ShapeError(
                f"feature length {feature_length} too small for two conv+pool "
                f"blocks: stage {i} length is {n}")
    return lengths


class Model:
    """Ordered layer graph with named parameters and a descriptor."""

    def __init__(self, descriptor: ArchitectureDescriptor,
                 layers: list[tuple[str, Layer]]):
        self.descriptor = descriptor
        self.layers = layers

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, layer in self.layers:
            for pname, p in layer.parameters().items():
                out[f"{name}.{pname}"] = p
        return out

    def named_arrays(self) -> dict[str, np.ndarray]:
        """Trainable parameters plus non-trainable buffers (running stats)."""
        out: dict[str, np.ndarray] = {}
        for name, layer in self.layers:
            for pname, p in layer.parameters().items():
                out[f"{name}.{pname}"] = p.data
            for bname, b in layer.buffers().items():
                out[f"{name}.{bname}"] = b
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Install saved parameter/buffer values (shapes must match)."""
        own = {}
        for name, layer in self.layers:
            for pname, p in layer.parameters().items():
                own[f"{name}.{pname}"] = ("param", layer, pname, p)
            for bname in layer.buffers():
                own[f"{name}.{bname}"] = ("buffer", layer, bname, None)
        missing = sorted(set(own) - set(arrays))
        extra = sorted(set(arrays) - set(own))
        if missing or extra:
            raise CompatibilityError(
                f"checkpoint arrays do not match model: missing={missing}, extra={extra}")
        for name, (role, layer, attr, p) in own.items():
            value = arrays[name]
            if role == "param":
                if p.data.shape != value.shape:
                    raise CompatibilityError(
                        f"parameter {name}: shape {value.shape} != expected {p.data.shape}")
                p.data = np.ascontiguousarray(value)
            else:
                setattr(layer, attr, np.ascontiguousarray(value))
        for _, layer in self.layers:
            layer.mark_restored()

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def forward(self, x, mode: str = "train") -> Tensor:
        """Logits for a (batch, F) matrix; mode picks batch-norm statistics."""
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x))
        if x.data.ndim != 2:
            raise ShapeError(f"forward: expected (batch, features), got {x.shape}")
        width = x.data.shape[1]
        expected = self.descriptor.feature_length
        if width != expected:
            raise CompatibilityError(
                f"feature length mismatch: model expects {expected}, data has {width}")
        kind = self.descriptor.kind
        if kind != "dnn":
            x = reshape(x, (x.data.shape[0], width, 1))
        for _, layer in self.layers:
            if layer is _FLATTEN:
                x = reshape(x, (x.data.shape[0], x.data.shape[1] * x.data.shape[2]))
            else:
                x = layer(x, mode=mode)
        return x


class _Flatten(Layer):
    """Marker: (batch, length, channels) -> (batch, length * channels)."""

    def __call__(self, x: Tensor, mode: str = "train") -> Tensor:  # pragma: no cover
        raise NotImplementedError("handled inline by Model.forward")


_FLATTEN = _Flatten()


def _conv_trunk(rng: np.random.Generator, dtype) -> list[tuple[str, Layer]]:
    return [
        ("block1.conv", Conv1D(1, CONV_FILTERS, CONV_KERNEL, rng=rng, dtype=dtype)),
        ("block1.bn", BatchNorm(CONV_FILTERS, dtype=dtype)),
        ("block1.relu", ReLU()),
        ("block1.pool", MaxPool1D(POOL_SIZE)),
        ("block2.conv", Conv1D(CONV_FILTERS, CONV_FILTERS, CONV_KERNEL, rng=rng, dtype=dtype)),
        ("block2.bn", BatchNorm(CONV_FILTERS, dtype=dtype)),
        ("block2.relu", ReLU()),
        ("block2.pool", MaxPool1D(POOL_SIZE)),
    ]


def _finish(kind: str, feature_length: int, layers: list[tuple[str, Layer]],
            hyper: dict) -> Model:
    count = sum(layer.param_count() for _, layer in layers)
    descriptor = ArchitectureDescriptor(kind=kind, feature_length=feature_length,
                                        hyperparams=hyper, param_count=count)
    return Model(descriptor, layers)


def build_cnn_lstm(feature_length: int, seed: int = 0, dtype=np.float32) -> Model:
    """The hybrid conv/recurrent network; LSTM reads the pooled positions as
    time steps with the 64 filters as features."""
    _check_conv_lengths(feature_length)
    rng = np.random.default_rng(seed)
    layers = _conv_trunk(rng, dtype)
    layers.append(("lstm", LSTM(CONV_FILTERS, LSTM_UNITS, rng=rng, dtype=dtype)))
    layers.append(("head", Dense(LSTM_UNITS, N_CLASSES, rng=rng, dtype=dtype)))
    hyper = {"filters": CONV_FILTERS, "kernel_size": CONV_KERNEL,
             "pool_size": POOL_SIZE, "lstm_units": LSTM_UNITS, "classes": N_CLASSES}
    return _finish("cnn_lstm", feature_length, layers, hyper)


def build_cnn(feature_length: int, seed: int = 0, dtype=np.float32) -> Model:
    lengths = _check_conv_lengths(feature_length)
    rng = np.random.default_rng(seed)
    layers = _conv_trunk(rng, dtype)
    flat = lengths[-1] * CONV_FILTERS
    layers.append(("flatten", _FLATTEN))
    layers.append(("head", Dense(flat, N_CLASSES, rng=rng, dtype=dtype)))
    hyper = {"filters": CONV_FILTERS, "kernel_size": CONV_KERNEL,
             "pool_size": POOL_SIZE, "flatten": flat, "classes": N_CLASSES}
    return _finish("cnn", feature_length, layers, hyper)


def build_dnn(feature_length: int, seed: int = 0, dtype=np.float32) -> Model:
    if feature_length < 1:
        raise ShapeError(f"feature length must be >= 1, got {feature_length}")
    rng = np.random.default_rng(seed)
    layers = [
        ("hidden1", Dense(feature_length, DENSE_HIDDEN, rng=rng, dtype=dtype)),
        ("hidden1.relu", ReLU()),
        ("hidden2", Dense(DENSE_HIDDEN, DENSE_HIDDEN, rng=rng, dtype=dtype)),
        ("hidden2.relu", ReLU()),
        ("head", Dense(DENSE_HIDDEN, N_CLASSES, rng=rng, dtype=dtype)),
    ]
    hyper = {"hidden": DENSE_HIDDEN, "classes": N_CLASSES}
    return _finish("dnn", feature_length, layers, hyper)


def build_lstm(feature_length: int, seed: int = 0, dtype=np.float32) -> Model:
    if feature_length < 1:
        raise ShapeError(f"feature length must be >= 1, got {feature_length}")
    rng = np.random.default_rng(seed)
    layers = [
        ("lstm1", LSTM(1, LSTM_UNITS, return_sequences=True, rng=rng, dtype=dtype)),
        ("lstm2", LSTM(LSTM_UNITS, LSTM_UNITS, rng=rng, dtype=dtype)),
        ("head", Dense(LSTM_UNITS, N_CLASSES, rng=rng, dtype=dtype)),
    ]
    hyper = {"lstm_units": LSTM_UNITS, "classes": N_CLASSES}
    return _finish("lstm", feature_length, layers, hyper)


_BUILDERS = {"dnn": build_dnn, "cnn": build_cnn, "lstm": build_lstm,
             "cnn_lstm": build_cnn_lstm}


def build_model(kind: str, feature_length: int, seed: int = 0,
                dtype=np.float32) -> Model:
    if kind not in _BUILDERS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return _BUILDERS[kind](feature_length, seed=seed, dtype=dtype)


def model_from_descriptor(descriptor: ArchitectureDescriptor,
                          dtype=np.float32, seed: int = 0) -> Model:
    model = build_model(descriptor.kind, descriptor.feature_length,
                        seed=seed, dtype=dtype)
    if model.descriptor.to_dict() != descriptor.to_dict():
        raise CompatibilityError(
            f"descriptor does not match builder output: {descriptor.to_dict()} "
            f"vs {model.descriptor.to_dict()}")
    return model
