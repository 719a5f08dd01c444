"""The gradient oracle suite: every primitive and layer against central
finite differences in double precision, plus each architecture end to end.

Per-primitive and per-layer checks must come in below 1e-6; end-to-end
model checks below 1e-4. Model parameter tensors are spot-checked on a
seeded random subset of elements (the oracle formula is unchanged; an
exhaustive sweep over ~70k parameters would be pointlessly slow).
Inputs feeding kinked or tie-breaking ops (ReLU, max pooling) are drawn
away from the kinks so the difference quotient stays two-sided.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from . import models
from . import tensor as T
from .layers import softmax_crossentropy
from .tensor import Tensor, gradcheck, reduce_sum

LAYER_TOL = 1e-6
END_TO_END_TOL = 1e-4
_PARAM_SAMPLES = 16


@dataclass(frozen=True)
class SuiteEntry:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def _rand(rng, *shape):
    return Tensor(rng.normal(size=shape))


def _away_from_zero(rng, *shape, gap=0.1):
    mag = rng.uniform(gap, 1.0, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return Tensor(mag * sign)


def _distinct(rng, *shape, step=0.05):
    """Values with pairwise gaps >> the finite-difference step, so argmax
    ties cannot flip under perturbation."""
    n = int(np.prod(shape))
    vals = (rng.permutation(n) * step).astype(np.float64)
    return Tensor(vals.reshape(shape))


def _primitive_entries(rng) -> list[SuiteEntry]:
    entries = []
    shapes = [(6,), (3, 4), (2, 3, 4)]  # ranks 1..3
    for shape in shapes:
        tag = "x".join(map(str, shape))
        other = Tensor(rng.normal(size=shape))
        entries.append(SuiteEntry(
            f"add[{tag}]",
            gradcheck(lambda t, o=other: reduce_sum(T.mul(T.add(t, o), t)),
                      _rand(rng, *shape)), LAYER_TOL))
        entries.append(SuiteEntry(
            f"mul[{tag}]",
            gradcheck(lambda t, o=other: reduce_sum(T.mul(t, o)),
                      _rand(rng, *shape)), LAYER_TOL))
        entries.append(SuiteEntry(
            f"reduce_sum[{tag}]",
            gradcheck(lambda t: T.mul(reduce_sum(t, axis=None), 2.0),
                      _rand(rng, *shape)), LAYER_TOL))
        entries.append(SuiteEntry(
            f"reduce_max[{tag}]",
            gradcheck(lambda t: T.reduce_max(t), _distinct(rng, *shape)),
            LAYER_TOL))
        entries.append(SuiteEntry(
            f"exp[{tag}]",
            gradcheck(lambda t: reduce_sum(T.exp(t)), _rand(rng, *shape)),
            LAYER_TOL))
        entries.append(SuiteEntry(
            f"log[{tag}]",
            gradcheck(lambda t: reduce_sum(T.log(t)),
                      Tensor(rng.uniform(0.5, 2.0, size=shape))), LAYER_TOL))
        entries.append(SuiteEntry(
            f"reshape[{tag}]",
            gradcheck(lambda t: reduce_sum(T.mul(T.reshape(t, (t.size,)),
                                                 T.reshape(t, (t.size,)))),
                      _rand(rng, *shape)), LAYER_TOL))
        entries.append(SuiteEntry(
            f"slice[{tag}]",
            gradcheck(lambda t: reduce_sum(T.mul(t[..., 1:], t[..., 1:])),
                      _rand(rng, *shape)), LAYER_TOL))
        entries.append(SuiteEntry(
            f"concat[{tag}]",
            gradcheck(lambda t, o=other: reduce_sum(
                T.mul(T.concat([t, o], axis=-1), T.concat([o, t], axis=-1))),
                _rand(rng, *shape)), LAYER_TOL))
    entries.append(SuiteEntry(
        "matmul[3x4@4x2]",
        gradcheck(lambda t, o=Tensor(rng.normal(size=(4, 2))):
                  reduce_sum(T.mul(T.matmul(t, o), T.matmul(t, o))),
                  _rand(rng, 3, 4)), LAYER_TOL))
    entries.append(SuiteEntry(
        "broadcast[1x4->3x4]",
        gradcheck(lambda t, o=Tensor(rng.normal(size=(3, 4))):
                  reduce_sum(T.mul(T.broadcast_to(t, (3, 4)), o)),
                  _rand(rng, 1, 4)), LAYER_TOL))
    return entries


def _swap_param(layer, attr, fn):
    def wrapped(w):
        saved = getattr(layer, attr)
        setattr(layer, attr, w)
        try:
            return fn()
        finally:
            setattr(layer, attr, saved)
    return wrapped


def _layer_entries(rng) -> list[SuiteEntry]:
    entries = []

    conv = L.Conv1D(3, filters=5, kernel_size=3, rng=rng, dtype=np.float64)
    x_conv = _rand(rng, 2, 8, 3)
    entries.append(SuiteEntry("conv1d/input", gradcheck(
        lambda t: reduce_sum(T.mul(conv(t), conv(t))), x_conv), LAYER_TOL))
    for attr in ("weight", "bias"):
        entries.append(SuiteEntry(f"conv1d/{attr}", gradcheck(
            _swap_param(conv, attr, lambda: reduce_sum(T.mul(conv(x_conv), conv(x_conv)))),
            Tensor(getattr(conv, attr).data.copy())), LAYER_TOL))

    bn = L.BatchNorm(4, dtype=np.float64)
    bn.gamma = Tensor(rng.normal(size=4) + 1.5, requires_grad=True)
    bn.beta = Tensor(rng.normal(size=4), requires_grad=True)
    x_bn = _rand(rng, 6, 4)
    entries.append(SuiteEntry("batchnorm/input(train)", gradcheck(
        lambda t: reduce_sum(T.mul(bn(t, mode="train"), bn(t, mode="train"))),
        x_bn), LAYER_TOL))
    for attr in ("gamma", "beta"):
        entries.append(SuiteEntry(f"batchnorm/{attr}", gradcheck(
            _swap_param(bn, attr, lambda: reduce_sum(
                T.mul(bn(x_bn, mode="train"), bn(x_bn, mode="train")))),
            Tensor(getattr(bn, attr).data.copy())), LAYER_TOL))
    entries.append(SuiteEntry("batchnorm/input(infer)", gradcheck(
        lambda t: reduce_sum(T.mul(bn(t, mode="infer"), bn(t, mode="infer"))),
        x_bn), LAYER_TOL))

    relu = L.ReLU()
    entries.append(SuiteEntry("relu/input", gradcheck(
        lambda t: reduce_sum(T.mul(relu(t), relu(t))),
        _away_from_zero(rng, 3, 7)), LAYER_TOL))

    pool = L.MaxPool1D(4)
    entries.append(SuiteEntry("maxpool1d/input", gradcheck(
        lambda t: reduce_sum(T.mul(pool(t), pool(t))),
        _distinct(rng, 2, 9, 3)), LAYER_TOL))

    lstm = L.LSTM(3, units=4, rng=rng, dtype=np.float64)
    x_lstm = _rand(rng, 2, 5, 3)
    entries.append(SuiteEntry("lstm/input", gradcheck(
        lambda t: reduce_sum(T.mul(lstm(t), lstm(t))), x_lstm), LAYER_TOL))
    for attr in ("w_input", "w_recurrent", "bias"):
        entries.append(SuiteEntry(f"lstm/{attr}", gradcheck(
            _swap_param(lstm, attr, lambda: reduce_sum(T.mul(lstm(x_lstm), lstm(x_lstm)))),
            Tensor(getattr(lstm, attr).data.copy())), LAYER_TOL))

    lstm_seq = L.LSTM(3, units=4, return_sequences=True, rng=rng, dtype=np.float64)
    entries.append(SuiteEntry("lstm/input(sequences)", gradcheck(
        lambda t: reduce_sum(T.mul(lstm_seq(t), lstm_seq(t))), x_lstm), LAYER_TOL))

    dense = L.Dense(5, 3, rng=rng, dtype=np.float64)
    x_dense = _rand(rng, 4, 5)
    entries.append(SuiteEntry("dense/input", gradcheck(
        lambda t: reduce_sum(T.mul(dense(t), dense(t))), x_dense), LAYER_TOL))
    for attr in ("weight", "bias"):
        entries.append(SuiteEntry(f"dense/{attr}", gradcheck(
            _swap_param(dense, attr, lambda: reduce_sum(T.mul(dense(x_dense), dense(x_dense)))),
            Tensor(getattr(dense, attr).data.copy())), LAYER_TOL))

    onehot = np.eye(3)[rng.integers(0, 3, size=4)]
    entries.append(SuiteEntry("softmax_crossentropy/logits", gradcheck(
        lambda t: softmax_crossentropy(t, onehot)[0], _rand(rng, 4, 3)),
        LAYER_TOL))
    return entries


def _model_entries(rng) -> list[SuiteEntry]:
    entries = []
    feature_lengths = {"dnn": 12, "lstm": 12, "cnn": 43, "cnn_lstm": 43}
    for kind in models.MODEL_KINDS:
        f_len = feature_lengths[kind]
        model = models.build_model(kind, f_len, seed=int(rng.integers(1 << 30)),
                                   dtype=np.float64)
        xb = rng.normal(size=(4, f_len))
        onehot = np.eye(3)[rng.integers(0, 3, size=4)]

        def loss_fn(model=model, onehot=onehot):
            def f(t):
                logits = model.forward(t, mode="train")
                loss, _ = softmax_crossentropy(logits, onehot)
                return loss
            return f

        entries.append(SuiteEntry(
            f"{kind}/input", gradcheck(loss_fn(), Tensor(xb)), END_TO_END_TOL))

        layer_map = dict(model.layers)
        for name, param in model.parameters().items():
            layer_name, attr = name.rsplit(".", 1)
            layer = layer_map[layer_name]

            def f_param(w, layer=layer, attr=attr, model=model, onehot=onehot,
                        xb=xb):
                saved = getattr(layer, attr)
                setattr(layer, attr, w)
                try:
                    logits = model.forward(Tensor(xb), mode="train")
                    loss, _ = softmax_crossentropy(logits, onehot)
                    return loss
                finally:
                    setattr(layer, attr, saved)

            entries.append(SuiteEntry(
                f"{kind}/{name}",
                gradcheck(f_param, Tensor(param.data.copy()),
                          max_elements=_PARAM_SAMPLES, rng=rng),
                END_TO_END_TOL))
    return entries


def run_suite(seed: int = 42) -> list[SuiteEntry]:
    """Primitives, layers, then end-to-end architectures; deterministic per
    seed."""
    rng = np.random.default_rng(seed)
    entries = _primitive_entries(rng)
    entries += _layer_entries(rng)
    entries += _model_entries(rng)
    return entries


def worst_layer_error(entries) -> float:
    return max(e.error for e in entries if e.tolerance == LAYER_TOL)


def worst_end_to_end_error(entries) -> float:
    return max(e.error for e in entries if e.tolerance == END_TO_END_TOL)
