"""Neural building blocks: 1-D convolution, batch normalization, ReLU,
1-D max pooling, LSTM, dense, and the fused softmax cross-entropy head.

Every layer is a callable object mapping a Tensor to a Tensor and recording
one fused node on the active tape with a hand-written backward. Apart from
batch normalization's running statistics (updated only in train mode by the
owning training thread) layers are pure functions of (parameters, input,
mode).

Conventions fixed here: convolution uses valid padding and stride 1; pool
stride equals pool size; batch-norm momentum 0.99 with epsilon 1e-5 and the
block order Conv -> BatchNorm -> ReLU -> MaxPool; max-pool ties break to the
first index; LSTM starts from zero states with forget-gate bias 1; weights
are uniform Glorot draws from the builder's seeded generator.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import ShapeError
from .tensor import Tensor, record

BN_MOMENTUM = 0.99
BN_EPSILON = 1e-5


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int,
                   dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base layer: named trainable parameters plus non-trainable buffers."""

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def mark_restored(self) -> None:
        """Called after checkpointed buffers were installed."""

    def param_count(self) -> int:
        return sum(t.size for t in self.parameters().values())

    def __call__(self, x: Tensor, mode: str = "train") -> Tensor:
        raise NotImplementedError


class Conv1D(Layer):
    """Valid, stride-1 cross-correlation over the length axis.

    Input (batch, length, in_channels) -> (batch, length - kernel + 1, filters),
    y[b,t,f] = sum_{k,c} x[b,t+k,c] * W[k,c,f] + bias[f].
    """

    def __init__(self, in_channels: int, filters: int = 64, kernel_size: int = 3,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kernel_size = kernel_size
        self.in_channels = in_channels
        self.filters = filters
        self.weight = Tensor(
            glorot_uniform(rng, (kernel_size, in_channels, filters),
                           fan_in=kernel_size * in_channels,
                           fan_out=kernel_size * filters, dtype=dtype),
            requires_grad=True)
        self.bias = Tensor(np.zeros(filters, dtype=dtype), requires_grad=True)

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def __call__(self, x: Tensor, mode: str = "train") -> Tensor:
        if x.data.ndim != 3:
            raise ShapeError(f"conv1d: expected (batch, length, channels), got {x.shape}")
        batch, length, channels = x.data.shape
        k = self.kernel_size
        if channels != self.in_channels:
            raise ShapeError(f"conv1d: expected {self.in_channels} channels, got {channels}")
        if length < k:
            raise ShapeError(f"conv1d: input length {length} < kernel size {k}")
        out_len = length - k + 1
        xd = x.data
        # im2col: (batch, out_len, k * channels) then one GEMM
        cols = np.empty((batch, out_len, k * channels), dtype=xd.dtype)
        for j in range(k):
            cols[:, :, j * channels:(j + 1) * channels] = xd[:, j:j + out_len, :]
        w2d = self.weight.data.reshape(k * channels, self.filters)
        out_data = cols.reshape(batch * out_len, k * channels) @ w2d
        out_data = out_data.reshape(batch, out_len, self.filters) + self.bias.data

        def grad_x(g):
            gcols = g.reshape(batch * out_len, self.filters) @ w2d.T
            gcols = gcols.reshape(batch, out_len, k, channels)
            gx = np.zeros_like(xd)
            for j in range(k):
                gx[:, j:j + out_len, :] += gcols[:, :, j, :]
            return gx

        def grad_w(g):
            gw = cols.reshape(batch * out_len, k * channels).T @ \
                g.reshape(batch * out_len, self.filters)
            return gw.reshape(k, channels, self.filters)

        def grad_b(g):
            return g.sum(axis=(0, 1))

        out = Tensor(out_data)
        return record(out, [x, self.weight, self.bias],
                      [grad_x, grad_w, grad_b], "conv1d")


class BatchNorm(Layer):
    """Per-channel normalization over the last axis.

    Train mode normalizes with the current batch's population statistics and
    updates the running ones (running <- momentum * running + (1 - momentum)
    * batch); infer mode normalizes with the running statistics. Scale gamma
    and shift beta are trainable. The very first training batch seeds the
    running statistics directly, so short runs don't pay the cold-start cost
    of the 0.99 momentum.
    """

    def __init__(self, channels: int, momentum: float = BN_MOMENTUM,
                 epsilon: float = BN_EPSILON, dtype=np.float32):
        self.channels = channels
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        # first train batch seeds the running stats; EMA afterwards
        self._seen_batch = False

    def parameters(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def mark_restored(self) -> None:
        self._seen_batch = True

    def __call__(self, x: Tensor, mode: str = "train") -> Tensor:
        if x.data.shape[-1] != self.channels:
            raise ShapeError(f"batchnorm: expected {self.channels} channels, "
                             f"got shape {x.shape}")
        xd = x.data
        axes = tuple(range(xd.ndim - 1))
        if mode == "train":
            if xd.shape[0] < 2:
                raise ShapeError("batchnorm: train mode needs batch size >= 2")
            mean = xd.mean(axis=axes)
            var = xd.var(axis=axes)
            if not self._seen_batch:
                self.running_mean = mean.astype(xd.dtype)
                self.running_var = var.astype(xd.dtype)
                self._seen_batch = True
            else:
                self.running_mean = (self.momentum * self.running_mean
                                     + (1.0 - self.momentum) * mean).astype(xd.dtype)
                self.running_var = (self.momentum * self.running_var
                                    + (1.0 - self.momentum) * var).astype(xd.dtype)
        elif mode == "infer":
            mean = self.running_mean
            var = self.running_var
        else:
            raise ValueError(f"batchnorm: unknown mode {mode!r}")

        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        x_hat = (xd - mean) * inv_std
        out_data = self.gamma.data * x_hat + self.beta.data
        gamma_d = self.gamma.data

        if mode == "train":
            def grad_x(g):
                dxhat = g * gamma_d
                term = dxhat - dxhat.mean(axis=axes) \
                    - x_hat * (dxhat * x_hat).mean(axis=axes)
                return term * inv_std
        else:
            def grad_x(g):
                return g * gamma_d * inv_std

        def grad_gamma(g):
            return (g * x_hat).sum(axis=axes)

        def grad_beta(g):
            return g.sum(axis=axes)

        out = Tensor(out_data)
        return record(out, [x, self.gamma, self.beta],
                      [grad_x, grad_gamma, grad_beta], "batchnorm")


class ReLU(Layer):
    """max(0, x); subgradient at 0 is 0."""

    def __call__(self, x: Tensor, mode: str = "train") -> Tensor:
        mask = x.data > 0
        out = Tensor(np.where(mask, x.data, 0))
        return record(out, [x], [lambda g: g * mask], "relu")


class MaxPool1D(Layer):
    """Max over non-overlapping windows of ``pool_size`` along the length axis.

    The trailing remainder shorter than the window is dropped; the backward
    pass routes each window's gradient to the first argmax position.
    """

    def __init__(self, pool_size: int = 4):
        self.pool_size = pool_size

    def __call__(self, x: Tensor, mode: str = "train") -> Tensor:
        if x.data.ndim != 3:
            raise ShapeError(f"maxpool1d: expected (batch, length, channels), got {x.shape}")
        batch, length, channels = x.data.shape
        p = self.pool_size
        if length < p:
            raise ShapeError(f"maxpool1d: input length {length} < pool size {p}")
        out_len = length // p
        windows = x.data[:, :out_len * p, :].reshape(batch, out_len, p, channels)
        out_data = windows.max(axis=2)
        idx = windows.argmax(axis=2)  # first occurrence on ties

        def grad_x(g):
            gw = np.zeros_like(windows)
            np.put_along_axis(gw, idx[:, :, None, :], g[:, :, None, :], axis=2)
            gx = np.zeros((batch, length, channels), dtype=g.dtype)
            gx[:, :out_len * p, :] = gw.reshape(batch, out_len * p, channels)
            return gx

        out = Tensor(out_data)
        return record(out, [x], [grad_x], "maxpool1d")


class LSTM(Layer):
    """Single LSTM layer over (batch, steps, features).

    Standard recurrence with sigmoid gates and tanh candidate/cell output,
    zero initial hidden and cell state. Returns the final hidden state
    (batch, units), or the full sequence (batch, steps, units) when
    ``return_sequences`` is set (needed for stacking). Backward is full
    backpropagation through time.

    Gate weights are packed [input, forget, candidate, output] along the
    last axis of ``w_input`` (features, 4*units), ``w_recurrent``
    (units, 4*units) and ``bias`` (4*units,); the forget block of the bias
    starts at 1.
    """

    def __init__(self, in_features: int, units: int = 64,
                 return_sequences: bool = False,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.units = units
        self.in_features = in_features
        self.return_sequences = return_sequences
        self.w_input = Tensor(
            glorot_uniform(rng, (in_features, 4 * units),
                           fan_in=in_features, fan_out=4 * units, dtype=dtype),
            requires_grad=True)
        self.w_recurrent = Tensor(
            glorot_uniform(rng, (units, 4 * units),
                           fan_in=units, fan_out=4 * units, dtype=dtype),
            requires_grad=True)
        bias = np.zeros(4 * units, dtype=dtype)
        bias[units:2 * units] = 1.0  # forget gate stabilizer
        self.bias = Tensor(bias, requires_grad=True)

    def parameters(self):
        return {"w_input": self.w_input, "w_recurrent": self.w_recurrent,
                "bias": self.bias}

    def __call__(self, x: Tensor, mode: str = "train") -> Tensor:
        if x.data.ndim != 3:
            raise ShapeError(f"lstm: expected (batch, steps, features), got {x.shape}")
        batch, steps, features = x.data.shape
        if steps < 1:
            raise ShapeError("lstm: needs at least one time step")
        if features != self.in_features:
            raise ShapeError(f"lstm: expected {self.in_features} features, got {features}")
        h_units = self.units
        xd = x.data
        wx, wh, b = self.w_input.data, self.w_recurrent.data, self.bias.data

        h = np.zeros((batch, h_units), dtype=xd.dtype)
        c = np.zeros((batch, h_units), dtype=xd.dtype)
        cache = []
        hs = np.empty((batch, steps, h_units), dtype=xd.dtype)
        for t in range(steps):
            z = xd[:, t, :] @ wx + h @ wh + b
            i = _sigmoid(z[:, :h_units])
            f = _sigmoid(z[:, h_units:2 * h_units])
            g = np.tanh(z[:, 2 * h_units:3 * h_units])
            o = _sigmoid(z[:, 3 * h_units:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tanh_c = np.tanh(c)
            h = o * tanh_c
            hs[:, t, :] = h
            cache.append((h_prev, c_prev, i, f, g, o, tanh_c))

        out_data = hs.copy() if self.return_sequences else h.copy()
        return_sequences = self.return_sequences

        def _bptt(g_out):
            gwx = np.zeros_like(wx)
            gwh = np.zeros_like(wh)
            gb = np.zeros_like(b)
            gx = np.zeros_like(xd)
            dh = np.zeros((batch, h_units), dtype=xd.dtype)
            dc = np.zeros((batch, h_units), dtype=xd.dtype)
            for t in range(steps - 1, -1, -1):
                h_prev, c_prev, i, f, g, o, tanh_c = cache[t]
                if return_sequences:
                    dh = dh + g_out[:, t, :]
                elif t == steps - 1:
                    dh = dh + g_out
                do = dh * tanh_c
                dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
                di = dc * g
                df = dc * c_prev
                dg = dc * i
                dz = np.concatenate([di * i * (1.0 - i),
                                     df * f * (1.0 - f),
                                     dg * (1.0 - g * g),
                                     do * o * (1.0 - o)], axis=1)
                gwx += xd[:, t, :].T @ dz
                gwh += h_prev.T @ dz
                gb += dz.sum(axis=0)
                gx[:, t, :] = dz @ wx.T
                dh = dz @ wh.T
                dc = dc * f
            return gx, gwx, gwh, gb

        # The four inputs share one BPTT sweep; cache its result per output grad.
        memo = {}

        def _memoized(g_out, which):
            key = id(g_out)
            if memo.get("key") != key:
                memo["key"] = key
                memo["grads"] = _bptt(g_out)
            return memo["grads"][which]

        out = Tensor(out_data)
        return record(out,
                      [x, self.w_input, self.w_recurrent, self.bias],
                      [lambda g: _memoized(g, 0), lambda g: _memoized(g, 1),
                       lambda g: _memoized(g, 2), lambda g: _memoized(g, 3)],
                      "lstm")


class Dense(Layer):
    """Affine map x @ W + b."""

    def __init__(self, in_features: int, out_features: int,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Tensor(
            glorot_uniform(rng, (in_features, out_features),
                           fan_in=in_features, fan_out=out_features, dtype=dtype),
            requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def __call__(self, x: Tensor, mode: str = "train") -> Tensor:
        if x.data.ndim != 2:
            raise ShapeError(f"dense: expected (batch, features), got {x.shape}")
        if x.data.shape[1] != self.in_features:
            raise ShapeError(f"dense: expected {self.in_features} features, "
                             f"got {x.data.shape[1]}")
        xd, wd = x.data, self.weight.data
        out = Tensor(xd @ wd + self.bias.data)
        return record(out, [x, self.weight, self.bias],
                      [lambda g: g @ wd.T, lambda g: xd.T @ g,
                       lambda g: g.sum(axis=0)], "dense")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise max-shifted softmax (overflow-safe)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_crossentropy(logits: Tensor, onehot: np.ndarray):
    """Fused softmax + categorical cross-entropy.

    Returns (scalar mean loss over the batch, row-stochastic probability
    matrix). The fused backward is (p - onehot) / batch, exact and
    overflow-safe. Target rows must be exactly one-hot.
    """
    ld = logits.data
    if ld.ndim != 2:
        raise ShapeError(f"softmax_crossentropy: expected (batch, classes), got {logits.shape}")
    onehot = np.asarray(onehot)
    if onehot.shape != ld.shape:
        raise ShapeError(f"softmax_crossentropy: target shape {onehot.shape} "
                         f"!= logits shape {ld.shape}")
    is_one = onehot == 1
    if not (np.all(is_one.sum(axis=1) == 1)
            and np.all((onehot == 0) | is_one)):
        raise ShapeError("softmax_crossentropy: target rows must be exactly one-hot")
    batch = ld.shape[0]
    shifted = ld - ld.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    probs = np.exp(log_probs)
    loss_val = -(log_probs[is_one]).sum() / batch
    onehot_t = onehot.astype(ld.dtype)

    def grad_logits(g):
        return g * (probs - onehot_t) / batch

    loss = Tensor(np.asarray(loss_val, dtype=ld.dtype))
    record(loss, [logits], [grad_logits], "softmax_crossentropy")
    return loss, probs
