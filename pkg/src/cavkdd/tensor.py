"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a contiguous row-major numpy array plus an optional
gradient buffer. While a ``Tape`` is active, every primitive appends one
node (inputs, output, per-input gradient functions); ``backward`` walks the
nodes in exact reverse execution order, accumulating gradients additively
into every tensor that requires them, then clears the tape.

Design constraints honored here:

* single dtype per graph — float32 or float64, never mixed; binary ops
  raise ``ShapeError`` on dtype or shape disagreement;
* no aliasing — reshape and slicing copy, so in-place parameter updates
  (the optimizer's job) can never corrupt recorded activations;
* deterministic reductions — plain numpy sums/matmuls with a fixed
  evaluation order, so repeated runs agree bitwise for a fixed BLAS
  thread count.

``gradcheck`` is the correctness oracle used throughout the test suite:
central finite differences in double precision against the recorded
backward pass.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import GradientCheckError, ShapeError

GRAD_DTYPES = (np.float32, np.float64)

_active_tape: Optional["Tape"] = None


class Tensor:
    """Dense multi-dimensional array, optionally carrying a gradient."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        # asarray with order="C", not ascontiguousarray: the latter promotes
        # 0-d scalars (losses) to 1-d
        arr = np.asarray(data, dtype=dtype, order="C")
        if arr.dtype.type not in GRAD_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # Arithmetic sugar over the primitives below.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, mul(other, -1.0))
        return add(self, -other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return tensor_slice(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def max(self, axis=None):
        return reduce_max(self, axis=axis)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


class _Node:
    """One executed primitive: output, inputs, and per-input grad functions."""

    __slots__ = ("output", "inputs", "grad_fns", "name")

    def __init__(self, output: Tensor, inputs: Sequence[Tensor],
                 grad_fns: Sequence[Optional[Callable]], name: str):
        self.output = output
        self.inputs = tuple(inputs)
        self.grad_fns = tuple(grad_fns)
        self.name = name


class Tape:
    """Ordered record of the primitives executed during one forward pass.

    Used as a context manager; at most one tape is active at a time. With
    no active tape, primitives run forward-only (inference mode).
    """

    __slots__ = ("nodes", "_outer")

    def __init__(self):
        self.nodes: list[_Node] = []
        self._outer: Optional[Tape] = None

    def __enter__(self) -> "Tape":
        global _active_tape
        self._outer = _active_tape
        _active_tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _active_tape
        _active_tape = self._outer
        self._outer = None

    def __len__(self) -> int:
        return len(self.nodes)

    def clear(self) -> None:
        self.nodes.clear()


def active_tape() -> Optional[Tape]:
    return _active_tape


def record(output: Tensor, inputs: Sequence[Tensor],
           grad_fns: Sequence[Optional[Callable]], name: str) -> Tensor:
    """Register one executed primitive on the active tape.

    ``grad_fns[i]`` maps the output gradient to input ``i``'s gradient
    contribution. Layers with hand-written backwards (conv, LSTM, ...)
    call this directly; everything here funnels through it too.
    """
    if _active_tape is not None and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        _active_tape.nodes.append(_Node(output, inputs, grad_fns, name))
    return output


def backward(loss: Tensor, tape: Optional[Tape] = None) -> None:
    """Populate ``grad`` on every requires-grad tensor reachable from ``loss``.

    Visits the tape's nodes in exact reverse execution order, accumulating
    additively where a tensor feeds several consumers, then clears the tape.
    """
    tape = tape if tape is not None else _active_tape
    if tape is None or not tape.nodes:
        raise ShapeError("backward: no recorded tape")
    if loss.data.ndim != 0:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    loss.grad = np.ones((), dtype=loss.data.dtype)
    for node in reversed(tape.nodes):
        g = node.output.grad
        if g is None:
            continue
        for inp, fn in zip(node.inputs, node.grad_fns):
            if fn is None or not inp.requires_grad:
                continue
            contribution = fn(g)
            if contribution.shape != inp.data.shape:
                raise ShapeError(
                    f"{node.name} backward: gradient shape {contribution.shape} "
                    f"!= input shape {inp.data.shape}")
            inp._accumulate(contribution)
    tape.clear()


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _check_same(op: str, a: Tensor, b: Tensor, shapes: bool = True) -> None:
    if a.data.dtype != b.data.dtype:
        raise ShapeError(f"{op}: mixed dtypes {a.data.dtype} vs {b.data.dtype}")
    if shapes and a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# --- primitives -----------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    if b.data.ndim == 0 and a.data.ndim != 0:
        out = Tensor(a.data + b.data)
        return record(out, [a], [lambda g: g], "add")
    _check_same("add", a, b)
    out = Tensor(a.data + b.data)
    return record(out, [a, b], [lambda g: g, lambda g: g], "add")


def mul(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a)
    if b.data.ndim == 0 and a.data.ndim != 0:
        bd = b.data
        out = Tensor(a.data * bd)
        return record(out, [a], [lambda g: g * bd], "mul")
    _check_same("mul", a, b)
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)
    return record(out, [a, b], [lambda g: g * bd, lambda g: g * ad], "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_same("matmul", a, b, shapes=False)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    out = Tensor(ad @ bd)
    return record(out, [a, b],
                  [lambda g: g @ bd.T, lambda g: ad.T @ g], "matmul")


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out_data = a.data.reshape(shape).copy()
    except ValueError as e:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from e
    in_shape = a.data.shape
    out = Tensor(out_data)
    return record(out, [a], [lambda g: g.reshape(in_shape)], "reshape")


def tensor_slice(a: Tensor, key) -> Tensor:
    """Basic slicing; returns a copy, never a view."""
    out_data = a.data[key]
    if not isinstance(out_data, np.ndarray):
        out_data = np.asarray(out_data, dtype=a.data.dtype)
    out = Tensor(out_data.copy())

    def grad_fn(g, key=key, shape=a.data.shape, dtype=a.data.dtype):
        buf = np.zeros(shape, dtype=dtype)
        buf[key] = g
        return buf

    return record(out, [a], [grad_fn], "slice")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat: empty input list")
    first = tensors[0]
    for t in tensors[1:]:
        _check_same("concat", first, t, shapes=False)
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(
            f"concat: incompatible shapes {[t.shape for t in tensors]}") from e
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    grad_fns = []
    for i in range(len(tensors)):
        lo, hi = int(offsets[i]), int(offsets[i + 1])

        def grad_fn(g, lo=lo, hi=hi):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            return np.ascontiguousarray(g[tuple(index)])

        grad_fns.append(grad_fn)
    return record(Tensor(out_data), list(tensors), grad_fns, "concat")


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(np.sum(a.data, axis=axis, keepdims=keepdims))
    in_shape = a.data.shape

    def grad_fn(g):
        if axis is None:
            return np.broadcast_to(g, in_shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, in_shape).copy()

    return record(out, [a], [grad_fn], "reduce_sum")


def reduce_max(a: Tensor, axis=None) -> Tensor:
    """Maximum over ``axis`` (or all elements); ties route the gradient to
    the first occurrence only."""
    ad = a.data
    if axis is None:
        out = Tensor(np.max(ad))
        flat_idx = int(np.argmax(ad))

        def grad_fn(g):
            buf = np.zeros_like(ad)
            buf.flat[flat_idx] = g
            return buf
    else:
        out = Tensor(np.max(ad, axis=axis))
        idx = np.argmax(ad, axis=axis)

        def grad_fn(g):
            buf = np.zeros_like(ad)
            np.put_along_axis(buf, np.expand_dims(idx, axis),
                              np.expand_dims(g, axis), axis)
            return buf

    return record(out, [a], [grad_fn], "reduce_max")


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)
    out = Tensor(out_data)
    return record(out, [a], [lambda g: g * out_data], "exp")


def log(a: Tensor) -> Tensor:
    ad = a.data
    out = Tensor(np.log(ad))
    return record(out, [a], [lambda g: g / ad], "log")


def broadcast_to(a: Tensor, shape) -> Tensor:
    """Broadcast over extent-1 axes only; backward sums over them."""
    shape = tuple(int(s) for s in shape)
    in_shape = a.data.shape
    if len(shape) < len(in_shape):
        raise ShapeError(f"broadcast: cannot broadcast {in_shape} to {shape}")
    padded = (1,) * (len(shape) - len(in_shape)) + in_shape
    for have, want in zip(padded, shape):
        if have != want and have != 1:
            raise ShapeError(f"broadcast: cannot broadcast {in_shape} to {shape} "
                             f"(non-unit extent {have} vs {want})")
    out = Tensor(np.broadcast_to(a.data.reshape(padded), shape).copy())
    summed_axes = tuple(i for i, (have, want) in enumerate(zip(padded, shape))
                        if have == 1 and want != 1)

    def grad_fn(g):
        return g.sum(axis=summed_axes, keepdims=True).reshape(in_shape)

    return record(out, [a], [grad_fn], "broadcast")


# --- gradient checking ----------------------------------------------------

def _eval_scalar(f, x: Tensor) -> float:
    global _active_tape
    saved = _active_tape
    _active_tape = None
    try:
        y = f(x)
    finally:
        _active_tape = saved
    return float(y.data)


def gradcheck(f, x: Tensor, h: float = 1e-5,
              max_elements: Optional[int] = None,
              rng: Optional[np.random.Generator] = None) -> float:
    """Max relative error of the recorded gradient against central differences.

    ``f`` maps a Tensor to a scalar Tensor; evaluation must be in double
    precision. Relative error per element is
    ``|g_ad - g_fd| / max(1, |g_ad|, |g_fd|)`` with
    ``g_fd = (f(x + h e) - f(x - h e)) / (2 h)``.

    With ``max_elements`` set, only a seeded random subset of elements is
    differenced (used for large parameter tensors where the exhaustive sweep
    is prohibitive); the formula per element is unchanged.
    """
    if x.data.dtype != np.float64:
        raise GradientCheckError(f"gradcheck requires float64 input, got {x.data.dtype}")
    probe = Tensor(x.data.copy(), requires_grad=True)
    with Tape() as tape:
        y = f(probe)
        if y.data.ndim != 0:
            raise GradientCheckError(f"gradcheck: f must return a scalar, got shape {y.shape}")
        if tape.nodes:  # constant functions record nothing; gradient is zero
            backward(y, tape)
    if probe.grad is None:
        g_ad = np.zeros_like(probe.data)
    else:
        g_ad = probe.grad.copy()
    if not np.all(np.isfinite(g_ad)):
        raise GradientCheckError("gradcheck: non-finite analytic gradient")

    indices = np.arange(x.data.size)
    if max_elements is not None and x.data.size > max_elements:
        if rng is None:
            raise GradientCheckError("gradcheck: max_elements requires an rng")
        indices = rng.choice(x.data.size, size=max_elements, replace=False)

    worst = 0.0
    base = x.data.copy()
    for i in indices:
        xp = base.copy()
        xp.flat[i] += h
        fp = _eval_scalar(f, Tensor(xp))
        xm = base.copy()
        xm.flat[i] -= h
        fm = _eval_scalar(f, Tensor(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise GradientCheckError("gradcheck: non-finite function value")
        g_fd = (fp - fm) / (2.0 * h)
        g = g_ad.flat[i]
        err = abs(g - g_fd) / max(1.0, abs(g), abs(g_fd))
        worst = max(worst, err)
    return worst
