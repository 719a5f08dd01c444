"""Mini-batch training loop: seeded validation holdout, per-epoch logging,
best-model retention.

Protocol defaults follow the study setup: 10 epochs, training batches of
500, a 30% validation holdout, evaluation batches of 20. The optimizer is
Adam (1e-3, 0.9/0.999, eps 1e-7) with plain SGD behind a flag; the paper
family's vocabulary implies these defaults but never states them, so they
live in ``TrainConfig`` where runs record them.

Per-epoch training loss/accuracy are the running means over that epoch's
batches (what a progress bar shows); validation metrics are a full
infer-mode pass at epoch end. The checkpoint with the highest validation
accuracy is retained, earlier epoch winning ties.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CompatibilityError, InputError, ShapeError, TrainingDivergedError
from .layers import softmax_crossentropy
from .models import ArchitectureDescriptor, Model, N_CLASSES
from .preprocess import FeatureMatrix, PreprocessorState
from .tensor import Tape, Tensor, backward

PRECISION_DTYPES = {"single": np.float32, "double": np.float64}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 500
    validation_fraction: float = 0.30
    eval_batch_size: int = 20
    seed: int = 42
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    optimizer: str = "adam"
    precision: str = "single"
    resample: str = "none"
    log_steps: bool = False
    record_timings: bool = True

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise InputError(f"validation fraction must be in (0, 1), "
                             f"got {self.validation_fraction}")
        if self.batch_size < 2:
            raise InputError("batch size must be >= 2 (batch-norm minimum)")
        if self.epochs < 1:
            raise InputError("nothing to train: epochs must be >= 1")
        if self.eval_batch_size < 1:
            raise InputError("evaluation batch size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise InputError(f"unknown optimizer {self.optimizer!r}")
        if self.precision not in PRECISION_DTYPES:
            raise InputError(f"precision must be single|double, got {self.precision!r}")
        if self.resample not in ("none", "upsample", "downsample"):
            raise InputError(f"resample must be none|upsample|downsample, "
                             f"got {self.resample!r}")
        if self.learning_rate <= 0:
            raise InputError("learning rate must be positive")

    @property
    def dtype(self):
        return PRECISION_DTYPES[self.precision]


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    seconds: float


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)
    step_losses: Optional[list[float]] = None

    def best_epoch(self) -> EpochStats:
        if not self.epochs:
            raise InputError("empty training log")
        best = self.epochs[0]
        for entry in self.epochs[1:]:
            if entry.val_acc > best.val_acc:  # strict: ties keep earlier epoch
                best = entry
        return best

    def best_val_accuracy(self) -> float:
        return self.best_epoch().val_acc

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "train_acc",
                             "val_loss", "val_acc", "seconds"])
            for e in self.epochs:
                writer.writerow([e.epoch, repr(e.train_loss), repr(e.train_acc),
                                 repr(e.val_loss), repr(e.val_acc),
                                 repr(e.seconds)])


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: TrainConfig) -> "OptimizerState":
        return cls(kind=config.optimizer, learning_rate=config.learning_rate,
                   beta1=config.beta1, beta2=config.beta2,
                   epsilon=config.epsilon)

    def copy(self) -> "OptimizerState":
        return OptimizerState(kind=self.kind, learning_rate=self.learning_rate,
                              beta1=self.beta1, beta2=self.beta2,
                              epsilon=self.epsilon, step_count=self.step_count,
                              m={k: a.copy() for k, a in self.m.items()},
                              v={k: a.copy() for k, a in self.v.items()})


@dataclass
class Checkpoint:
    """Best-model container: everything needed to evaluate or resume."""

    descriptor: ArchitectureDescriptor
    arrays: dict
    optimizer: OptimizerState
    log: TrainLog
    preprocessor: Optional[PreprocessorState] = None
    format_version: int = 1


def split_validation(X: np.ndarray, y: np.ndarray, fraction: float,
                     seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Uniform seeded split into (X_train, X_val, y_train, y_val).

    Validation size is round(N * fraction), clamped so both parts are
    non-empty; the index partition is disjoint, exhaustive, and identical
    for identical seeds.
    """
    if not 0.0 < fraction < 1.0:
        raise InputError(f"validation fraction must be in (0, 1), got {fraction}")
    n = len(y)
    if len(X) != n:
        raise ShapeError(f"split: X has {len(X)} rows but y has {n}")
    if n < 2:
        raise InputError("split: need at least 2 rows")
    n_val = int(round(n * fraction))
    n_val = min(max(n_val, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    val_idx = np.sort(perm[:n_val])
    train_idx = np.sort(perm[n_val:])
    return X[train_idx], X[val_idx], y[train_idx], y[val_idx]


def optimizer_step(params: dict, grads: dict, state: OptimizerState) -> None:
    """Apply one optimizer update in place.

    ``params`` maps names to Tensors, ``grads`` maps the same names to
    arrays of identical shape. Adam keeps first/second moments per
    parameter with bias correction; SGD is the plain rule.
    """
    if set(params) != set(grads):
        raise ShapeError(f"optimizer_step: parameter/gradient name mismatch: "
                         f"{sorted(set(params) ^ set(grads))}")
    if state.kind == "sgd":
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.data.shape:
                raise ShapeError(f"optimizer_step: {name} gradient shape "
                                 f"{g.shape} != parameter shape {p.data.shape}")
            p.data -= state.learning_rate * g
        state.step_count += 1
        return
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeError(f"optimizer_step: {name} gradient shape {g.shape} "
                             f"!= parameter shape {p.data.shape}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        p.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


def _one_hot(y: np.ndarray, dtype) -> np.ndarray:
    return np.eye(N_CLASSES, dtype=dtype)[y]


def resample_classes(X: np.ndarray, y: np.ndarray, mode: str,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Balance class sizes in the training portion.

    ``upsample`` repeats minority rows with replacement up to the largest
    class; ``downsample`` subsamples majority classes without replacement
    down to the smallest. Off by default: the published protocol keeps the
    skewed distribution and only suggests resampling as mitigation.
    """
    if mode == "none":
        return X, y
    counts = np.bincount(y, minlength=N_CLASSES)
    present = np.nonzero(counts)[0]
    parts = []
    if mode == "upsample":
        target = int(counts[present].max())
        for c in present:
            members = np.nonzero(y == c)[0]
            if len(members) < target:
                extra = rng.choice(members, size=target - len(members),
                                   replace=True)
                members = np.concatenate([members, extra])
            parts.append(members)
    else:
        target = int(counts[present].min())
        for c in present:
            members = np.nonzero(y == c)[0]
            parts.append(rng.choice(members, size=target, replace=False))
    idx = np.sort(np.concatenate(parts))
    return X[idx], y[idx]


def evaluate_loss_accuracy(model: Model, X: np.ndarray, y: np.ndarray,
                           batch_size: int) -> tuple[float, float]:
    """Mean cross-entropy and accuracy over an infer-mode batched pass."""
    n = len(y)
    total_loss = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        xb = X[start:start + batch_size]
        yb = y[start:start + batch_size]
        logits = model.forward(Tensor(xb), mode="infer")
        loss, probs = softmax_crossentropy(logits, _one_hot(yb, xb.dtype))
        total_loss += float(loss.data) * len(yb)
        correct += int((probs.argmax(axis=1) == yb).sum())
    return total_loss / n, correct / n


def train(model: Model, X, y=None, config: TrainConfig = TrainConfig(),
          preprocessor: Optional[PreprocessorState] = None
          ) -> tuple[Checkpoint, TrainLog]:
    """Run the full protocol and return (best checkpoint, log).

    Each epoch reshuffles the training rows with the seeded generator and
    iterates batches of the configured size, keeping a final partial batch
    only when it has at least 2 rows. A non-finite loss aborts with the
    epoch/step in the message.
    """
    if isinstance(X, FeatureMatrix):
        if y is not None:
            raise InputError("pass labels inside the FeatureMatrix or separately, not both")
        X, y = X.values, X.labels
    X = np.asarray(X)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeError(f"train: X {X.shape} and y {y.shape} misaligned")
    if X.shape[1] != model.descriptor.feature_length:
        raise CompatibilityError(
            f"feature length mismatch: model expects "
            f"{model.descriptor.feature_length}, data has {X.shape[1]}")
    dtype = config.dtype
    X = X.astype(dtype, copy=False)
    param_dtype = next(iter(model.parameters().values())).data.dtype
    if param_dtype != dtype:
        raise CompatibilityError(
            f"model parameters are {param_dtype} but config precision asks "
            f"for {np.dtype(dtype)}; build the model with the same dtype")

    x_tr, x_val, y_tr, y_val = split_validation(
        X, y, config.validation_fraction, config.seed)
    if config.resample != "none":
        x_tr, y_tr = resample_classes(x_tr, y_tr, config.resample,
                                      np.random.default_rng([config.seed, 2]))
    shuffle_rng = np.random.default_rng([config.seed, 1])

    params = model.parameters()
    opt_state = OptimizerState.from_config(config)
    log = TrainLog(step_losses=[] if config.log_steps else None)

    best_acc = -1.0
    best_arrays: dict = {}
    best_opt: Optional[OptimizerState] = None

    n_tr = len(y_tr)
    for epoch in range(1, config.epochs + 1):
        tic = time.perf_counter()
        perm = shuffle_rng.permutation(n_tr)
        loss_sum = 0.0
        correct = 0
        seen = 0
        step = 0
        for start in range(0, n_tr, config.batch_size):
            idx = perm[start:start + config.batch_size]
            if len(idx) < 2:
                break  # dropped final partial batch (batch-norm minimum)
            step += 1
            xb = x_tr[idx]
            yb = y_tr[idx]
            with Tape() as tape:
                logits = model.forward(Tensor(xb), mode="train")
                loss, probs = softmax_crossentropy(logits, _one_hot(yb, dtype))
                loss_val = float(loss.data)
                if not np.isfinite(loss_val):
                    raise TrainingDivergedError(
                        f"non-finite loss {loss_val} at epoch {epoch} step {step}")
                backward(loss, tape)
            grads = {name: (p.grad if p.grad is not None
                            else np.zeros_like(p.data))
                     for name, p in params.items()}
            optimizer_step(params, grads, opt_state)
            model.zero_grad()
            loss_sum += loss_val * len(idx)
            correct += int((probs.argmax(axis=1) == yb).sum())
            seen += len(idx)
            if log.step_losses is not None:
                log.step_losses.append(loss_val)
        val_loss, val_acc = evaluate_loss_accuracy(
            model, x_val, y_val, config.eval_batch_size)
        seconds = (time.perf_counter() - tic) if config.record_timings else 0.0
        log.epochs.append(EpochStats(
            epoch=epoch, train_loss=loss_sum / seen, train_acc=correct / seen,
            val_loss=val_loss, val_acc=val_acc, seconds=seconds))
        if val_acc > best_acc:
            best_acc = val_acc
            best_arrays = {k: a.copy() for k, a in model.named_arrays().items()}
            best_opt = opt_state.copy()

    checkpoint = Checkpoint(descriptor=model.descriptor, arrays=best_arrays,
                            optimizer=best_opt, log=log,
                            preprocessor=preprocessor)
    return checkpoint, log
