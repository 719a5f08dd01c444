"""Binary checkpoint container: magic, format version, digested sections.

Layout: 8-byte magic, u32 version, u32 section count, then one table entry
per section (name, absolute offset, length, sha256) followed by the
payloads. All integers and floats little-endian. Tensors round-trip
bitwise; any truncation, version skew, or digest mismatch raises instead
of misreading.

Wall-clock seconds in the embedded log are stored as 0.0 so checkpoints
from identical seeded runs are byte-identical; real timings belong to the
TrainLog CSV and the run manifest.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointFormatError, InputError
from .models import ArchitectureDescriptor, Model, model_from_descriptor
from .preprocess import state_from_bytes, state_to_bytes
from .train import Checkpoint, EpochStats, OptimizerState, TrainLog

MAGIC = b"CKPTCAV1"
FORMAT_VERSION = 1

_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def _pack_named_arrays(arrays: dict) -> bytes:
    out = bytearray()
    out += struct.pack("<I", len(arrays))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype not in _DTYPE_CODES:
            raise InputError(f"cannot serialize array {name} of dtype {arr.dtype}")
        nb = name.encode("utf-8")
        out += struct.pack("<H", len(nb)) + nb
        out += struct.pack("<B", _DTYPE_CODES[arr.dtype])
        out += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            out += struct.pack("<I", dim)
        out += np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"),
                                                copy=False).tobytes()
    return bytes(out)


class _Cursor:
    def __init__(self, buf: bytes, context: str):
        self.buf = buf
        self.pos = 0
        self.context = context

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointFormatError(f"{self.context}: truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _unpack_named_arrays(buf: bytes, context: str) -> dict:
    cur = _Cursor(buf, context)
    arrays = _unpack_table(cur)
    if cur.pos != len(buf):
        raise CheckpointFormatError(f"{context}: trailing bytes")
    return arrays


def _pack_optimizer(state: OptimizerState) -> bytes:
    out = bytearray()
    out += struct.pack("<B", 0 if state.kind == "adam" else 1)
    out += struct.pack("<dddd", state.learning_rate, state.beta1,
                       state.beta2, state.epsilon)
    out += struct.pack("<Q", state.step_count)
    out += _pack_named_arrays(state.m)
    out += _pack_named_arrays(state.v)
    return bytes(out)


def _unpack_optimizer(buf: bytes) -> OptimizerState:
    cur = _Cursor(buf, "optimizer")
    (kind_code,) = cur.unpack("<B")
    lr, b1, b2, eps = cur.unpack("<dddd")
    (t,) = cur.unpack("<Q")
    rest = buf[cur.pos:]
    # the two array tables are self-delimiting; split by re-walking
    m_cur = _Cursor(rest, "optimizer.m")
    m = _unpack_table(m_cur)
    v_cur = _Cursor(rest[m_cur.pos:], "optimizer.v")
    v = _unpack_table(v_cur)
    if m_cur.pos + v_cur.pos != len(rest):
        raise CheckpointFormatError("optimizer: trailing bytes")
    return OptimizerState(kind="adam" if kind_code == 0 else "sgd",
                          learning_rate=lr, beta1=b1, beta2=b2, epsilon=eps,
                          step_count=t, m=m, v=v)


def _unpack_table(cur: _Cursor) -> dict:
    (count,) = cur.unpack("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        (code,) = cur.unpack("<B")
        if code not in _CODE_DTYPES:
            raise CheckpointFormatError(f"{cur.context}: unknown dtype code {code}")
        (ndim,) = cur.unpack("<B")
        shape = tuple(cur.unpack("<I")[0] for _ in range(ndim))
        dtype = _CODE_DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arrays[name] = np.frombuffer(cur.take(nbytes), dtype=dtype).reshape(shape).copy()
    return arrays


def _pack_log(log: TrainLog) -> bytes:
    payload = {
        "epochs": [[e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc,
                    0.0]  # timings excluded for run-to-run byte identity
                   for e in log.epochs],
        "step_losses": log.step_losses,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _unpack_log(buf: bytes) -> TrainLog:
    payload = json.loads(buf.decode("utf-8"))
    epochs = [EpochStats(epoch=int(e[0]), train_loss=e[1], train_acc=e[2],
                         val_loss=e[3], val_acc=e[4], seconds=e[5])
              for e in payload["epochs"]]
    return TrainLog(epochs=epochs, step_losses=payload["step_losses"])


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Serialize atomically (write temp, rename on success)."""
    sections: list[tuple[str, bytes]] = [
        ("descriptor", json.dumps(ckpt.descriptor.to_dict(), sort_keys=True,
                                  separators=(",", ":")).encode("utf-8")),
    ]
    if ckpt.preprocessor is not None:
        sections.append(("preprocessor", state_to_bytes(ckpt.preprocessor)))
    sections.append(("parameters", _pack_named_arrays(ckpt.arrays)))
    if ckpt.optimizer is not None:
        sections.append(("optimizer", _pack_optimizer(ckpt.optimizer)))
    sections.append(("trainlog", _pack_log(ckpt.log)))

    table_size = 0
    for name, payload in sections:
        table_size += 2 + len(name.encode("utf-8")) + 8 + 8 + 32
    header_size = len(MAGIC) + 4 + 4 + table_size

    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    out += struct.pack("<I", len(sections))
    offset = header_size
    for name, payload in sections:
        nb = name.encode("utf-8")
        out += struct.pack("<H", len(nb)) + nb
        out += struct.pack("<Q", offset)
        out += struct.pack("<Q", len(payload))
        out += hashlib.sha256(payload).digest()
        offset += len(payload)
    for _, payload in sections:
        out += payload

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(bytes(out))
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    buf = path.read_bytes()
    cur = _Cursor(buf, str(path))
    if cur.take(len(MAGIC)) != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint (bad magic)")
    (version,) = cur.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{path}: unsupported checkpoint version {version} "
            f"(this build reads version {FORMAT_VERSION})")
    (count,) = cur.unpack("<I")
    table = []
    for _ in range(count):
        (name_len,) = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        (offset,) = cur.unpack("<Q")
        (length,) = cur.unpack("<Q")
        digest = cur.take(32)
        table.append((name, offset, length, digest))

    payloads = {}
    for name, offset, length, digest in table:
        if offset + length > len(buf):
            raise CheckpointFormatError(f"{path}: section {name} out of bounds")
        payload = buf[offset:offset + length]
        if hashlib.sha256(payload).digest() != digest:
            raise CheckpointFormatError(
                f"{path}: section {name} digest mismatch (corrupted file)")
        payloads[name] = payload

    for required in ("descriptor", "parameters", "trainlog"):
        if required not in payloads:
            raise CheckpointFormatError(f"{path}: missing section {required}")

    descriptor = ArchitectureDescriptor.from_dict(
        json.loads(payloads["descriptor"].decode("utf-8")))
    preprocessor = (state_from_bytes(payloads["preprocessor"])
                    if "preprocessor" in payloads else None)
    arrays = _unpack_named_arrays(payloads["parameters"], "parameters")
    optimizer = (_unpack_optimizer(payloads["optimizer"])
                 if "optimizer" in payloads else None)
    log = _unpack_log(payloads["trainlog"])
    return Checkpoint(descriptor=descriptor, arrays=arrays, optimizer=optimizer,
                      log=log, preprocessor=preprocessor,
                      format_version=version)


def restore_model(ckpt: Checkpoint) -> Model:
    """Rebuild the architecture and install the checkpointed values."""
    dtypes = {arr.dtype for arr in ckpt.arrays.values()}
    dtype = np.float64 if np.dtype("float64") in dtypes else np.float32
    model = model_from_descriptor(ckpt.descriptor, dtype=dtype)
    model.load_arrays(ckpt.arrays)
    return model
