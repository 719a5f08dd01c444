"""Parse raw KDD-format connection records, filter to the three retained
classes, and materialize immutable columnar datasets.

A raw line is 42 comma-separated fields: 41 features (three categorical —
protocol_type, service, flag — the rest numeric) plus a class label carrying
a trailing period ("neptune."). Labels are case-normalized to lowercase
before matching and duplicates are retained; both choices are required to
reproduce the published per-class counts.

Prepared datasets persist in a versioned little-endian columnar binary
(vocabulary tables in the header, categorical columns stored as vocabulary
indices, body guarded by a digest) so training runs never reparse text and
are bit-exact reproducible.
"""

from __future__ import annotations

import gzip
import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import DatasetFormatError, InputError, KddFormatError

KDD_COLUMNS = (
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes",
    "land", "wrong_fragment", "urgent", "hot", "num_failed_logins",
    "logged_in", "num_compromised", "root_shell", "su_attempted", "num_root",
    "num_file_creations", "num_shells", "num_access_files",
    "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate",
    "srv_rerror_rate", "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate",
    "dst_host_count", "dst_host_srv_count", "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate", "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
    "dst_host_srv_serror_rate", "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
)

CATEGORICAL_COLUMNS = ("protocol_type", "service", "flag")
CATEGORICAL_INDICES = (1, 2, 3)
NUMERIC_COLUMNS = tuple(c for c in KDD_COLUMNS if c not in CATEGORICAL_COLUMNS)
NUMERIC_INDICES = tuple(i for i in range(len(KDD_COLUMNS))
                        if i not in CATEGORICAL_INDICES)
N_FIELDS = len(KDD_COLUMNS) + 1  # 41 features + label

# Retained classes; declaration order fixes the stable integer indices.
CLASS_NAMES = ("normal", "neptune", "smurf")
CLASS_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}
DEFAULT_CLASSES = frozenset(CLASS_NAMES)

_MAGIC = b"CKDCOL01"
_FORMAT_VERSION = 1
_SPLITS = ("train", "test")


@dataclass(frozen=True)
class RawRecord:
    """One parsed connection record.

    ``numeric`` holds the 38 numeric features in KDD column order;
    ``raw`` keeps the original text fields (label period already stripped)
    so re-serialization is byte-faithful.
    """

    numeric: np.ndarray
    protocol_type: str
    service: str
    flag: str
    label: str
    raw: tuple

    def to_line(self) -> str:
        """Original line, modulo the stripped trailing label period."""
        return ",".join(self.raw)


def parse_kdd_line(line: str, lineno: int = 0) -> RawRecord:
    fields = line.split(",")
    if len(fields) != N_FIELDS:
        raise KddFormatError(
            f"line {lineno}: expected {N_FIELDS} comma-separated fields, "
            f"got {len(fields)}")
    label = fields[-1]
    if label.endswith("."):
        label = label[:-1]
    try:
        numeric = np.array([float(fields[i]) for i in NUMERIC_INDICES])
    except ValueError:
        for i in NUMERIC_INDICES:
            try:
                float(fields[i])
            except ValueError:
                raise KddFormatError(
                    f"line {lineno}: field {KDD_COLUMNS[i]!r} is not numeric: "
                    f"{fields[i]!r}") from None
        raise  # pragma: no cover - unreachable
    raw = tuple(fields[:-1]) + (label,)
    return RawRecord(numeric=numeric, protocol_type=fields[1],
                     service=fields[2], flag=fields[3], label=label, raw=raw)


def iter_kdd_records(path) -> Iterator[RawRecord]:
    """Stream records from a KDD text file (gzipped or plain); blank lines
    are skipped."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            try:
                yield parse_kdd_line(line, lineno)
            except KddFormatError as e:
                raise KddFormatError(f"{path}: {e}") from None


def parse_kdd_file(path) -> list[RawRecord]:
    """All records of a file, one per non-blank line, in source order."""
    return list(iter_kdd_records(path))


class Dataset:
    """Columnar, immutable-after-construction view of filtered records.

    Numeric features as one float64 matrix; categorical columns as int32
    vocabulary indices plus their first-appearance-ordered vocabularies;
    labels as stable class indices. Safe to share read-only across threads.
    """

    def __init__(self, numeric: np.ndarray, cat_codes: dict,
                 cat_vocab: dict, labels: np.ndarray, split: str):
        if split not in _SPLITS:
            raise InputError(f"split must be one of {_SPLITS}, got {split!r}")
        n = len(labels)
        if numeric.shape != (n, len(NUMERIC_COLUMNS)):
            raise InputError(f"numeric block shape {numeric.shape} does not "
                             f"match {n} records")
        for name in CATEGORICAL_COLUMNS:
            if len(cat_codes[name]) != n:
                raise InputError(f"categorical column {name} has "
                                 f"{len(cat_codes[name])} rows, expected {n}")
        self.numeric = numeric
        self.cat_codes = cat_codes
        self.cat_vocab = {k: tuple(v) for k, v in cat_vocab.items()}
        self.labels = labels
        self.split = split

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(CLASS_NAMES)).astype(np.int64)

    def class_count(self, name: str) -> int:
        return int(self.class_counts[CLASS_INDEX[name.lower()]])

    def categorical_strings(self, name: str) -> np.ndarray:
        vocab = np.array(self.cat_vocab[name], dtype=object)
        return vocab[self.cat_codes[name]]


def filter_classes(records: Iterable[RawRecord],
                   keep: Iterable[str] = DEFAULT_CLASSES,
                   split: str = "train") -> Dataset:
    """Keep only records whose (lowercased) label is in ``keep``; order is
    preserved and duplicates are retained. An empty result is legal."""
    keep_set = {k.lower() for k in keep}
    unknown = keep_set - set(CLASS_NAMES)
    if unknown:
        raise InputError(f"unknown class name(s) in keep: {sorted(unknown)}; "
                         f"retained classes are {CLASS_NAMES}")
    numeric_rows: list[np.ndarray] = []
    labels: list[int] = []
    codes: dict[str, list[int]] = {name: [] for name in CATEGORICAL_COLUMNS}
    vocab_index: dict[str, dict[str, int]] = {name: {} for name in CATEGORICAL_COLUMNS}
    for rec in records:
        label = rec.label.lower()
        if label not in keep_set:
            continue
        numeric_rows.append(rec.numeric)
        labels.append(CLASS_INDEX[label])
        for name, value in (("protocol_type", rec.protocol_type),
                            ("service", rec.service), ("flag", rec.flag)):
            index = vocab_index[name]
            code = index.setdefault(value, len(index))
            codes[name].append(code)
    n = len(labels)
    numeric = (np.vstack(numeric_rows) if n
               else np.empty((0, len(NUMERIC_COLUMNS))))
    return Dataset(
        numeric=numeric,
        cat_codes={name: np.asarray(codes[name], dtype=np.int32) for name in CATEGORICAL_COLUMNS},
        cat_vocab={name: tuple(vocab_index[name]) for name in CATEGORICAL_COLUMNS},
        labels=np.asarray(labels, dtype=np.int8),
        split=split)


def load_kdd_dataset(path, keep: Iterable[str] = DEFAULT_CLASSES,
                     split: str = "train") -> Dataset:
    """Parse + filter a raw KDD file in one streaming pass."""
    return filter_classes(iter_kdd_records(path), keep=keep, split=split)


def class_distribution(ds: Dataset) -> dict[str, float]:
    """Per-class fraction of records; fractions sum to 1 within 1e-12."""
    n = len(ds)
    if n == 0:
        raise InputError("class_distribution: empty dataset")
    counts = ds.class_counts
    return {name: counts[i] / n for i, name in enumerate(CLASS_NAMES)}


# --- columnar binary persistence -------------------------------------------

def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<H", len(b)) + b


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise DatasetFormatError("truncated dataset file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u16()).decode("utf-8")


def save_dataset(ds: Dataset, path) -> None:
    """Write the versioned columnar binary (atomically: temp + rename)."""
    n = len(ds)
    body = bytearray()
    body += np.ascontiguousarray(ds.numeric, dtype="<f8").tobytes()
    for name in CATEGORICAL_COLUMNS:
        body += np.ascontiguousarray(ds.cat_codes[name], dtype="<i4").tobytes()
    body += np.ascontiguousarray(ds.labels, dtype="i1").tobytes()
    body = bytes(body)

    header = bytearray()
    header += _MAGIC
    header += struct.pack("<I", _FORMAT_VERSION)
    header += struct.pack("<B", _SPLITS.index(ds.split))
    header += struct.pack("<Q", n)
    header += struct.pack("<I", len(NUMERIC_COLUMNS))
    for name in NUMERIC_COLUMNS:
        header += _pack_str(name)
    header += struct.pack("<I", len(CATEGORICAL_COLUMNS))
    for name in CATEGORICAL_COLUMNS:
        header += _pack_str(name)
        vocab = ds.cat_vocab[name]
        header += struct.pack("<I", len(vocab))
        for entry in vocab:
            header += _pack_str(entry)
    header += struct.pack("<B", len(CLASS_NAMES))
    for name in CLASS_NAMES:
        header += _pack_str(name)
    header += hashlib.sha256(body).digest()

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(bytes(header))
        fh.write(body)
    os.replace(tmp, path)


def load_dataset(path) -> Dataset:
    """Read a columnar binary back; any corruption raises, never misreads."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    reader = _Reader(path.read_bytes())
    if reader.take(len(_MAGIC)) != _MAGIC:
        raise DatasetFormatError(f"{path}: not a prepared dataset (bad magic)")
    version = reader.u32()
    if version != _FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported format version {version}")
    split_code = reader.take(1)[0]
    if split_code >= len(_SPLITS):
        raise DatasetFormatError(f"{path}: bad split tag {split_code}")
    split = _SPLITS[split_code]
    n = reader.u64()
    n_numeric = reader.u32()
    numeric_names = [reader.string() for _ in range(n_numeric)]
    if tuple(numeric_names) != NUMERIC_COLUMNS:
        raise DatasetFormatError(f"{path}: unexpected numeric column set")
    n_cat = reader.u32()
    cat_vocab = {}
    cat_names = []
    for _ in range(n_cat):
        name = reader.string()
        vocab = tuple(reader.string() for _ in range(reader.u32()))
        cat_names.append(name)
        cat_vocab[name] = vocab
    if tuple(cat_names) != CATEGORICAL_COLUMNS:
        raise DatasetFormatError(f"{path}: unexpected categorical column set")
    n_classes = reader.take(1)[0]
    classes = tuple(reader.string() for _ in range(n_classes))
    if classes != CLASS_NAMES:
        raise DatasetFormatError(f"{path}: unexpected class set {classes}")
    digest = reader.take(32)
    body = reader.buf[reader.pos:]
    if hashlib.sha256(body).digest() != digest:
        raise DatasetFormatError(f"{path}: body digest mismatch (corrupted file)")

    expected = n * n_numeric * 8 + n_cat * n * 4 + n
    if len(body) != expected:
        raise DatasetFormatError(f"{path}: body length {len(body)} != expected {expected}")
    br = _Reader(body)
    numeric = np.frombuffer(br.take(n * n_numeric * 8), dtype="<f8")
    numeric = numeric.reshape(n, n_numeric).copy()
    cat_codes = {}
    for name in CATEGORICAL_COLUMNS:
        codes = np.frombuffer(br.take(n * 4), dtype="<i4").copy()
        if codes.size and (codes.min() < 0 or codes.max() >= len(cat_vocab[name])):
            raise DatasetFormatError(f"{path}: {name} code out of vocabulary range")
        cat_codes[name] = codes
    labels = np.frombuffer(br.take(n), dtype="i1").copy()
    if labels.size and (labels.min() < 0 or labels.max() >= len(CLASS_NAMES)):
        raise DatasetFormatError(f"{path}: label index out of range")
    return Dataset(numeric=numeric, cat_codes=cat_codes, cat_vocab=cat_vocab,
                   labels=labels, split=split)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
