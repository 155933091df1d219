"""Embedding-set container and file I/O.

On-disk layout (".dgme", little-endian): 4-byte magic "DGME", u32 version,
u64 n, u64 d, u8 dtype (0 = float32), u8 flags (bit0 = labels), 6 reserved
zero bytes — 32 bytes of header — then n*d float32 row-major, then n int32
labels if flagged.  A JSON sidecar "<path>.json" carries provenance strings.
CSV is accepted as an input convenience for small sets (n <= 10,000).
"""

from __future__ import annotations

import csv
import enum
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .errors import (
    BadMagic,
    CountExceedsN,
    IoFailure,
    MissingLabels,
    NonDivisibleCount,
    NonFiniteValue,
    StratifiedWithoutLabels,
    TruncatedPayload,
    VersionUnsupported,
)

MAGIC = b"DGME"
VERSION = 1
_HEADER = struct.Struct("<4sIQQBB6s")  # 32 bytes
_DTYPE_FLOAT32 = 0
_FLAG_LABELS = 0x01
CSV_ROW_CAP = 10_000


class SetRole(enum.Enum):
    REAL_TRAIN = "real_train"
    REAL_TEST = "real_test"
    GENERATED = "generated"


@dataclass
class EmbeddingSet:
    """An immutable n x d block of embeddings with optional class labels.

    Files always hold float32; in-memory derived sets (e.g. PCA projections)
    may carry float64 and must be cast explicitly before writing.
    """

    data: np.ndarray
    labels: np.ndarray | None = None
    encoder_id: str = ""
    source_id: str = ""

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got shape {data.shape}")
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float32)
        if not np.isfinite(data).all():
            raise ValueError("data contains non-finite values")
        data = np.ascontiguousarray(data)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.ndim != 1 or labels.shape[0] != data.shape[0]:
                raise ValueError(
                    f"labels must have length n={data.shape[0]}, "
                    f"got shape {labels.shape}"
                )
            if not np.issubdtype(labels.dtype, np.integer):
                raise ValueError("labels must be integers")
            if labels.min() < 0:
                raise ValueError("class ids must be >= 0")
            labels = np.ascontiguousarray(labels.astype(np.int32))
            labels.flags.writeable = False
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def read_embeddings(path) -> EmbeddingSet:
    """Load a .dgme (or small .csv) file into a validated EmbeddingSet."""
    path = os.fspath(path)
    if path.lower().endswith(".csv"):
        return _read_csv(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            body = fh.read()
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc

    if len(head) >= 4 and head[:4] != MAGIC:
        raise BadMagic(path, offset=0)
    if len(head) < _HEADER.size:
        raise TruncatedPayload(path, _HEADER.size, len(head), offset=len(head))

    magic, version, n, d, dtype, flags, _reserved = _HEADER.unpack(head)
    if magic != MAGIC:
        raise BadMagic(path, offset=0)
    if version != VERSION:
        raise VersionUnsupported(path, f"format version {version}", offset=4)
    if dtype != _DTYPE_FLOAT32:
        raise VersionUnsupported(path, f"dtype code {dtype}", offset=24)
    if flags & ~_FLAG_LABELS:
        raise VersionUnsupported(path, f"flag bits 0x{flags:02x}", offset=25)

    has_labels = bool(flags & _FLAG_LABELS)
    need = n * d * 4 + (n * 4 if has_labels else 0)
    total = _HEADER.size + need
    if len(body) != need:
        raise TruncatedPayload(path, total, _HEADER.size + len(body),
                               offset=min(_HEADER.size + len(body), total))

    data = np.frombuffer(body, dtype="<f4", count=n * d).reshape(n, d)
    bad = ~np.isfinite(data)
    if bad.any():
        first = int(np.flatnonzero(bad.ravel())[0])
        raise NonFiniteValue(path, offset=_HEADER.size + 4 * first)
    labels = None
    if has_labels:
        labels = np.frombuffer(body, dtype="<i4", offset=n * d * 4, count=n)

    encoder_id, source_id = _read_sidecar(path)
    try:
        return EmbeddingSet(data=data.copy(), labels=None if labels is None else labels.copy(),
                            encoder_id=encoder_id, source_id=source_id)
    except ValueError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def read_header(path) -> dict:
    """Parse and validate a .dgme header without loading the payload."""
    path = os.fspath(path)
    try:
        size = os.path.getsize(path)
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    if len(head) >= 4 and head[:4] != MAGIC:
        raise BadMagic(path, offset=0)
    if len(head) < _HEADER.size:
        raise TruncatedPayload(path, _HEADER.size, len(head), offset=len(head))
    magic, version, n, d, dtype, flags, _ = _HEADER.unpack(head)
    if version != VERSION:
        raise VersionUnsupported(path, f"format version {version}", offset=4)
    if dtype != _DTYPE_FLOAT32:
        raise VersionUnsupported(path, f"dtype code {dtype}", offset=24)
    if flags & ~_FLAG_LABELS:
        raise VersionUnsupported(path, f"flag bits 0x{flags:02x}", offset=25)
    has_labels = bool(flags & _FLAG_LABELS)
    expected = _HEADER.size + n * d * 4 + (n * 4 if has_labels else 0)
    if size != expected:
        raise TruncatedPayload(path, expected, size, offset=min(size, expected))
    encoder_id, source_id = _read_sidecar(path)
    return {
        "path": path, "version": version, "n": n, "d": d,
        "dtype": "float32", "labels": "yes" if has_labels else "no",
        "encoder_id": encoder_id, "source_id": source_id,
    }


def write_embeddings(es: EmbeddingSet, path) -> None:
    """Write `es` as .dgme; the read-back is bit-identical to (data, labels)."""
    path = os.fspath(path)
    data = es.data
    if data.dtype != np.float32:
        raise ValueError(
            "on-disk format is float32; cast data explicitly before writing"
        )
    bad = ~np.isfinite(data)
    if bad.any():  # defensive: arrays are immutable but views may have been forced
        first = int(np.flatnonzero(bad.ravel())[0])
        raise NonFiniteValue(path, offset=_HEADER.size + 4 * first)

    flags = _FLAG_LABELS if es.labels is not None else 0
    head = _HEADER.pack(MAGIC, VERSION, es.n, es.d, _DTYPE_FLOAT32, flags, b"\0" * 6)
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(head)
            fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
            if es.labels is not None:
                fh.write(np.ascontiguousarray(es.labels, dtype="<i4").tobytes())
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoFailure(f"{path}: {exc}") from exc

    if es.encoder_id or es.source_id:
        try:
            with open(path + ".json", "w", encoding="utf-8") as fh:
                json.dump({"encoder_id": es.encoder_id, "source_id": es.source_id},
                          fh, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise IoFailure(f"{path}.json: {exc}") from exc


def subsample(es: EmbeddingSet, count: int, seed: int,
              stratified: bool = False) -> EmbeddingSet:
    """Draw `count` rows without replacement, deterministically for `seed`."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if count > es.n:
        raise CountExceedsN(f"count {count} exceeds n {es.n}")
    rng = _rng.substream(seed, "subsample")
    if not stratified:
        sel = rng.permutation(es.n)[:count]
    else:
        if es.labels is None:
            raise StratifiedWithoutLabels("stratified subsampling requires labels")
        classes = np.unique(es.labels)
        if count % len(classes):
            raise NonDivisibleCount(
                f"count {count} not divisible by class count {len(classes)}"
            )
        per = count // len(classes)
        parts = []
        for cls in classes:
            rows = np.flatnonzero(es.labels == cls)
            if per > rows.size:
                raise CountExceedsN(
                    f"class {cls} has {rows.size} rows, need {per}"
                )
            parts.append(rng.permutation(rows)[:per])
        sel = np.concatenate(parts)
    return EmbeddingSet(
        data=es.data[sel],
        labels=None if es.labels is None else es.labels[sel],
        encoder_id=es.encoder_id,
        source_id=es.source_id,
    )


def split_by_label(es: EmbeddingSet) -> list[tuple[int, EmbeddingSet]]:
    """Partition rows by class id, ascending; row order inside groups kept."""
    if es.labels is None:
        raise MissingLabels("split_by_label requires labels")
    out = []
    for cls in np.unique(es.labels):  # unique() is ascending
        rows = np.flatnonzero(es.labels == cls)
        out.append((int(cls), EmbeddingSet(
            data=es.data[rows],
            labels=es.labels[rows],
            encoder_id=es.encoder_id,
            source_id=es.source_id,
        )))
    return out


# ---------------------------------------------------------------------------


def _read_sidecar(path):
    side = path + ".json"
    if not os.path.exists(side):
        return "", ""
    try:
        with open(side, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"{side}: {exc}") from exc
    return str(meta.get("encoder_id", "")), str(meta.get("source_id", ""))


def _read_csv(path) -> EmbeddingSet:
    try:
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise IoFailure(f"{path}: empty CSV") from None
            rows = list(reader)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc

    header = [h.strip() for h in header]
    has_labels = bool(header) and header[-1] == "label"
    feat = header[:-1] if has_labels else header
    expected = [f"f{i}" for i in range(len(feat))]
    if not feat or feat != expected:
        raise IoFailure(
            f"{path}: CSV header must be f0,...,f{{d-1}}[,label], got {header!r}"
        )
    if len(rows) > CSV_ROW_CAP:
        raise IoFailure(
            f"{path}: CSV input capped at {CSV_ROW_CAP} rows, got {len(rows)}"
        )

    width = len(header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise IoFailure(f"{path}: row {i + 1} has {len(row)} fields, expected {width}")
    try:
        table = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise IoFailure(f"{path}: {exc}") from exc

    data = table[:, : len(feat)]
    bad = ~np.isfinite(data)
    if bad.any():
        first = int(np.flatnonzero(bad.ravel())[0])
        raise NonFiniteValue(path, offset=first)
    labels = None
    if has_labels:
        raw = table[:, -1]
        if not np.array_equal(raw, np.round(raw)):
            raise IoFailure(f"{path}: label column must hold integers")
        labels = raw.astype(np.int32)
    try:
        return EmbeddingSet(data=data.astype(np.float32), labels=labels)
    except ValueError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
