"""File formats: feature/embedding binaries, label CSVs, split manifests.

Feature container (magic ``HCB1``): 4 ASCII magic bytes, u32 LE row count
N, u32 LE column count d, then N*d float32 LE values row-major.

Checkpoint container (magic ``HCM1``): 4 ASCII magic bytes, u32 LE tensor
count, then per tensor u32 LE rows, u32 LE cols, rows*cols float64 LE
values, in declaration order.

All writes are atomic (temp file in the target directory + rename).
"""

import csv
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, StructuralError
from .hierarchy import LabelPath

FEATURE_MAGIC = b"HCB1"
CHECKPOINT_MAGIC = b"HCM1"


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_features(path: str | Path, features: np.ndarray) -> None:
    features = np.asarray(features)
    if features.ndim != 2:
        raise StructuralError("feature matrix must be 2-D")
    n, d = features.shape
    payload = (
        FEATURE_MAGIC
        + struct.pack("<II", n, d)
        + np.ascontiguousarray(features, dtype="<f4").tobytes()
    )
    atomic_write_bytes(path, payload)


def read_features(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:4] != FEATURE_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {FEATURE_MAGIC!r}", 0)
    if len(blob) < 12:
        raise FormatError("truncated header", len(blob))
    n, d = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * n * d
    if len(blob) != expected:
        raise FormatError(
            f"payload size mismatch: expected {expected} bytes, got {len(blob)}",
            min(len(blob), expected),
        )
    data = np.frombuffer(blob, dtype="<f4", offset=12)
    return data.reshape(n, d).astype(np.float64)


def write_checkpoint_tensors(path: str | Path, tensors: Sequence[np.ndarray]) -> None:
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(tensors))]
    for t in tensors:
        t = np.atleast_2d(np.asarray(t, dtype=np.float64))
        parts.append(struct.pack("<II", t.shape[0], t.shape[1]))
        parts.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def read_checkpoint_tensors(path: str | Path) -> list[np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(
            f"bad magic {blob[:4]!r}, expected {CHECKPOINT_MAGIC!r}", 0
        )
    if len(blob) < 8:
        raise FormatError("truncated header", len(blob))
    (count,) = struct.unpack("<I", blob[4:8])
    offset = 8
    tensors = []
    for _ in range(count):
        if len(blob) < offset + 8:
            raise FormatError("truncated tensor header", offset)
        rows, cols = struct.unpack("<II", blob[offset : offset + 8])
        offset += 8
        nbytes = 8 * rows * cols
        if len(blob) < offset + nbytes:
            raise FormatError("truncated tensor payload", offset)
        tensors.append(
            np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=offset)
            .reshape(rows, cols)
            .copy()
        )
        offset += nbytes
    if offset != len(blob):
        raise FormatError("trailing bytes after last tensor", offset)
    return tensors


def write_labels_csv(path: str | Path, paths: Sequence[LabelPath]) -> None:
    if not paths:
        raise StructuralError("cannot write an empty label table")
    depth = len(paths[0].labels)
    lines = ["id," + ",".join(f"level_{l}" for l in range(depth))]
    for p in paths:
        if len(p.labels) != depth:
            raise StructuralError("inconsistent path lengths")
        lines.append(",".join(str(v) for v in (p.sample_id, *p.labels)))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_labels_csv(path: str | Path) -> list[LabelPath]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty labels file", 0) from None
        depth = len(header) - 1
        if header[0] != "id" or depth < 1 or any(
            header[1 + l] != f"level_{l}" for l in range(depth)
        ):
            raise FormatError(f"unexpected labels header {header!r}", 0)
        out = []
        for row in reader:
            if not row:
                continue
            if len(row) != depth + 1:
                raise FormatError(f"row {reader.line_num}: wrong column count")
            try:
                values = [int(v) for v in row]
            except ValueError as exc:
                raise FormatError(f"row {reader.line_num}: {exc}") from None
            out.append(LabelPath(labels=tuple(values[1:]), sample_id=values[0]))
    return out


def write_split_manifest(path: str | Path, splits: dict[str, np.ndarray]) -> None:
    payload = {k: [int(i) for i in v] for k, v in splits.items()}
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_split_manifest(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return {k: np.asarray(v, dtype=np.int64) for k, v in payload.items()}
