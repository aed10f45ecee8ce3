"""Writers for the binary formats the selection pipeline consumes.

The contract between this utility and the downstream pipeline is the byte
format, nothing else, so the writers are self-contained: a 12-byte header
(4-byte ASCII magic, u32 row count, u32 column count, little-endian)
followed by the payload. ``EMB1``/``PRB1`` carry binary32 row-major values;
``LBL1`` carries u32 labels with the class count in the header.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sII")


def write_embeddings(matrix: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(matrix, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ValueError(f"embeddings must be (n, d>=1), got shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise ValueError("embeddings contain non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(b"EMB1", arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f4", copy=False).tobytes())


def write_probabilities(matrix: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(matrix, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ValueError(f"probabilities must be (n, C>=1), got shape {arr.shape}")
    if arr.size:
        if not np.isfinite(arr).all() or arr.min() < 0.0:
            raise ValueError("probabilities must be finite and non-negative")
        # float32 softmax rows can be a hair off; renormalize in float32 so
        # the on-disk rows satisfy the downstream row-sum check exactly
        arr = arr / arr.sum(axis=1, keepdims=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(b"PRB1", arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f4", copy=False).tobytes())


def write_labels(values: np.ndarray, num_classes: int, path) -> None:
    vals = np.asarray(values, dtype=np.int64).ravel()
    if vals.size and (vals.min() < 0 or vals.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(b"LBL1", vals.size, num_classes))
        fh.write(vals.astype("<u4").tobytes())


def write_names(names, path) -> None:
    text = "\n".join(names)
    if names:
        text += "\n"
    Path(path).write_bytes(text.encode("utf-8"))


def read_names(path) -> list[str]:
    text = Path(path).read_bytes().decode("utf-8")
    if text.endswith("\n"):
        text = text[:-1]
    return text.split("\n") if text else []
