"""Binary persistence and validation for matrices, labels and concept lists.

All pipeline stages exchange data through three little-endian file formats
sharing a 12-byte header (4-byte ASCII magic, u32 row count, u32 column
count):

* ``EMB1`` -- embedding matrices, IEEE-754 binary32 payload, row-major.
* ``PRB1`` -- per-input class probabilities, same layout; every row must sum
  to one within ``PROB_ROW_SUM_TOL`` and every entry must lie in [0, 1].
* ``LBL1`` -- class labels, u32 payload; the header's second count is the
  number of classes and every label must be smaller than it.

Concept names travel as plain UTF-8 text, one concept per line, LF-separated.

Values are stored at 32-bit precision; in-memory computation may use higher
precision, but the persisted 32-bit values are the contract. Loading never
repairs data: every invariant violation is a reported error.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AlignmentError, FormatError, InvariantError, PersistenceError

MAGIC_EMBEDDING = "EMB1"
MAGIC_PROBABILITY = "PRB1"
MAGIC_LABELS = "LBL1"

#: Softmax rows serialized at 32-bit drift by ~1e-7 per class; 1e-5
#: accommodates up to ~1000 classes.
PROB_ROW_SUM_TOL = 1e-5

_HEADER = struct.Struct("<4sII")
_PAYLOAD_OFFSET = _HEADER.size


@dataclass(frozen=True)
class LabelVector:
    """Per-input class identifiers plus the total number of classes."""

    values: np.ndarray
    num_classes: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise InvariantError(f"labels must be one-dimensional, got shape {values.shape}")
        if self.num_classes < 1:
            raise InvariantError("a label vector needs at least one class")
        if values.size and (values.min() < 0 or values.max() >= self.num_classes):
            raise InvariantError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got range [{values.min()}, {values.max()}]"
            )

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class ConceptSpace:
    """An ordered list of concept names paired with their embedding rows."""

    names: tuple[str, ...]
    embeddings: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        emb = validate_embedding_matrix(self.embeddings, what="concept embeddings")
        object.__setattr__(self, "embeddings", emb)
        if len(self.names) != emb.shape[0]:
            raise AlignmentError(
                f"{len(self.names)} concept names but {emb.shape[0]} embedding rows"
            )

    def __len__(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])


def validate_embedding_matrix(matrix, what: str = "matrix") -> np.ndarray:
    """Return ``matrix`` as a contiguous float32 array, checking invariants.

    Requires a 2-d array with at least one column and only finite values.
    """
    arr = np.ascontiguousarray(matrix, dtype=np.float32)
    if arr.ndim != 2:
        raise InvariantError(f"{what} must be two-dimensional, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise InvariantError(f"{what} must have at least one column")
    if arr.size and not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr).ravel())[0])
        raise InvariantError(
            f"{what} contains a non-finite value at flat index {bad} "
            f"(row {bad // arr.shape[1]}, col {bad % arr.shape[1]})"
        )
    return arr


def validate_probability_matrix(matrix, what: str = "probability matrix") -> np.ndarray:
    """Validate a row-stochastic float32 matrix (entries in [0,1], rows sum to 1)."""
    arr = validate_embedding_matrix(matrix, what=what)
    if arr.size:
        if arr.min() < 0.0 or arr.max() > 1.0:
            bad = int(np.flatnonzero(((arr < 0.0) | (arr > 1.0)).ravel())[0])
            raise InvariantError(
                f"{what} entry outside [0, 1] at flat index {bad}"
            )
        sums = arr.sum(axis=1, dtype=np.float64)
        off = np.abs(sums - 1.0) > PROB_ROW_SUM_TOL
        if off.any():
            row = int(np.flatnonzero(off)[0])
            raise InvariantError(
                f"{what} row {row} sums to {sums[row]:.7f}, "
                f"expected 1 within {PROB_ROW_SUM_TOL}"
            )
    return arr


def save_matrix(matrix, path, kind: str = MAGIC_EMBEDDING) -> None:
    """Write a matrix in EBIN layout. ``kind`` selects the EMB1/PRB1 magic.

    The matrix is validated against its invariants before anything is
    written, so a failed save never leaves a truncated file behind.
    """
    if kind == MAGIC_EMBEDDING:
        arr = validate_embedding_matrix(matrix)
    elif kind == MAGIC_PROBABILITY:
        arr = validate_probability_matrix(matrix)
    else:
        raise InvariantError(f"unknown matrix kind {kind!r}")
    n, d = arr.shape
    payload = arr.astype("<f4", copy=False).tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(kind.encode("ascii"), n, d))
            fh.write(payload)
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc


def load_matrix(path, expected_kind: str = MAGIC_EMBEDDING) -> np.ndarray:
    """Load and validate an EMB1/PRB1 file, returning a float32 array."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise PersistenceError(f"cannot read {path}: {exc}") from exc

    if len(blob) < _PAYLOAD_OFFSET:
        raise FormatError(
            f"{path}: file is {len(blob)} bytes, shorter than the "
            f"{_PAYLOAD_OFFSET}-byte header"
        )
    magic, n, d = _HEADER.unpack_from(blob, 0)
    magic = magic.decode("ascii", errors="replace")
    if magic != expected_kind:
        raise FormatError(
            f"{path}: magic {magic!r} at byte offset 0, expected {expected_kind!r}"
        )
    if d < 1:
        raise FormatError(f"{path}: column count 0 at byte offset 8 is invalid")
    expected = n * d * 4
    got = len(blob) - _PAYLOAD_OFFSET
    if got != expected:
        raise FormatError(
            f"{path}: expected {expected} payload bytes at byte offset "
            f"{_PAYLOAD_OFFSET}, found {got}"
        )
    arr = np.frombuffer(blob, dtype="<f4", offset=_PAYLOAD_OFFSET).reshape(n, d)
    arr = np.ascontiguousarray(arr, dtype=np.float32)

    if arr.size and not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr).ravel())[0])
        raise FormatError(
            f"{path}: non-finite value at byte offset {_PAYLOAD_OFFSET + 4 * bad}"
        )
    if expected_kind == MAGIC_PROBABILITY:
        try:
            validate_probability_matrix(arr, what=str(path))
        except InvariantError as exc:
            raise FormatError(str(exc)) from exc
    return arr


def save_labels(labels: LabelVector, path) -> None:
    """Write a LabelVector in LBL1 layout (u32 count, u32 classes, u32 labels)."""
    payload = labels.values.astype("<u4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC_LABELS.encode("ascii"), len(labels), labels.num_classes))
            fh.write(payload)
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc


def load_labels(path) -> LabelVector:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise PersistenceError(f"cannot read {path}: {exc}") from exc

    if len(blob) < _PAYLOAD_OFFSET:
        raise FormatError(
            f"{path}: file is {len(blob)} bytes, shorter than the "
            f"{_PAYLOAD_OFFSET}-byte header"
        )
    magic, n, num_classes = _HEADER.unpack_from(blob, 0)
    magic = magic.decode("ascii", errors="replace")
    if magic != MAGIC_LABELS:
        raise FormatError(
            f"{path}: magic {magic!r} at byte offset 0, expected {MAGIC_LABELS!r}"
        )
    expected = n * 4
    got = len(blob) - _PAYLOAD_OFFSET
    if got != expected:
        raise FormatError(
            f"{path}: expected {expected} payload bytes at byte offset "
            f"{_PAYLOAD_OFFSET}, found {got}"
        )
    values = np.frombuffer(blob, dtype="<u4", offset=_PAYLOAD_OFFSET).astype(np.int64)
    try:
        return LabelVector(values=values, num_classes=int(num_classes))
    except InvariantError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_concept_names(names, path) -> None:
    """Write concept names as UTF-8 text, one per line."""
    text = "\n".join(names)
    if names:
        text += "\n"
    try:
        Path(path).write_bytes(text.encode("utf-8"))
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc


def load_concept_names(path) -> tuple[str, ...]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise PersistenceError(f"cannot read {path}: {exc}") from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not valid UTF-8 ({exc})") from exc
    if text.endswith("\n"):
        text = text[:-1]
    if text == "":
        return ()
    return tuple(text.split("\n"))


def load_concepts(names_path, emb_path) -> ConceptSpace:
    """Load a concept list and its embedding matrix as one ConceptSpace.

    Line ``i`` of the names file corresponds to embedding row ``i``. The two
    files must agree on the count; duplicates are accepted here (dedup is a
    vocabulary-construction concern, not a loading concern).
    """
    names = load_concept_names(names_path)
    embeddings = load_matrix(emb_path, MAGIC_EMBEDDING)
    if len(names) != embeddings.shape[0]:
        raise AlignmentError(
            f"{names_path} has {len(names)} concepts but {emb_path} has "
            f"{embeddings.shape[0]} embedding rows"
        )
    return ConceptSpace(names=names, embeddings=embeddings)
