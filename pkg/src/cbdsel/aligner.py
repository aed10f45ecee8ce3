"""Affine maps between representation spaces, fit by closed-form ridge regression.

A classifier's penultimate-layer representation can be mapped into a shared
vision-language embedding space surprisingly well with a single affine layer.
This module fits that map by minimizing

    (1/n) * sum_i ||W^T x_i + b - y_i||^2  +  ridge * ||W||_F^2

via centered normal equations solved with a Cholesky factorization. The bias
is recovered from the column means, so the ridge penalty applies to ``W``
only. Models are immutable and safe to apply concurrently.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    ConfigurationError,
    DegenerateTargetError,
    FormatError,
    PersistenceError,
    RankDeficiencyError,
    ShapeError,
)

MAGIC_ALIGNER = "ALN1"

#: Keeps the normal equations well-posed when n < d_s without materially
#: biasing well-conditioned fits.
DEFAULT_RIDGE = 1e-6

_ALN_HEADER = struct.Struct("<4sIIdd")


@dataclass(frozen=True)
class AlignerModel:
    """Affine map ``x -> x @ weights + bias`` with fit diagnostics.

    ``weights`` has shape (d_source, d_target); ``bias`` has shape
    (d_target,). ``r_squared`` is the pooled coefficient of determination on
    the training data, in (-inf, 1].
    """

    weights: np.ndarray
    bias: np.ndarray
    ridge: float
    r_squared: float

    @property
    def d_source(self) -> int:
        return int(self.weights.shape[0])

    @property
    def d_target(self) -> int:
        return int(self.weights.shape[1])


def _as_2d_float64(matrix, what: str) -> np.ndarray:
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{what} must be two-dimensional, got shape {arr.shape}")
    return arr


def fit_aligner(source, target, ridge: float = DEFAULT_RIDGE) -> AlignerModel:
    """Fit the affine map from ``source`` rows to ``target`` rows.

    Returns the closed-form ridge least-squares solution. Raises
    ShapeError on row-count mismatch and RankDeficiencyError when the
    normal matrix is singular at ridge = 0 (the message suggests a
    positive ridge). Deterministic: identical inputs produce bit-identical
    models.
    """
    X = _as_2d_float64(source, "source")
    Y = _as_2d_float64(target, "target")
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(
            f"source has {X.shape[0]} rows but target has {Y.shape[0]}"
        )
    if ridge < 0:
        raise ConfigurationError(f"ridge coefficient must be >= 0, got {ridge}")
    n, d_s = X.shape
    if n == 0:
        raise ShapeError("cannot fit an aligner on zero rows")
    if n < d_s + 1:
        warnings.warn(
            f"fitting a {d_s}-dimensional aligner on only {n} rows; the "
            "solution relies on the ridge term",
            stacklevel=2,
        )

    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xc = X - x_mean
    Yc = Y - y_mean

    gram = Xc.T @ Xc
    if ridge > 0:
        gram = gram + (n * ridge) * np.eye(d_s)
    rhs = Xc.T @ Yc
    try:
        chol = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
        W = scipy.linalg.cho_solve(chol, rhs, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise RankDeficiencyError(
            "normal matrix is singular; refit with a positive ridge "
            "coefficient (e.g. 1e-6)"
        ) from exc
    b = y_mean - x_mean @ W

    predictions = X @ W + b
    r2 = _r_squared_from_predictions(predictions, Y)
    return AlignerModel(weights=W, bias=b, ridge=float(ridge), r_squared=r2)


def map_embeddings(model: AlignerModel, source) -> np.ndarray:
    """Apply the affine map row-wise: output row i = source_i @ W + b."""
    X = _as_2d_float64(source, "source")
    if X.shape[1] != model.d_source:
        raise ShapeError(
            f"source has {X.shape[1]} columns but the aligner expects "
            f"{model.d_source}"
        )
    return X @ model.weights + model.bias


def _r_squared_from_predictions(predictions: np.ndarray, target: np.ndarray) -> float:
    ss_res = float(((predictions - target) ** 2).sum())
    if ss_res == 0.0:
        return 1.0
    ss_tot = float(((target - target.mean(axis=0)) ** 2).sum())
    if ss_tot == 0.0:
        raise DegenerateTargetError(
            "target rows are all identical but residuals are nonzero"
        )
    return 1.0 - ss_res / ss_tot


def r_squared_of(model: AlignerModel, source, target) -> float:
    """Pooled coefficient of determination of ``model`` on (source, target).

    1 - SS_res / SS_tot with both sums pooled over all coordinates. Returns
    exactly 1 when SS_res is zero; can be negative for models worse than the
    constant column-mean predictor.
    """
    Y = _as_2d_float64(target, "target")
    predictions = map_embeddings(model, source)
    if predictions.shape != Y.shape:
        raise ShapeError(
            f"mapped source has shape {predictions.shape} but target has {Y.shape}"
        )
    return _r_squared_from_predictions(predictions, Y)


def training_mse(model: AlignerModel, source, target) -> float:
    """Mean squared residual norm, (1/n) * sum_i ||map(x_i) - y_i||^2."""
    Y = _as_2d_float64(target, "target")
    predictions = map_embeddings(model, source)
    if predictions.shape != Y.shape:
        raise ShapeError(
            f"mapped source has shape {predictions.shape} but target has {Y.shape}"
        )
    return float(((predictions - Y) ** 2).sum() / Y.shape[0])


def save_aligner(model: AlignerModel, path) -> None:
    """Persist a model: ALN1 magic, u32 dims, f64 ridge/r2, f64 W and b."""
    try:
        with open(path, "wb") as fh:
            fh.write(
                _ALN_HEADER.pack(
                    MAGIC_ALIGNER.encode("ascii"),
                    model.d_source,
                    model.d_target,
                    model.ridge,
                    model.r_squared,
                )
            )
            fh.write(model.weights.astype("<f8", copy=False).tobytes())
            fh.write(model.bias.astype("<f8", copy=False).tobytes())
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc


def load_aligner(path) -> AlignerModel:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise PersistenceError(f"cannot read {path}: {exc}") from exc

    if len(blob) < _ALN_HEADER.size:
        raise FormatError(
            f"{path}: file is {len(blob)} bytes, shorter than the "
            f"{_ALN_HEADER.size}-byte header"
        )
    magic, d_s, d_t, ridge, r2 = _ALN_HEADER.unpack_from(blob, 0)
    magic = magic.decode("ascii", errors="replace")
    if magic != MAGIC_ALIGNER:
        raise FormatError(
            f"{path}: magic {magic!r} at byte offset 0, expected {MAGIC_ALIGNER!r}"
        )
    expected = (d_s * d_t + d_t) * 8
    got = len(blob) - _ALN_HEADER.size
    if got != expected:
        raise FormatError(
            f"{path}: expected {expected} payload bytes at byte offset "
            f"{_ALN_HEADER.size}, found {got}"
        )
    W = np.frombuffer(
        blob, dtype="<f8", count=d_s * d_t, offset=_ALN_HEADER.size
    ).reshape(d_s, d_t)
    b = np.frombuffer(blob, dtype="<f8", offset=_ALN_HEADER.size + d_s * d_t * 8)
    if not (np.isfinite(W).all() and np.isfinite(b).all()):
        raise FormatError(f"{path}: model contains non-finite values")
    return AlignerModel(
        weights=np.ascontiguousarray(W),
        bias=np.ascontiguousarray(b),
        ridge=float(ridge),
        r_squared=float(r2),
    )
