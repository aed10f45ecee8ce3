"""Per-input uncertainty scores with a unified "higher = more uncertain" sign.

Two metrics are provided:

* margin -- one minus the gap between the two largest predicted class
  probabilities. A confident prediction has a large gap and thus a score
  near zero.
* neighbor-support ratio ("datis") -- compares how strongly an input's
  k nearest labeled training neighbors support the model's predicted class
  against the strongest competing class. Neighbor weights decay as
  exp(-squared_distance / temperature); the score is the support ratio of
  the best non-predicted class over the predicted class. The predicted
  class is an explicit input because it comes from the model, not from the
  neighbor support (the two need not agree).

Unifying the sign convention means a descending sort works for any metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embstore import LabelVector
from .errors import ConfigurationError, InsufficientClassesError, ShapeError

#: Score assigned when the predicted class has zero neighbor support;
#: large but finite so sorting stays total.
SUPPORT_SATURATION = 1e12

#: Processing inputs in blocks caps the intermediate (block, train, dim)
#: distance tensor at ~32 MB.
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class UncertaintyVector:
    """Per-input scores under the "higher = more uncertain" convention."""

    scores: np.ndarray
    metric: str

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        if scores.ndim != 1:
            raise ShapeError(f"scores must be a vector, got shape {scores.shape}")
        if scores.size and not np.isfinite(scores).all():
            raise ConfigurationError("uncertainty scores must be finite")

    def __len__(self) -> int:
        return int(self.scores.size)


@dataclass(frozen=True)
class DatisConfig:
    """Neighbor count and distance temperature for the support metric."""

    neighbors: int = 10
    temperature: float = 1.0

    def __post_init__(self):
        if self.neighbors < 1:
            raise ConfigurationError(f"neighbor count must be >= 1, got {self.neighbors}")
        if not self.temperature > 0:
            raise ConfigurationError(f"temperature must be > 0, got {self.temperature}")


def margin_uncertainty(probs) -> UncertaintyVector:
    """1 - (p_top1 - p_top2) per row; invariant to class-column permutation."""
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"probabilities must be a matrix, got shape {arr.shape}")
    if arr.shape[1] < 2:
        raise InsufficientClassesError(
            f"margin needs at least 2 classes, got {arr.shape[1]}"
        )
    top2 = np.partition(arr, arr.shape[1] - 2, axis=1)[:, -2:]
    scores = 1.0 - (top2[:, 1] - top2[:, 0])
    return UncertaintyVector(scores=scores, metric="margin")


def _support_rows(Z, train_z, train_labels: LabelVector, cfg: DatisConfig) -> np.ndarray:
    """Neighbor-weighted class support for each row of ``Z``; rows sum to 1."""
    Z = np.asarray(Z, dtype=np.float64)
    T = np.asarray(train_z, dtype=np.float64)
    if Z.ndim != 2 or T.ndim != 2:
        raise ShapeError("embeddings must be two-dimensional")
    if Z.shape[1] != T.shape[1]:
        raise ShapeError(
            f"inputs have dimension {Z.shape[1]} but training rows have {T.shape[1]}"
        )
    n_train = T.shape[0]
    if len(train_labels) != n_train:
        raise ShapeError(
            f"{n_train} training rows but {len(train_labels)} training labels"
        )
    if n_train < cfg.neighbors:
        raise ConfigurationError(
            f"need at least k={cfg.neighbors} training rows, got {n_train}"
        )
    num_classes = train_labels.num_classes
    labels = train_labels.values
    k = cfg.neighbors

    support = np.empty((Z.shape[0], num_classes), dtype=np.float64)
    chunk = max(1, _CHUNK_ELEMENTS // max(1, n_train * Z.shape[1]))
    for start in range(0, Z.shape[0], chunk):
        block = Z[start : start + chunk]
        # exact squared distances via direct differences (brute force)
        d2 = ((block[:, None, :] - T[None, :, :]) ** 2).sum(axis=2)
        # stable argsort breaks ties at the k-th distance by ascending index
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        rows = np.arange(block.shape[0])[:, None]
        nn_d2 = d2[rows, nn]
        # shifting by the row minimum rescales all weights by a common
        # factor, which normalization cancels; it only prevents underflow
        weights = np.exp(-(nn_d2 - nn_d2[:, :1]) / cfg.temperature)
        blk_support = np.zeros((block.shape[0], num_classes), dtype=np.float64)
        np.add.at(blk_support, (rows, labels[nn]), weights)
        support[start : start + chunk] = blk_support / weights.sum(axis=1)[:, None]
    return support


def datis_support(z, train_z, train_labels: LabelVector, cfg: DatisConfig) -> np.ndarray:
    """Class-support distribution for a single input vector."""
    vec = np.asarray(z, dtype=np.float64)
    if vec.ndim != 1:
        raise ShapeError(f"input must be a vector, got shape {vec.shape}")
    return _support_rows(vec[None, :], train_z, train_labels, cfg)[0]


def datis_uncertainty(
    z,
    predicted: LabelVector,
    train_z,
    train_labels: LabelVector,
    cfg: DatisConfig,
) -> UncertaintyVector:
    """Support ratio p*_best_other / p*_predicted per input.

    ``predicted`` carries the model's predicted class for each input row.
    When the predicted class has zero neighbor support the score saturates
    at SUPPORT_SATURATION instead of dividing by zero.
    """
    if train_labels.num_classes < 2:
        raise InsufficientClassesError(
            f"need at least 2 classes, got {train_labels.num_classes}"
        )
    Z = np.asarray(z, dtype=np.float64)
    if Z.ndim != 2:
        raise ShapeError(f"inputs must be a matrix, got shape {Z.shape}")
    if len(predicted) != Z.shape[0]:
        raise ShapeError(
            f"{Z.shape[0]} input rows but {len(predicted)} predicted labels"
        )
    if predicted.num_classes > train_labels.num_classes:
        raise ConfigurationError(
            "predicted labels reference more classes than the training labels"
        )
    support = _support_rows(Z, train_z, train_labels, cfg)
    rows = np.arange(Z.shape[0])
    pred = predicted.values
    p_pred = support[rows, pred]
    rival = support.copy()
    rival[rows, pred] = -np.inf
    p_rival = rival.max(axis=1)
    scores = np.full(Z.shape[0], SUPPORT_SATURATION, dtype=np.float64)
    supported = p_pred > 0.0
    scores[supported] = p_rival[supported] / p_pred[supported]
    return UncertaintyVector(scores=scores, metric="datis")
