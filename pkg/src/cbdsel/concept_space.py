"""Concept vocabulary construction and per-image concept assignment.

Images live in the same embedding space as a bank of natural-language
concepts; each image is described by its ``m`` most cosine-similar concepts.
Pooling the top-``m`` concepts of every training image and deduplicating
yields the working vocabulary (here called the representative concept set),
against which unseen inputs are scored later. Exact search only: at the
vocabulary sizes this package targets, exact cosine ranking is affordable
and keeps results reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embstore import (
    ConceptSpace,
    load_concepts,
    load_matrix,
    save_concept_names,
    save_matrix,
)
from .errors import (
    AlignmentError,
    ConfigurationError,
    DegenerateVectorError,
    FormatError,
    PersistenceError,
)

DEFAULT_TOP_M = 10

RCS_NAMES_FILE = "concepts.txt"
RCS_EMBEDDINGS_FILE = "embeddings.ebin"
RCS_META_FILE = "rcs.meta"


@dataclass(frozen=True)
class ConceptAssignment:
    """The top concepts describing one image.

    ``concepts`` holds concept indices ordered by descending similarity,
    ties broken by ascending index; ``scores`` are the matching cosine
    similarities in [-1, 1].
    """

    image_index: int
    concepts: np.ndarray
    scores: np.ndarray


@dataclass(frozen=True)
class Rcs:
    """A deduplicated concept vocabulary plus its construction provenance.

    ``knb_indices`` maps each kept concept back to its row in the original
    knowledge base (None for vocabularies loaded from disk, where the
    original positions are no longer known).
    """

    space: ConceptSpace
    top_m: int
    source_size: int
    knb_indices: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.space)


def _unit_rows(matrix: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    zero = norms == 0.0
    if zero.any():
        row = int(np.flatnonzero(zero)[0])
        raise DegenerateVectorError(f"{what} row {row} has zero norm")
    return matrix / norms[:, None]


def cosine_similarity_matrix(images, concepts) -> np.ndarray:
    """Cosine similarity of every image row against every concept row."""
    imgs = np.asarray(images, dtype=np.float64)
    cons = np.asarray(concepts, dtype=np.float64)
    if imgs.ndim != 2 or cons.ndim != 2:
        raise ConfigurationError("similarity inputs must be two-dimensional")
    if imgs.shape[1] != cons.shape[1]:
        raise ConfigurationError(
            f"images have dimension {imgs.shape[1]} but concepts have {cons.shape[1]}"
        )
    return _unit_rows(imgs, "image") @ _unit_rows(cons, "concept").T


def cosine_similarity_row(image, concepts) -> np.ndarray:
    """Cosine similarity of one image vector against every concept row."""
    vec = np.asarray(image, dtype=np.float64)
    if vec.ndim != 1:
        raise ConfigurationError(f"image must be a vector, got shape {vec.shape}")
    return cosine_similarity_matrix(vec[None, :], concepts)[0]


def top_m(image, concepts: ConceptSpace, m: int, image_index: int = 0) -> ConceptAssignment:
    """The ``min(m, k)`` most similar concepts for one image vector.

    Ties are broken by the lower concept index so results are deterministic
    across platforms.
    """
    if m < 1:
        raise ConfigurationError(f"m must be >= 1, got {m}")
    sims = cosine_similarity_row(image, concepts.embeddings)
    take = min(m, sims.size)
    order = np.argsort(-sims, kind="stable")[:take]
    return ConceptAssignment(
        image_index=image_index,
        concepts=order.astype(np.int64),
        scores=sims[order],
    )


def assign_concepts(images, concepts: ConceptSpace, m: int) -> list[ConceptAssignment]:
    """Top-``m`` concept assignment for every image row, in row order."""
    if m < 1:
        raise ConfigurationError(f"m must be >= 1, got {m}")
    sims = cosine_similarity_matrix(images, concepts.embeddings)
    take = min(m, sims.shape[1])
    order = np.argsort(-sims, axis=1, kind="stable")[:, :take]
    rows = np.arange(sims.shape[0])[:, None]
    scores = sims[rows, order]
    return [
        ConceptAssignment(
            image_index=i,
            concepts=order[i].astype(np.int64),
            scores=scores[i],
        )
        for i in range(sims.shape[0])
    ]


def build_rcs(train_shared, knb: ConceptSpace, m: int) -> Rcs:
    """Build the working vocabulary from training embeddings.

    Extracts each training row's top-``m`` concepts and keeps the union, in
    ascending original-index order with embeddings copied. Set-union
    semantics make the result invariant to training-row order, so parallel
    and serial construction agree exactly.
    """
    imgs = np.asarray(train_shared, dtype=np.float64)
    if imgs.ndim != 2 or imgs.shape[0] < 1:
        raise ConfigurationError("vocabulary construction needs at least one training row")
    if len(knb) == 0:
        raise ConfigurationError("the knowledge base is empty")
    assignments = assign_concepts(imgs, knb, m)
    pooled = np.concatenate([a.concepts for a in assignments])
    kept = np.unique(pooled)
    space = ConceptSpace(
        names=tuple(knb.names[i] for i in kept),
        embeddings=knb.embeddings[kept].copy(),
    )
    return Rcs(space=space, top_m=m, source_size=imgs.shape[0], knb_indices=kept)


def save_rcs(rcs: Rcs, out_dir) -> None:
    """Persist a vocabulary as names file + embeddings + key=value header."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PersistenceError(f"cannot create {out}: {exc}") from exc
    save_concept_names(rcs.space.names, out / RCS_NAMES_FILE)
    save_matrix(rcs.space.embeddings, out / RCS_EMBEDDINGS_FILE)
    meta = f"m={rcs.top_m}\nsource_size={rcs.source_size}\n"
    try:
        (out / RCS_META_FILE).write_text(meta, encoding="utf-8")
    except OSError as exc:
        raise PersistenceError(f"cannot write {out / RCS_META_FILE}: {exc}") from exc


def load_rcs(in_dir) -> Rcs:
    src = Path(in_dir)
    space = load_concepts(src / RCS_NAMES_FILE, src / RCS_EMBEDDINGS_FILE)
    meta_path = src / RCS_META_FILE
    try:
        meta_text = meta_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PersistenceError(f"cannot read {meta_path}: {exc}") from exc
    fields: dict[str, str] = {}
    for line in meta_text.splitlines():
        if not line.strip():
            continue
        if "=" not in line:
            raise FormatError(f"{meta_path}: malformed line {line!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    try:
        m = int(fields["m"])
        source_size = int(fields["source_size"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{meta_path}: missing or invalid m/source_size") from exc
    if len(set(space.names)) != len(space.names):
        raise AlignmentError(f"{src}: vocabulary names are not unique")
    return Rcs(space=space, top_m=m, source_size=source_size, knb_indices=None)
