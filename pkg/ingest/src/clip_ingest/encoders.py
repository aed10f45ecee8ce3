"""Image/text encoders behind a common two-method interface.

``clip`` wraps a pretrained vision-language checkpoint via ``transformers``
and is the intended production path. ``hashproj`` is a weight-free,
fully deterministic stand-in (fixed-seed random projections over raw pixels
and hashed text n-grams) so the pipeline can be exercised and tested on
machines without model weights. Both produce L2-normalized rows.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

# fixed seeds: the projections must be identical across runs and machines
_IMAGE_PROJECTION_SEED = 0x1A6E5
_TEXT_PROJECTION_SEED = 0x7E37
_TEXT_BUCKETS = 8192
_THUMB = 32  # hashproj images are reduced to 32x32 RGB before projection


class HashProjEncoder:
    """Deterministic featurizer: no weights, no network, stable everywhere."""

    name = "hashproj"

    def __init__(self, dim: int = 512):
        self.dim = dim
        rng = np.random.default_rng(_IMAGE_PROJECTION_SEED)
        self._image_proj = rng.normal(size=(_THUMB * _THUMB * 3, dim)) / np.sqrt(dim)
        rng = np.random.default_rng(_TEXT_PROJECTION_SEED)
        self._text_proj = rng.normal(size=(_TEXT_BUCKETS, dim)) / np.sqrt(dim)

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        rows = np.empty((len(images), _THUMB * _THUMB * 3), dtype=np.float64)
        for i, image in enumerate(images):
            small = image.convert("RGB").resize((_THUMB, _THUMB), Image.BILINEAR)
            rows[i] = np.asarray(small, dtype=np.float64).ravel() / 255.0
        return _unit_rows(rows @ self._image_proj)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        counts = np.zeros((len(texts), _TEXT_BUCKETS), dtype=np.float64)
        for i, text in enumerate(texts):
            for token in _text_tokens(text):
                counts[i, _bucket(token)] += 1.0
        return _unit_rows(counts @ self._text_proj)


def _text_tokens(text: str) -> list[str]:
    lowered = text.lower()
    words = lowered.split()
    trigrams = [lowered[i : i + 3] for i in range(max(0, len(lowered) - 2))]
    return words + trigrams


def _bucket(token: str) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % _TEXT_BUCKETS


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return matrix / norms


class ClipEncoder:
    """Pretrained vision-language encoder via transformers.

    ``checkpoint`` is a local directory or model identifier resolvable by
    ``transformers``; weights must already be available (this utility never
    downloads datasets or models by itself beyond what transformers resolves
    from its cache).
    """

    name = "clip"

    def __init__(self, checkpoint: str, batch: int = 16):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:  # pragma: no cover - environment-dependent
            raise RuntimeError(
                "the clip encoder needs the 'transformers' and 'torch' packages"
            ) from exc
        self._torch = torch
        self.checkpoint = checkpoint
        self.batch = batch
        self.model = CLIPModel.from_pretrained(checkpoint)
        self.model.eval()
        self.processor = CLIPProcessor.from_pretrained(checkpoint)

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        torch = self._torch
        chunks = []
        with torch.no_grad():
            for start in range(0, len(images), self.batch):
                inputs = self.processor(
                    images=[im.convert("RGB") for im in images[start : start + self.batch]],
                    return_tensors="pt",
                )
                feats = self.model.get_image_features(**inputs)
                chunks.append(feats.cpu().numpy().astype(np.float64))
        return _unit_rows(np.vstack(chunks))

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        torch = self._torch
        chunks = []
        with torch.no_grad():
            for start in range(0, len(texts), self.batch):
                inputs = self.processor(
                    text=texts[start : start + self.batch],
                    return_tensors="pt",
                    padding=True,
                )
                feats = self.model.get_text_features(**inputs)
                chunks.append(feats.cpu().numpy().astype(np.float64))
        return _unit_rows(np.vstack(chunks))


def get_encoder(name: str, checkpoint: str | None = None, dim: int = 512, batch: int = 16):
    if name == "hashproj":
        return HashProjEncoder(dim=dim)
    if name == "clip":
        if not checkpoint:
            raise ValueError("the clip encoder requires --checkpoint")
        return ClipEncoder(checkpoint, batch=batch)
    raise ValueError(f"unknown encoder {name!r}; expected 'hashproj' or 'clip'")
