"""Batch jobs that turn images, concepts and checkpoints into pipeline files.

Row ordering is the load-bearing contract: every file emitted for the same
image directory lists rows in bytewise-sorted filename order, and the
manifest written alongside records that order plus the encoder provenance.
Given fixed weights and a fixed directory, reruns are byte-identical.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .formats import read_names, write_embeddings, write_labels, write_probabilities

#: Prompt templates applied to every concept unless overridden.
DEFAULT_TEMPLATES = ("A photo of a {}", "A drawing of a {}")

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}


@dataclass(frozen=True)
class PromptTemplateSet:
    """Templates with exactly one ``{}`` placeholder each."""

    templates: tuple[str, ...]

    def __post_init__(self):
        templates = tuple(self.templates)
        object.__setattr__(self, "templates", templates)
        if not templates:
            raise ValueError("at least one prompt template is required")
        for template in templates:
            if template.count("{}") != 1:
                raise ValueError(
                    f"template {template!r} must contain exactly one '{{}}' placeholder"
                )

    def instantiate(self, concept: str) -> list[str]:
        return [template.format(concept) for template in self.templates]


def load_templates(path) -> PromptTemplateSet:
    lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    return PromptTemplateSet(templates=tuple(lines))


def list_images(image_dir) -> list[Path]:
    """Image files under ``image_dir``, bytewise filename order."""
    root = Path(image_dir)
    if not root.is_dir():
        raise ValueError(f"{root} is not a directory")
    paths = [
        p for p in root.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    ]
    return sorted(paths, key=lambda p: p.name)


def _load_images(paths: list[Path], on_error: str):
    """Open images, either skipping unreadable files with a log or aborting."""
    images, kept, skipped = [], [], []
    for path in paths:
        try:
            with Image.open(path) as handle:
                images.append(handle.convert("RGB"))
            kept.append(path)
        except (OSError, UnidentifiedImageError) as exc:
            if on_error == "abort":
                raise ValueError(f"unreadable image {path}: {exc}") from exc
            print(f"skipping unreadable image {path}: {exc}", file=sys.stderr)
            skipped.append(path)
    return images, kept, skipped


def _write_manifest(out_dir: Path, payload: dict) -> None:
    (out_dir / "manifest.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def embed_images(image_dir, encoder, out_dir, batch: int = 16, on_error: str = "skip") -> Path:
    """Encode every image into one embedding row; writes images.ebin + manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = list_images(image_dir)
    if not paths:
        raise ValueError(f"no images found under {image_dir}")
    images, kept, skipped = _load_images(paths, on_error)
    if not images:
        raise ValueError(f"no readable images under {image_dir}")

    rows = []
    for start in range(0, len(images), batch):
        rows.append(encoder.encode_images(images[start : start + batch]))
    matrix = np.vstack(rows)

    write_embeddings(matrix, out / "images.ebin")
    _write_manifest(out, {
        "job": "embed-images",
        "encoder": encoder.name,
        "dim": int(matrix.shape[1]),
        "batch": batch,
        "files": [p.name for p in kept],
        "skipped": [p.name for p in skipped],
    })
    return out / "images.ebin"


def embed_concepts(concepts_path, encoder, out_dir, templates: PromptTemplateSet | None = None,
                   batch: int = 16) -> Path:
    """One averaged prompt embedding per concept line; row order = line order."""
    templates = templates or PromptTemplateSet(templates=DEFAULT_TEMPLATES)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    concepts = read_names(concepts_path)
    if not concepts:
        raise ValueError(f"no concepts found in {concepts_path}")

    prompts = []
    for concept in concepts:
        prompts.extend(templates.instantiate(concept))
    chunks = []
    for start in range(0, len(prompts), batch):
        chunks.append(encoder.encode_texts(prompts[start : start + batch]))
    per_prompt = np.vstack(chunks)
    n_templates = len(templates.templates)
    matrix = per_prompt.reshape(len(concepts), n_templates, -1).mean(axis=1)

    write_embeddings(matrix, out / "concepts.ebin")
    _write_manifest(out, {
        "job": "embed-concepts",
        "encoder": encoder.name,
        "dim": int(matrix.shape[1]),
        "templates": list(templates.templates),
        "concepts": len(concepts),
    })
    return out / "concepts.ebin"


def extract_dnn(image_dir, checkpoint, layer: str, out_dir, batch: int = 16,
                image_size: int = 32, on_error: str = "skip") -> dict:
    """Penultimate representations plus softmax outputs from a classifier.

    ``checkpoint`` is a pickled eager module (``torch.save(model, path)``,
    with the defining class importable); the representation is captured with
    a forward hook on the module named by ``layer`` and flattened to 2-d.
    TorchScript archives are rejected because loaded ScriptModules do not
    support hooks. Images are fed as float32 RGB in [0, 1], resized to
    ``image_size``; checkpoints should embed any normalization they need.
    Emits reps.ebin, probs.prb, predicted.lbl and the manifest, rows aligned
    with ``embed_images`` for the same directory.
    """
    try:
        import torch
    except ImportError as exc:  # pragma: no cover - environment-dependent
        raise RuntimeError("extract-dnn needs the 'torch' package") from exc

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = list_images(image_dir)
    if not paths:
        raise ValueError(f"no images found under {image_dir}")
    images, kept, skipped = _load_images(paths, on_error)
    if not images:
        raise ValueError(f"no readable images under {image_dir}")

    try:
        model = torch.load(str(checkpoint), map_location="cpu", weights_only=False)
    except Exception as exc:
        raise ValueError(f"cannot load checkpoint {checkpoint}: {exc}") from exc
    if not hasattr(model, "named_modules"):
        raise ValueError(f"checkpoint {checkpoint} did not unpickle to a module")
    model.eval()

    modules = dict(model.named_modules())
    if layer not in modules:
        known = ", ".join(sorted(name for name in modules if name)) or "<none>"
        raise ValueError(f"layer {layer!r} not found in checkpoint; available: {known}")

    captured: list = []
    try:
        handle = modules[layer].register_forward_hook(
            lambda module, inputs, output: captured.append(output.detach())
        )
    except RuntimeError as exc:
        raise ValueError(
            "this checkpoint does not support representation hooks; save the "
            "eager module with torch.save(model, path)"
        ) from exc
    reps_chunks, prob_chunks = [], []
    try:
        with torch.no_grad():
            for start in range(0, len(images), batch):
                chunk = images[start : start + batch]
                pixels = np.stack([
                    np.asarray(
                        im.resize((image_size, image_size), Image.BILINEAR),
                        dtype=np.float32,
                    ) / 255.0
                    for im in chunk
                ])
                tensor = torch.from_numpy(pixels).permute(0, 3, 1, 2).contiguous()
                captured.clear()
                logits = model(tensor)
                if not captured:
                    raise ValueError(f"layer {layer!r} produced no output during forward")
                reps_chunks.append(captured[-1].reshape(len(chunk), -1).cpu().numpy())
                prob_chunks.append(torch.softmax(logits, dim=1).cpu().numpy())
    finally:
        handle.remove()

    reps = np.vstack(reps_chunks)
    probs = np.vstack(prob_chunks)
    predicted = probs.argmax(axis=1)

    write_embeddings(reps, out / "reps.ebin")
    write_probabilities(probs, out / "probs.prb")
    write_labels(predicted, probs.shape[1], out / "predicted.lbl")
    _write_manifest(out, {
        "job": "extract-dnn",
        "checkpoint": Path(str(checkpoint)).name,
        "layer": layer,
        "image_size": image_size,
        "batch": batch,
        "classes": int(probs.shape[1]),
        "rep_dim": int(reps.shape[1]),
        "files": [p.name for p in kept],
        "skipped": [p.name for p in skipped],
    })
    return {
        "reps": out / "reps.ebin",
        "probs": out / "probs.prb",
        "predicted": out / "predicted.lbl",
    }
