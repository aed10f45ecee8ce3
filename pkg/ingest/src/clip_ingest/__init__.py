"""Offline ingestion utility for the concept-diversity selection pipeline.

Turns image directories, concept lists and classifier checkpoints into the
binary EMB1/PRB1/LBL1 files and concept-name text files the selection
pipeline consumes.
"""

from .encoders import ClipEncoder, HashProjEncoder, get_encoder
from .pipeline import (
    DEFAULT_TEMPLATES,
    PromptTemplateSet,
    embed_concepts,
    embed_images,
    extract_dnn,
    list_images,
    load_templates,
)

__version__ = "0.1.0"
