"""Concept-entropy diversity scoring and hybrid input selection.

Selects small, diverse, informative subsets from large unlabeled pools by
ranking candidates with a model-uncertainty score and gating acceptance on
a concept-entropy diversity score computed over vision-language concept
assignments. Includes a geometric log-det diversity baseline and a
desk-scale evaluation harness.
"""

from .aligner import (
    AlignerModel,
    fit_aligner,
    load_aligner,
    map_embeddings,
    r_squared_of,
    save_aligner,
    training_mse,
)
from .concept_space import (
    ConceptAssignment,
    Rcs,
    assign_concepts,
    build_rcs,
    cosine_similarity_matrix,
    cosine_similarity_row,
    load_rcs,
    save_rcs,
    top_m,
)
from .diversity_metrics import (
    ConceptHistogram,
    cbd_score,
    gd_score,
    histogram_add,
    histogram_remove,
)
from .embstore import (
    ConceptSpace,
    LabelVector,
    load_concepts,
    load_labels,
    load_matrix,
    save_labels,
    save_matrix,
)
from .errors import CbdselError
from .eval_harness import (
    ControlledSubsetPlan,
    CorrelationReport,
    build_controlled_subsets,
    improvement_pct,
    run_rq1,
    spearman_rho,
    time_diversity,
    time_selection,
)
from .selector import (
    SelectionResult,
    SelectionStep,
    select_cbd,
    select_random,
    select_top_uncertainty,
)
from .uncertainty_metrics import (
    DatisConfig,
    UncertaintyVector,
    datis_support,
    datis_uncertainty,
    margin_uncertainty,
)

__version__ = "0.1.0"
