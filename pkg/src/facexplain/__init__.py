"""Semantic occlusion explanations for face verification embeddings.

The pipeline: define face regions over landmark polygons, rank their global
importance with occlusion-based attribution (rank-displacement, LIME,
KernelSHAP) merged by Borda count, explain individual verification pairs
with weighted single-removal contributions rendered as similarity maps and
tables, evaluate faithfulness against random-order baselines, and optionally
transcribe the table into text through an LLM endpoint.
"""

__version__ = "0.1.0"

from .aggregation import GlobalConceptRanking, borda_aggregate, two_level_borda, weights_from_ranking
from .builtin_sets import canonical_face_template, canonical_landmarks
from .concepts import (
    Attribution,
    ConceptGroups,
    OutputSpaceDistances,
    RankQuery,
    eaoc_attribution,
    eaoc_score,
    mage_concept_groups,
    order_sequence,
    output_space,
    rank_by_scores,
    rank_displacement,
)
from .embedder import CachingEmbedder, Embedder, Embedding, OnnxEmbedder, cosine_similarity
from .errors import (
    ActivationsUnsupportedError,
    ConfigValidationError,
    DimensionMismatchError,
    FacexplainError,
    SingularSurrogateError,
    ValidationError,
    ZeroNormError,
)
from .evaluation import (
    OcclusionCurve,
    RandomBaseline,
    dominance_report,
    random_baseline,
    representation_curve,
    similarity_curve,
)
from .explanation import (
    ContributionTable,
    SimilarityExplanation,
    contribution_table,
    render_map,
    single_removal_s0,
    top_k_select,
)
from .llm_report import (
    DEFAULT_TEMPLATE,
    EndpointConfig,
    ExplanationReport,
    FixtureStore,
    PromptTemplate,
    generate_text,
    lint_explanation,
    render_prompt,
)
from .semantics import (
    FillStrategy,
    LandmarkFile,
    RegionMaskStack,
    SemanticRegion,
    SemanticSet,
    build_masks,
    fill_polygon,
    landmark_schema,
    load_landmarks,
    load_semantic_set,
    occlude,
    write_landmarks,
)
from .surrogates import kernelshap_attribution, lime_attribution, shapley_exact_values
from .synthetic import NoisyEmbedder, SyntheticRegionEmbedder

__all__ = [name for name in dir() if not name.startswith("_")]
