"""Zero-shot referring-expression grounding over box proposals."""

__version__ = "0.1.0"

from .expression import (
    ExternalParse,
    Predicate,
    SemanticTree,
    extract_tree,
    extract_tree_heuristic,
    has_relation_keywords,
)
from .geometry import Box, RelationType, area_fraction, iou, relation_prob
from .pipeline import (
    GroundingConfig,
    GroundingInstance,
    GroundingMethod,
    GroundingResult,
    ground,
)
from .scoring import (
    MockBackend,
    PromptConfig,
    RandomLogitBackend,
    RemoteBackend,
    ScorerBackend,
    cpt_scores,
    ensemble_softmax,
    filter_size_prior,
    ips_scores,
)

__all__ = [
    "Box",
    "RelationType",
    "iou",
    "relation_prob",
    "area_fraction",
    "Predicate",
    "SemanticTree",
    "ExternalParse",
    "extract_tree",
    "extract_tree_heuristic",
    "has_relation_keywords",
    "ScorerBackend",
    "MockBackend",
    "RandomLogitBackend",
    "RemoteBackend",
    "PromptConfig",
    "ips_scores",
    "cpt_scores",
    "ensemble_softmax",
    "filter_size_prior",
    "GroundingInstance",
    "GroundingResult",
    "GroundingConfig",
    "GroundingMethod",
    "ground",
    "__version__",
]
