"""End-to-end grounding: parse the expression, score proposals, resolve, select."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging, resolver, scoring
from .expression import (
    ExternalParse,
    NoNounChunksError,
    SemanticTree,
    extract_tree,
    extract_tree_heuristic,
    has_relation_keywords,
)
from .geometry import Box
from .imaging import BlurConfig
from .scoring import PromptConfig, ScorerBackend

log = logging.getLogger(__name__)


class GroundingMethod(enum.Enum):
    """Method selection: tree-resolved IPS, plain IPS, or red-shade scoring."""

    RELATIONAL = "relational"
    IPS = "ips"
    CPT = "cpt"


@dataclass
class GroundingInstance:
    """One grounding problem: an image, an expression, and candidate boxes."""

    image: str  # file path (or opaque id when pixels are supplied directly)
    expression: str
    proposals: list[Box]
    ground_truth: Box | None = None
    external_parse: ExternalParse | None = None
    id: str = ""
    pixels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not self.proposals:
            raise ValueError("instance needs at least one proposal")
        if not self.expression.strip():
            raise ValueError("instance expression must be non-empty")

    def load_pixels(self) -> np.ndarray:
        if self.pixels is None:
            self.pixels = imaging.load_image(Path(self.image))
        return self.pixels


@dataclass
class GroundingResult:
    """Chosen proposal plus the evidence behind it."""

    chosen_index: int
    distribution: np.ndarray
    method: str
    timings_ms: dict[str, float] = field(default_factory=dict)
    tree: SemanticTree | None = None
    node_distributions: list[np.ndarray] | None = None


@dataclass(frozen=True)
class GroundingConfig:
    """Hyperparameters shared by every instance of a run."""

    prompts: PromptConfig = PromptConfig()
    blur: BlurConfig = BlurConfig()
    ips_mode: str = "crop+blur"
    size_prior_threshold: float | None = None  # None disables proposal filtering


def ground(
    instance: GroundingInstance,
    method: GroundingMethod,
    backend: ScorerBackend,
    config: GroundingConfig = GroundingConfig(),
) -> GroundingResult:
    """Ground one instance and return the chosen proposal index.

    The relational method parses the expression into a semantic tree, scores
    each node's chunk text with isolated proposal scoring, and resolves the
    tree; expressions without relation keywords (or without noun chunks)
    revert to plain IPS on the full text. The chosen index always refers to
    the original proposal list, also when the size prior filters proposals.
    """
    t_start = time.perf_counter()
    pixels = instance.load_pixels()
    height, width = pixels.shape[:2]
    n = len(instance.proposals)

    if config.size_prior_threshold is not None:
        keep = scoring.filter_size_prior(
            instance.proposals, width, height, config.size_prior_threshold
        )
    else:
        keep = list(range(n))
    boxes = [instance.proposals[i] for i in keep]
    region_ids = [str(i) for i in keep]
    trace_extra = {"instance": instance.id} if instance.id else None

    timings: dict[str, float] = {}
    tree: SemanticTree | None = None
    node_dists: list[np.ndarray] | None = None

    def _ips_distribution(text: str, isolations) -> np.ndarray:
        logits = scoring.ips_scores(
            pixels, boxes, text, backend, config.prompts, config.blur,
            mode=config.ips_mode, region_ids=region_ids,
            trace_extra=trace_extra, isolations=isolations,
        )
        return scoring.ensemble_softmax(logits)

    t0 = time.perf_counter()
    if method is GroundingMethod.CPT:
        logits = scoring.cpt_scores(
            pixels, boxes, instance.expression, backend, config.prompts,
            region_ids=region_ids, trace_extra=trace_extra,
        )
        dist = scoring.ensemble_softmax(logits)
        timings["score_ms"] = (time.perf_counter() - t0) * 1000
    else:
        use_tree = False
        if method is GroundingMethod.RELATIONAL and has_relation_keywords(instance.expression):
            try:
                tree = (
                    extract_tree(instance.external_parse)
                    if instance.external_parse is not None
                    else extract_tree_heuristic(instance.expression)
                )
                use_tree = True
            except NoNounChunksError:
                log.warning(
                    "instance %s: no noun chunks; reverting to plain scoring",
                    instance.id or instance.image,
                )
        timings["parse_ms"] = (time.perf_counter() - t0) * 1000

        t0 = time.perf_counter()
        need_crop = config.ips_mode != "blur"
        need_blur = config.ips_mode != "crop"
        isolations = scoring.build_isolations(
            pixels, boxes, config.blur, need_crop=need_crop, need_blur=need_blur
        )
        full_dist = _ips_distribution(instance.expression, isolations)
        if use_tree and tree is not None:
            node_dists = [_ips_distribution(p.text, isolations) for p in tree.nodes]
        timings["score_ms"] = (time.perf_counter() - t0) * 1000

        t0 = time.perf_counter()
        if use_tree and tree is not None and node_dists is not None:
            dist = resolver.resolve(tree, node_dists, boxes, full_dist)
        else:
            dist = full_dist
        timings["resolve_ms"] = (time.perf_counter() - t0) * 1000

    full = np.zeros(n, dtype=np.float64)
    full[keep] = dist
    timings["total_ms"] = (time.perf_counter() - t_start) * 1000
    return GroundingResult(
        chosen_index=resolver.select_index(full),
        distribution=full,
        method=method.value,
        timings_ms=timings,
        tree=tree,
        node_distributions=node_dists,
    )
