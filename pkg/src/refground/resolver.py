"""Propagate proposal distributions over a semantic tree with spatial heuristics.

Distributions are plain numpy arrays over the proposal set, normalized to sum
to 1. Each tree node starts from the distribution its predicate text earned
from the scorer and is refined by its children through the relation update,
then by its own superlatives.
"""

from __future__ import annotations

import numpy as np

from .expression import SemanticTree
from .geometry import Box, RelationType, relation_prob


class InsideSuperlativeError(ValueError):
    """INSIDE is not a valid superlative relation."""


def normalize_distribution(values: np.ndarray) -> np.ndarray:
    """Normalize a non-negative vector to sum 1; raise on a zero or invalid vector."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("distribution must be one-dimensional")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("distribution entries must be finite and non-negative")
    total = arr.sum()
    if total <= 0:
        raise ValueError("cannot normalize an all-zero vector")
    return arr / total


def relation_matrix(r: RelationType, boxes: list[Box]) -> np.ndarray:
    """Pairwise relation probabilities with a zeroed diagonal (self-relations excluded)."""
    n = len(boxes)
    mat = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            if i != j:
                mat[i, j] = relation_prob(r, boxes[i], boxes[j])
    return mat


def node_update(
    parent: np.ndarray,
    child: np.ndarray,
    r: RelationType,
    boxes: list[Box],
) -> np.ndarray:
    """Refine ``parent`` by how well each proposal relates to the child's proposals.

    new_i is proportional to parent_i * sum over j != i of
    relation_prob(r, boxes[i], boxes[j]) * child_j, renormalized. If every
    unnormalized entry is zero (no proposal satisfies the relation at all),
    the parent distribution is returned unchanged.
    """
    parent = np.asarray(parent, dtype=np.float64)
    child = np.asarray(child, dtype=np.float64)
    if parent.shape != child.shape or parent.shape != (len(boxes),):
        raise ValueError(
            f"distribution/box length mismatch: {parent.shape}, {child.shape}, {len(boxes)}"
        )
    weights = relation_matrix(r, boxes) @ child
    unnorm = parent * weights
    total = unnorm.sum()
    if total <= 0:
        return parent.copy()
    return unnorm / total


def superlative_update(
    node: np.ndarray, r: RelationType, boxes: list[Box]
) -> np.ndarray:
    """Apply a superlative: the node's own distribution fills both argument slots."""
    if r is RelationType.INSIDE:
        raise InsideSuperlativeError("INSIDE has no superlative form")
    return node_update(node, node, r, boxes)


def resolve(
    tree: SemanticTree,
    predicate_dists: list[np.ndarray],
    boxes: list[Box],
    full_expression_dist: np.ndarray,
) -> np.ndarray:
    """Compute the final proposal distribution for a parsed expression.

    Depth-first over the tree: every node's distribution starts at its
    predicate distribution, is updated once per child edge (in expression
    order), then once per recorded superlative. The root's distribution is
    finally multiplied elementwise with the full-expression distribution and
    renormalized. The grounded proposal is the argmax (lowest index on ties).
    """
    if len(predicate_dists) != len(tree.nodes):
        raise ValueError(
            f"{len(predicate_dists)} distributions for {len(tree.nodes)} nodes"
        )
    n = len(boxes)
    full = np.asarray(full_expression_dist, dtype=np.float64)
    if full.shape != (n,):
        raise ValueError("full-expression distribution length mismatch")

    def visit(node: int) -> np.ndarray:
        dist = np.asarray(predicate_dists[node], dtype=np.float64)
        if dist.shape != (n,):
            raise ValueError(f"distribution for node {node} has wrong length")
        for child, rel in tree.children(node):
            dist = node_update(dist, visit(child), rel, boxes)
        for rel in tree.node_superlatives(node):
            dist = superlative_update(dist, rel, boxes)
        return dist

    root_dist = visit(tree.root)
    combined = root_dist * full
    total = combined.sum()
    if total <= 0:
        return root_dist
    return combined / total


def select_index(dist: np.ndarray) -> int:
    """Argmax with deterministic lowest-index tie-breaking."""
    return int(np.argmax(np.asarray(dist)))
