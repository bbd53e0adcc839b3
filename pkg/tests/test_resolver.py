from __future__ import annotations

import random

import numpy as np
import pytest

from refground.expression import Predicate, SemanticTree
from refground.geometry import Box, RelationType, relation_prob
from refground.resolver import (
    InsideSuperlativeError,
    node_update,
    normalize_distribution,
    resolve,
    select_index,
    superlative_update,
)

from .conftest import random_box

# --- Naive reference: explicit double loops, no numpy matrix algebra. ---
# Written before the optimized path; the tests below hold the two equal.


def naive_node_update(parent, child, rel, boxes):
    n = len(boxes)
    unnorm = []
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j != i:
                acc += relation_prob(rel, boxes[i], boxes[j]) * child[j]
        unnorm.append(parent[i] * acc)
    total = sum(unnorm)
    if total <= 0:
        return list(parent)
    return [v / total for v in unnorm]


def naive_resolve(tree, predicate_dists, boxes, full_dist):
    def visit(node):
        dist = list(predicate_dists[node])
        for parent, child, rel in tree.edges:
            if parent == node:
                dist = naive_node_update(dist, visit(child), rel, boxes)
        for nd, rel in tree.superlatives:
            if nd == node:
                dist = naive_node_update(dist, dist, rel, boxes)
        return dist

    root = visit(tree.root)
    combined = [r * f for r, f in zip(root, full_dist)]
    total = sum(combined)
    if total <= 0:
        return root
    return [v / total for v in combined]


def uniform(n):
    return np.full(n, 1.0 / n)


def random_distribution(rng, n):
    raw = [rng.uniform(0.01, 1.0) for _ in range(n)]
    total = sum(raw)
    return np.array([v / total for v in raw])


def random_tree(rng, n_nodes):
    nodes = [Predicate(f"node {i}", (i, i + 1)) for i in range(n_nodes)]
    edges = []
    for child in range(1, n_nodes):
        parent = rng.randrange(child)
        rel = rng.choice(list(RelationType))
        edges.append((parent, child, rel))
    superlatives = []
    for node in range(n_nodes):
        if rng.random() < 0.3:
            rel = rng.choice([r for r in RelationType if r is not RelationType.INSIDE])
            superlatives.append((node, rel))
    return SemanticTree(nodes=nodes, edges=edges, superlatives=superlatives, root=0)


class TestNodeUpdate:
    def test_constant_relation_keeps_parent(self):
        # Three boxes in a horizontal row: every pair is BIGGER-comparable?
        # Use INSIDE with full mutual containment instead: identical boxes give
        # relation 1 for all i != j, so the update multiplies by a constant.
        boxes = [Box(0, 0, 10, 10)] * 3
        parent = np.array([0.5, 0.3, 0.2])
        out = node_update(parent, uniform(3), RelationType.INSIDE, boxes)
        assert np.allclose(out, parent, atol=1e-12)

    def test_two_boxes_left(self):
        boxes = [Box(0, 0, 10, 10), Box(20, 0, 30, 10)]
        out = node_update(uniform(2), uniform(2), RelationType.LEFT, boxes)
        assert np.allclose(out, [1.0, 0.0])

    def test_matches_naive_reference(self):
        rng = random.Random(42)
        for _ in range(50):
            n = rng.randint(2, 6)
            boxes = [random_box(rng) for _ in range(n)]
            parent = random_distribution(rng, n)
            child = random_distribution(rng, n)
            rel = rng.choice(list(RelationType))
            got = node_update(parent, child, rel, boxes)
            want = naive_node_update(list(parent), list(child), rel, boxes)
            assert np.max(np.abs(got - np.array(want))) < 1e-9

    def test_all_zero_returns_parent(self):
        # Both boxes share a center: LEFT never fires.
        boxes = [Box(0, 0, 10, 10), Box(2, 2, 8, 8)]
        parent = np.array([0.7, 0.3])
        out = node_update(parent, uniform(2), RelationType.LEFT, boxes)
        assert np.array_equal(out, parent)

    def test_scaling_child_invariant(self):
        rng = random.Random(7)
        boxes = [random_box(rng) for _ in range(4)]
        parent = random_distribution(rng, 4)
        child = random_distribution(rng, 4)
        a = node_update(parent, child, RelationType.LEFT, boxes)
        b = node_update(parent, child * 3.7, RelationType.LEFT, boxes)
        assert np.max(np.abs(a - b)) < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            node_update(uniform(2), uniform(3), RelationType.LEFT,
                        [Box(0, 0, 1, 1)] * 2)


class TestSuperlativeUpdate:
    def test_leftmost_of_three(self):
        boxes = [Box(0, 0, 10, 10), Box(20, 0, 30, 10), Box(40, 0, 50, 10)]
        out = superlative_update(uniform(3), RelationType.LEFT, boxes)
        assert select_index(out) == 0
        assert out[0] > out[1] > out[2]

    def test_single_proposal_unchanged(self):
        out = superlative_update(np.array([1.0]), RelationType.LEFT, [Box(0, 0, 5, 5)])
        assert np.array_equal(out, [1.0])

    def test_tied_centers_unchanged(self):
        boxes = [Box(0, 0, 10, 10), Box(0, 20, 10, 30)]  # same center x
        node = np.array([0.5, 0.5])
        out = superlative_update(node, RelationType.LEFT, boxes)
        assert np.array_equal(out, node)

    def test_inside_rejected(self):
        with pytest.raises(InsideSuperlativeError):
            superlative_update(uniform(2), RelationType.INSIDE,
                               [Box(0, 0, 1, 1)] * 2)


class TestResolve:
    def test_no_edges_is_elementwise_product(self):
        tree = SemanticTree(nodes=[Predicate("a", (0, 1))], root=0)
        pred = np.array([0.2, 0.8])
        full = np.array([0.5, 0.5])
        out = resolve(tree, [pred], [Box(0, 0, 1, 1), Box(2, 0, 3, 1)], full)
        want = pred * full / (pred * full).sum()
        assert np.allclose(out, want)

    def test_matches_naive_on_random_trees(self):
        rng = random.Random(1234)
        for _ in range(200):
            n_nodes = rng.randint(1, 4)
            n_boxes = rng.randint(2, 6)
            boxes = [random_box(rng) for _ in range(n_boxes)]
            tree = random_tree(rng, n_nodes)
            dists = [random_distribution(rng, n_boxes) for _ in range(n_nodes)]
            full = random_distribution(rng, n_boxes)
            got = resolve(tree, dists, boxes, full)
            want = np.array(naive_resolve(tree, dists, boxes, full))
            assert np.max(np.abs(got - want)) < 1e-9
            assert abs(got.sum() - 1.0) < 1e-9
            assert np.all(got >= 0)

    def test_chain_of_three(self):
        # "A left of B above C": boxes laid out so exactly one assignment fits.
        boxes = [
            Box(0, 0, 10, 10),    # leftmost, top
            Box(20, 0, 30, 10),   # middle, top
            Box(20, 20, 30, 30),  # middle, lower
        ]
        tree = SemanticTree(
            nodes=[Predicate("a", (0, 1)), Predicate("b", (1, 2)), Predicate("c", (2, 3))],
            edges=[(0, 1, RelationType.LEFT), (1, 2, RelationType.ABOVE)],
            root=0,
        )
        dists = [uniform(3)] * 3
        out = resolve(tree, dists, boxes, uniform(3))
        want = np.array(naive_resolve(tree, dists, boxes, uniform(3)))
        assert np.max(np.abs(out - want)) < 1e-9
        assert select_index(out) == 0

    def test_node_count_mismatch(self):
        tree = SemanticTree(nodes=[Predicate("a", (0, 1))], root=0)
        with pytest.raises(ValueError):
            resolve(tree, [], [Box(0, 0, 1, 1)], np.array([1.0]))


class TestSelectIndex:
    def test_lowest_index_tie_break(self):
        assert select_index(np.array([0.4, 0.4, 0.2])) == 0

    def test_plain_argmax(self):
        assert select_index(np.array([0.1, 0.7, 0.2])) == 1


class TestNormalizeDistribution:
    def test_normalizes(self):
        out = normalize_distribution(np.array([1.0, 3.0]))
        assert np.allclose(out, [0.25, 0.75])

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            normalize_distribution(np.zeros(3))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            normalize_distribution(np.array([0.5, -0.1]))
