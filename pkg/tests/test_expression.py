from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from refground.expression import (
    ChunkSpan,
    ExternalParse,
    NoNounChunksError,
    ParseSchemaError,
    SemanticTree,
    extract_tree,
    extract_tree_heuristic,
    has_relation_keywords,
    keyword_tables,
    tokenize,
)
from refground.geometry import RelationType


def cat_left_of_dog_parse() -> ExternalParse:
    # "a cat to the left of a dog"
    return ExternalParse(
        tokens=["a", "cat", "to", "the", "left", "of", "a", "dog"],
        heads=[1, -1, 1, 4, 2, 4, 7, 5],
        noun_chunks=[ChunkSpan(0, 2, 1), ChunkSpan(6, 8, 7)],
    )


class TestKeywordTables:
    def test_matches_golden_dump(self, golden_dir):
        golden = json.loads((golden_dir / "keyword_tables.json").read_text())
        assert keyword_tables() == golden

    def test_superlatives_exclude_inside(self):
        assert "inside" not in keyword_tables()["superlatives"]


class TestHasRelationKeywords:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("man behind the fence", True),
            ("", False),
            ("the lefty pitcher", False),
            ("LEFTMOST dog", True),
            ("a red umbrella", False),
            ("cup underneath the table", True),
        ],
    )
    def test_cases(self, text, expected):
        assert has_relation_keywords(text) is expected


class TestExternalParseValidation:
    def test_round_trip(self):
        parse = cat_left_of_dog_parse()
        assert ExternalParse.from_json_dict(parse.to_json_dict()) == parse

    def test_rejects_two_roots(self):
        with pytest.raises(ParseSchemaError):
            ExternalParse(["a", "b"], [-1, -1], []).validate()

    def test_rejects_cycle(self):
        with pytest.raises(ParseSchemaError):
            ExternalParse(["a", "b", "c"], [1, 0, -1], []).validate()

    def test_rejects_overlapping_chunks(self):
        with pytest.raises(ParseSchemaError):
            ExternalParse(
                ["a", "b", "c"], [1, -1, 1],
                [ChunkSpan(0, 2, 1), ChunkSpan(1, 3, 2)],
            ).validate()

    def test_rejects_head_outside_span(self):
        with pytest.raises(ParseSchemaError):
            ExternalParse(["a", "b"], [1, -1], [ChunkSpan(0, 1, 1)]).validate()

    def test_rejects_missing_field(self):
        with pytest.raises(ParseSchemaError):
            ExternalParse.from_json_dict({"tokens": ["a"], "heads": [-1]})


class TestExtractTree:
    def test_cat_left_of_dog(self):
        tree = extract_tree(cat_left_of_dog_parse())
        assert [n.text for n in tree.nodes] == ["a cat", "a dog"]
        assert tree.root == 0
        assert tree.edges == [(0, 1, RelationType.LEFT)]
        assert tree.superlatives == []

    def test_single_chunk(self):
        parse = ExternalParse(
            tokens=["the", "red", "umbrella"],
            heads=[2, 2, -1],
            noun_chunks=[ChunkSpan(0, 3, 2)],
        )
        tree = extract_tree(parse)
        assert [n.text for n in tree.nodes] == ["the red umbrella"]
        assert tree.edges == []
        assert tree.superlatives == []

    def test_relation_plus_superlative(self):
        # "the largest cat to the left of a dog": "largest" hangs off the root
        # chunk head, "left" sits on the inter-chunk path.
        parse = ExternalParse(
            tokens=["the", "largest", "cat", "to", "the", "left", "of", "a", "dog"],
            heads=[2, 2, -1, 2, 5, 3, 5, 8, 6],
            noun_chunks=[ChunkSpan(0, 3, 2), ChunkSpan(7, 9, 8)],
        )
        tree = extract_tree(parse)
        assert tree.edges == [(0, 1, RelationType.LEFT)]
        assert tree.superlatives == [(0, RelationType.BIGGER)]
        assert tree.nodes[0].text == "the largest cat"

    def test_no_chunks_raises(self):
        parse = ExternalParse(tokens=["dog"], heads=[-1], noun_chunks=[])
        with pytest.raises(NoNounChunksError):
            extract_tree(parse)

    def test_keyword_nearest_parent_head_wins(self):
        # Two keywords on one path: "right" (nearer the parent head) beats "left".
        parse = ExternalParse(
            tokens=["cat", "right", "left", "dog"],
            heads=[-1, 0, 1, 2],
            noun_chunks=[ChunkSpan(0, 1, 0), ChunkSpan(3, 4, 3)],
        )
        tree = extract_tree(parse)
        assert tree.edges == [(0, 1, RelationType.RIGHT)]

    def test_unrelated_chunk_is_pruned(self):
        # "a man with a hat left of a dog"-style parse where the hat chunk has
        # no keyword on its path: it cannot influence the root.
        parse = ExternalParse(
            tokens=["man", "with", "hat", "left", "of", "dog"],
            heads=[-1, 0, 1, 0, 3, 4],
            noun_chunks=[ChunkSpan(0, 1, 0), ChunkSpan(2, 3, 2), ChunkSpan(5, 6, 5)],
        )
        tree = extract_tree(parse)
        assert [n.text for n in tree.nodes] == ["man", "dog"]
        assert tree.edges == [(0, 1, RelationType.LEFT)]

    def test_path_tokens_not_counted_as_superlatives(self):
        tree = extract_tree(cat_left_of_dog_parse())
        assert tree.superlatives == []


def random_parse(seed: int) -> ExternalParse:
    """A random single-rooted parse with disjoint chunks over real-ish tokens."""
    rng = random.Random(seed)
    vocab = ["cat", "dog", "left", "right", "big", "the", "of", "to", "under",
             "top", "largest", "red", "box", "on"]
    n = rng.randint(1, 12)
    tokens = [rng.choice(vocab) for _ in range(n)]
    heads = [-1] * n
    order = list(range(n))
    rng.shuffle(order)
    for rank, tok in enumerate(order[1:], start=1):
        heads[tok] = rng.choice(order[:rank])  # parent appears earlier: acyclic
    chunks = []
    pos = 0
    while pos < n:
        if rng.random() < 0.4:
            end = min(n, pos + rng.randint(1, 3))
            chunks.append(ChunkSpan(pos, end, rng.randrange(pos, end)))
            pos = end
        else:
            pos += 1
    return ExternalParse(tokens=tokens, heads=heads, noun_chunks=chunks)


class TestExtractTreeProperties:
    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10**9))
    def test_output_satisfies_tree_invariants(self, seed):
        parse = random_parse(seed)
        parse.validate()
        if not parse.noun_chunks:
            with pytest.raises(NoNounChunksError):
                extract_tree(parse)
            return
        tree = extract_tree(parse)
        tree.validate()
        assert len(tree.nodes) >= 1
        for _node, rel in tree.superlatives:
            assert rel is not RelationType.INSIDE


class TestExtractTreeHeuristic:
    def test_cat_left_of_dog(self):
        tree = extract_tree_heuristic("a cat to the left of a dog")
        assert [n.text for n in tree.nodes] == ["a cat", "a dog"]
        assert tree.edges == [(0, 1, RelationType.LEFT)]

    def test_single_word(self):
        tree = extract_tree_heuristic("dog")
        assert [n.text for n in tree.nodes] == ["dog"]
        assert tree.edges == []
        assert tree.superlatives == []

    def test_leftmost_dog(self):
        tree = extract_tree_heuristic("leftmost dog")
        assert [n.text for n in tree.nodes] == ["dog"]
        assert tree.superlatives == [(0, RelationType.LEFT)]

    def test_article_before_superlative(self):
        tree = extract_tree_heuristic("the largest cat")
        assert [n.text for n in tree.nodes] == ["the cat"]
        assert tree.superlatives == [(0, RelationType.BIGGER)]

    def test_chain_of_three(self):
        tree = extract_tree_heuristic("the cup above the plate inside the cupboard")
        assert [n.text for n in tree.nodes] == ["the cup", "the plate", "the cupboard"]
        assert tree.edges == [
            (0, 1, RelationType.ABOVE),
            (1, 2, RelationType.INSIDE),
        ]

    def test_trailing_relation_word_becomes_superlative(self):
        tree = extract_tree_heuristic("the cat on the left")
        assert [n.text for n in tree.nodes] == ["the cat"]
        assert tree.superlatives == [(0, RelationType.LEFT)]

    def test_front_maps_to_below(self):
        tree = extract_tree_heuristic("the man in front of the car")
        assert tree.edges == [(0, 1, RelationType.BELOW)]

    def test_behind_maps_to_above(self):
        tree = extract_tree_heuristic("man behind the fence")
        assert tree.edges == [(0, 1, RelationType.ABOVE)]

    def test_empty_expression_raises(self):
        with pytest.raises(NoNounChunksError):
            extract_tree_heuristic("   ")

    def test_pure_superlative_word_stays_as_text(self):
        tree = extract_tree_heuristic("leftmost")
        assert [n.text for n in tree.nodes] == ["leftmost"]
        assert tree.superlatives == []

    def test_deterministic(self):
        a = extract_tree_heuristic("a cat to the left of a dog")
        b = extract_tree_heuristic("a cat to the left of a dog")
        assert a.to_json_dict() == b.to_json_dict()

    @settings(max_examples=150, deadline=None)
    @given(st.text(alphabet="abcdefg left right under top of the ", min_size=1, max_size=60))
    def test_invariants_on_arbitrary_text(self, text):
        if not tokenize(text):
            with pytest.raises(NoNounChunksError):
                extract_tree_heuristic(text)
            return
        tree = extract_tree_heuristic(text)
        tree.validate()


class TestTokenize:
    def test_splits_punctuation(self):
        assert tokenize("a cat, to the left-of a dog.") == [
            "a", "cat", "to", "the", "left", "of", "a", "dog",
        ]

    def test_empty(self):
        assert tokenize("  ,.! ") == []


class TestSemanticTreeValidate:
    def test_rejects_multiple_parents(self):
        from refground.expression import Predicate

        tree = SemanticTree(
            nodes=[Predicate("a", (0, 1)), Predicate("b", (1, 2)), Predicate("c", (2, 3))],
            edges=[(0, 2, RelationType.LEFT), (1, 2, RelationType.LEFT)],
            root=0,
        )
        with pytest.raises(ValueError):
            tree.validate()

    def test_rejects_inside_superlative(self):
        from refground.expression import Predicate

        tree = SemanticTree(
            nodes=[Predicate("a", (0, 1))],
            superlatives=[(0, RelationType.INSIDE)],
            root=0,
        )
        with pytest.raises(ValueError):
            tree.validate()
