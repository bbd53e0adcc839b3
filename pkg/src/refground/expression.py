"""Turn referring expressions into semantic trees of predicates and relations.

Two entry points produce the same tree structure: :func:`extract_tree` walks an
externally supplied dependency parse, and :func:`extract_tree_heuristic` is a
parser-free fallback that splits the raw text at relation keywords.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .geometry import RelationType

# Keyword tables mapping trigger words to relations. Matching is always
# case-insensitive on whole tokens.
RELATION_KEYWORDS: dict[RelationType, tuple[str, ...]] = {
    RelationType.LEFT: ("left", "west"),
    RelationType.RIGHT: ("right", "east"),
    RelationType.ABOVE: ("above", "north", "top", "back", "behind"),
    RelationType.BELOW: ("below", "south", "under", "front"),
    RelationType.BIGGER: ("bigger", "larger", "closer"),
    RelationType.SMALLER: ("smaller", "tinier", "further"),
    RelationType.INSIDE: ("inside", "within", "contained"),
}

# Superlative triggers ("leftmost dog"); INSIDE has no superlative form.
SUPERLATIVE_KEYWORDS: dict[RelationType, tuple[str, ...]] = {
    RelationType.LEFT: ("left", "west", "leftmost", "western"),
    RelationType.RIGHT: ("right", "rightmost", "east", "eastern"),
    RelationType.ABOVE: ("above", "north", "top"),
    RelationType.BELOW: ("below", "south", "underneath", "front"),
    RelationType.BIGGER: ("bigger", "biggest", "larger", "largest", "closer", "closest"),
    RelationType.SMALLER: ("smaller", "smallest", "tinier", "tiniest", "further", "furthest"),
}

_RELATION_LOOKUP: dict[str, RelationType] = {
    word: rel for rel, words in RELATION_KEYWORDS.items() for word in words
}
_SUPERLATIVE_LOOKUP: dict[str, RelationType] = {
    word: rel for rel, words in SUPERLATIVE_KEYWORDS.items() for word in words
}

_TOKEN_RE = re.compile(r"[A-Za-z0-9']+")

_ARTICLES = frozenset({"a", "an", "the"})
# Connective tokens stripped from a segment edge that touches a relation
# keyword. Leading articles are kept ("a dog"), trailing ones dropped.
_LEAD_GLUE = frozenset(
    {"to", "of", "that", "which", "is", "are", "was", "were", "in", "on", "at",
     "from", "side"}
)
_TRAIL_GLUE = _LEAD_GLUE | _ARTICLES


class NoNounChunksError(ValueError):
    """The expression or parse yields no predicate nodes."""


class ParseSchemaError(ValueError):
    """An external parse violates the interchange contract."""


def keyword_tables() -> dict[str, dict[str, list[str]]]:
    """Dump the keyword tables in a JSON-friendly form for golden-file checks."""
    return {
        "relations": {r.value: list(words) for r, words in RELATION_KEYWORDS.items()},
        "superlatives": {r.value: list(words) for r, words in SUPERLATIVE_KEYWORDS.items()},
    }


def tokenize(expression: str) -> list[str]:
    """Split on whitespace/punctuation, keeping alphanumeric runs."""
    return _TOKEN_RE.findall(expression)


def has_relation_keywords(expression: str) -> bool:
    """True iff any relation or superlative keyword appears as a whole token."""
    for tok in tokenize(expression):
        low = tok.lower()
        if low in _RELATION_LOOKUP or low in _SUPERLATIVE_LOOKUP:
            return True
    return False


@dataclass(frozen=True)
class Predicate:
    """A textual property the referent must satisfy (a noun chunk)."""

    text: str
    span: tuple[int, int]  # token index range in the original expression, end exclusive

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("predicate text must be non-empty")


@dataclass
class SemanticTree:
    """Predicate nodes joined by relation-labeled edges, plus per-node superlatives.

    ``edges`` holds (parent, child, relation) triples; ``superlatives`` holds
    (node, relation) pairs. Edges must form a tree rooted at ``root``.
    """

    nodes: list[Predicate]
    edges: list[tuple[int, int, RelationType]] = field(default_factory=list)
    superlatives: list[tuple[int, RelationType]] = field(default_factory=list)
    root: int = 0

    def validate(self) -> None:
        n = len(self.nodes)
        if n == 0:
            raise NoNounChunksError("tree has no nodes")
        if not 0 <= self.root < n:
            raise ValueError(f"root {self.root} out of range for {n} nodes")
        parents: dict[int, int] = {}
        for parent, child, _rel in self.edges:
            if not (0 <= parent < n and 0 <= child < n):
                raise ValueError(f"edge ({parent}, {child}) out of range")
            if child == self.root:
                raise ValueError("root node cannot have a parent")
            if child in parents:
                raise ValueError(f"node {child} has multiple parents")
            parents[child] = parent
        if len(parents) != n - 1:
            raise ValueError("edges do not connect every non-root node")
        for child in parents:
            seen = {child}
            cur = child
            while cur != self.root:
                cur = parents[cur]
                if cur in seen:
                    raise ValueError("edge cycle detected")
                seen.add(cur)
        for node, rel in self.superlatives:
            if not 0 <= node < n:
                raise ValueError(f"superlative node {node} out of range")
            if rel is RelationType.INSIDE:
                raise ValueError("INSIDE cannot be used as a superlative")

    def children(self, node: int) -> list[tuple[int, RelationType]]:
        """Child edges of ``node`` in list (expression) order."""
        return [(c, r) for p, c, r in self.edges if p == node]

    def node_superlatives(self, node: int) -> list[RelationType]:
        return [r for nd, r in self.superlatives if nd == node]

    def to_json_dict(self) -> dict:
        return {
            "nodes": [{"text": p.text, "span": list(p.span)} for p in self.nodes],
            "edges": [[p, c, r.value] for p, c, r in self.edges],
            "superlatives": [[nd, r.value] for nd, r in self.superlatives],
            "root": self.root,
        }


@dataclass(frozen=True)
class ChunkSpan:
    """A noun chunk: token range (end exclusive) plus its head-token index."""

    start: int
    end: int
    head: int


@dataclass
class ExternalParse:
    """Dependency-parse interchange format shared with external tools.

    ``heads`` gives each token's parent index, -1 for the single root.
    """

    tokens: list[str]
    heads: list[int]
    noun_chunks: list[ChunkSpan]

    @classmethod
    def from_json_dict(cls, data: dict) -> ExternalParse:
        try:
            tokens = list(data["tokens"])
            heads = list(data["heads"])
            chunks = [
                ChunkSpan(int(c["start"]), int(c["end"]), int(c["head"]))
                for c in data["noun_chunks"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseSchemaError(f"malformed external parse: {exc}") from exc
        parse = cls(tokens=tokens, heads=heads, noun_chunks=chunks)
        parse.validate()
        return parse

    def to_json_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "heads": list(self.heads),
            "noun_chunks": [
                {"start": c.start, "end": c.end, "head": c.head}
                for c in self.noun_chunks
            ],
        }

    def validate(self) -> None:
        n = len(self.tokens)
        if n == 0:
            raise ParseSchemaError("parse has no tokens")
        if len(self.heads) != n:
            raise ParseSchemaError("heads length does not match tokens")
        if any(not isinstance(t, str) or not t for t in self.tokens):
            raise ParseSchemaError("tokens must be non-empty strings")
        roots = [i for i, h in enumerate(self.heads) if h == -1]
        if len(roots) != 1:
            raise ParseSchemaError(f"parse must have exactly one root, got {len(roots)}")
        for i, h in enumerate(self.heads):
            if h != -1 and not 0 <= h < n:
                raise ParseSchemaError(f"head index {h} of token {i} out of range")
        # Cycle check: every token must reach the root within n steps.
        for i in range(n):
            cur, steps = i, 0
            while self.heads[cur] != -1:
                cur = self.heads[cur]
                steps += 1
                if steps > n:
                    raise ParseSchemaError("heads contain a cycle")
        spans = sorted((c.start, c.end) for c in self.noun_chunks)
        for (s1, e1), (s2, _e2) in zip(spans, spans[1:]):
            if s2 < e1:
                raise ParseSchemaError("noun chunk spans overlap")
        for c in self.noun_chunks:
            if not (0 <= c.start < c.end <= n):
                raise ParseSchemaError(f"chunk span ({c.start}, {c.end}) out of range")
            if not c.start <= c.head < c.end:
                raise ParseSchemaError(f"chunk head {c.head} outside span")

    def depth(self, token: int) -> int:
        d, cur = 0, token
        while self.heads[cur] != -1:
            cur = self.heads[cur]
            d += 1
        return d

    def ancestor_chain(self, token: int) -> list[int]:
        """Ancestors of ``token``, nearest first, root last."""
        chain = []
        cur = token
        while self.heads[cur] != -1:
            cur = self.heads[cur]
            chain.append(cur)
        return chain


def extract_tree(parse: ExternalParse) -> SemanticTree:
    """Build a semantic tree from a dependency parse.

    One node per noun chunk. For each chunk whose head is dominated by another
    chunk's head, the tokens on the dependency path between the two heads are
    scanned for relation keywords; a hit creates an edge (the keyword nearest
    the dominating head wins). Remaining tokens hanging off a chunk head are
    scanned for superlative keywords. Chunks that end up disconnected from the
    root chunk are pruned: they cannot influence the root's distribution.
    """
    parse.validate()
    if not parse.noun_chunks:
        raise NoNounChunksError("parse has no noun chunks")

    chunks = sorted(parse.noun_chunks, key=lambda c: c.start)
    heads = [c.head for c in chunks]
    head_set = set(heads)
    chains = {h: parse.ancestor_chain(h) for h in heads}

    # Parent chunk of each chunk = the chunk whose head is its nearest
    # dominating ancestor; the path between the two heads must not pass
    # through a third chunk head (guaranteed by nearest-ness).
    edges: list[tuple[int, int, RelationType]] = []
    path_tokens: set[int] = set()
    for ci, chunk in enumerate(chunks):
        between: list[int] = []
        parent_idx = None
        for anc in chains[chunk.head]:
            if anc in head_set:
                parent_idx = heads.index(anc)
                break
            between.append(anc)
        if parent_idx is None:
            continue
        path_tokens.update(between)
        # Scan from the parent head downward so the keyword nearest it wins.
        rel = None
        for tok in reversed(between):
            rel = _RELATION_LOOKUP.get(parse.tokens[tok].lower())
            if rel is not None:
                break
        if rel is not None:
            edges.append((parent_idx, ci, rel))

    # Assign every non-head token to the chunk whose head is its nearest
    # chunk-head ancestor (or itself, for in-span modifiers).
    owned: dict[int, list[int]] = {i: [] for i in range(len(chunks))}
    for tok in range(len(parse.tokens)):
        if tok in head_set or tok in path_tokens:
            continue
        for anc in [tok] + parse.ancestor_chain(tok):
            if anc in head_set:
                if anc != tok:
                    owned[heads.index(anc)].append(tok)
                break

    superlatives: list[tuple[int, RelationType]] = []
    for ci in range(len(chunks)):
        for tok in sorted(owned[ci]):
            rel = _SUPERLATIVE_LOOKUP.get(parse.tokens[tok].lower())
            if rel is not None:
                superlatives.append((ci, rel))

    # Root = chunk whose head sits shallowest in the parse (earliest chunk on ties).
    root = min(range(len(chunks)), key=lambda ci: (parse.depth(heads[ci]), ci))

    # Prune chunks unreachable from the root; they carry no information for it.
    reachable = {root}
    frontier = [root]
    child_map: dict[int, list[int]] = {}
    for p, c, _r in edges:
        child_map.setdefault(p, []).append(c)
    while frontier:
        cur = frontier.pop()
        for c in child_map.get(cur, []):
            if c not in reachable:
                reachable.add(c)
                frontier.append(c)
    keep = sorted(reachable)
    remap = {old: new for new, old in enumerate(keep)}

    nodes = [
        Predicate(text=" ".join(parse.tokens[chunks[i].start:chunks[i].end]),
                  span=(chunks[i].start, chunks[i].end))
        for i in keep
    ]
    tree = SemanticTree(
        nodes=nodes,
        edges=sorted(
            [(remap[p], remap[c], r) for p, c, r in edges if p in reachable and c in reachable],
            key=lambda e: nodes[e[1]].span[0],
        ),
        superlatives=[(remap[nd], r) for nd, r in superlatives if nd in reachable],
        root=remap[root],
    )
    tree.validate()
    return tree


def extract_tree_heuristic(expression: str) -> SemanticTree:
    """Parser-free tree extraction by scanning the raw text.

    The token stream is split at relation keywords; the text between keywords
    becomes predicate nodes chained root-first in order of appearance, and
    leading superlative keywords inside a segment (after any article) are
    recorded on that segment's node. Deterministic for fixed input.
    """
    tokens = tokenize(expression)
    if not tokens:
        raise NoNounChunksError("expression is empty after tokenization")

    # Split pass: a relation keyword only splits when the text accumulated so
    # far is non-empty once trailing glue is dropped; otherwise it stays in
    # the segment and may later be consumed as a leading superlative.
    segments: list[tuple[list[int], RelationType | None]] = []
    cur: list[int] = []
    pending: RelationType | None = None

    def _has_content(indices: list[int]) -> bool:
        trimmed = list(indices)
        while trimmed and tokens[trimmed[-1]].lower() in _TRAIL_GLUE:
            trimmed.pop()
        return bool(trimmed)

    for i, tok in enumerate(tokens):
        rel = _RELATION_LOOKUP.get(tok.lower())
        if rel is not None and _has_content(cur):
            segments.append((cur, pending))
            cur = []
            pending = rel
        else:
            cur.append(i)
    trailing_rel: RelationType | None = None
    if _has_content(cur):
        segments.append((cur, pending))
    elif pending is not None:
        # "the cat on the left": dangling relation word acts as a superlative.
        trailing_rel = pending
    if not segments:
        # Nothing but glue words: the whole expression is one predicate.
        segments = [(list(range(len(tokens))), None)]
        trailing_rel = None

    nodes: list[Predicate] = []
    edges: list[tuple[int, int, RelationType]] = []
    superlatives: list[tuple[int, RelationType]] = []
    for indices, rel in segments:
        trimmed = list(indices)
        if rel is not None:  # segment follows a keyword: drop leading glue
            while trimmed and tokens[trimmed[0]].lower() in _LEAD_GLUE:
                trimmed.pop(0)
        while trimmed and tokens[trimmed[-1]].lower() in _TRAIL_GLUE:
            trimmed.pop()
        if not trimmed:
            trimmed = list(indices)

        # Consume leading superlatives, skipping an article; never empty the node.
        node_sups: list[RelationType] = []
        pos = 1 if tokens[trimmed[0]].lower() in _ARTICLES and len(trimmed) > 1 else 0
        while len(trimmed) > pos + 1:
            sup = _SUPERLATIVE_LOOKUP.get(tokens[trimmed[pos]].lower())
            if sup is None:
                break
            node_sups.append(sup)
            trimmed.pop(pos)

        idx = len(nodes)
        nodes.append(
            Predicate(
                text=" ".join(tokens[i] for i in trimmed),
                span=(trimmed[0], trimmed[-1] + 1),
            )
        )
        if idx > 0 and rel is not None:
            edges.append((idx - 1, idx, rel))
        superlatives.extend((idx, s) for s in node_sups)

    if not nodes:
        raise NoNounChunksError(f"no predicate segments in {expression!r}")
    if trailing_rel is not None and trailing_rel in SUPERLATIVE_KEYWORDS:
        superlatives.append((len(nodes) - 1, trailing_rel))

    tree = SemanticTree(nodes=nodes, edges=edges, superlatives=superlatives, root=0)
    tree.validate()
    return tree
