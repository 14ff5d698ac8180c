"""Query graph data model.

A :class:`QueryGraphStructure` is the output of graph structure generation:
nodes with mention spans and tags, undirected unlabeled edges and a target
marker.  A :class:`QueryGraph` adds one directed predicate per edge.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional


class NodeTag(enum.Enum):
    VARIABLE = "variable"
    ENTITY = "entity"
    TYPE = "type"

    @property
    def order(self) -> int:
        return _TAG_ORDER[self]


_TAG_ORDER = {NodeTag.VARIABLE: 0, NodeTag.ENTITY: 1, NodeTag.TYPE: 2}


class QueryType(enum.Enum):
    SELECT = "SELECT"
    COUNT = "COUNT"
    JUDGE = "JUDGE"


class Direction(enum.Enum):
    FORWARD = "forward"  # n1 -> n2
    REVERSE = "reverse"  # n2 -> n1

    def flipped(self) -> "Direction":
        return Direction.REVERSE if self is Direction.FORWARD else Direction.FORWARD


@dataclass(frozen=True)
class DirectedPredicate:
    predicate: str
    direction: Direction

    def sort_key(self) -> tuple[str, str]:
        return (self.predicate, self.direction.value)

    def __lt__(self, other: "DirectedPredicate") -> bool:
        return self.sort_key() < other.sort_key()

    def __repr__(self):
        arrow = "->" if self.direction is Direction.FORWARD else "<-"
        return f"DirectedPredicate({arrow}{self.predicate})"


@dataclass(frozen=True)
class Node:
    id: int
    start: int
    end: int
    tag: NodeTag
    uri: Optional[str] = None
    mention: str = ""

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def is_variable(self) -> bool:
        return self.tag is NodeTag.VARIABLE

    def with_uri(self, uri: Optional[str]) -> "Node":
        return Node(self.id, self.start, self.end, self.tag, uri, self.mention)


Edge = tuple[int, int]


def make_edge(a: int, b: int) -> Edge:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class QueryGraphStructure:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    target: Optional[int]
    query_type: QueryType

    @classmethod
    def build(cls, nodes: Iterable[Node], edges: Iterable[tuple[int, int]],
              target: Optional[int], query_type: QueryType) -> "QueryGraphStructure":
        """Normalize orientation (lower id first) and order of nodes and edges."""
        nodes = tuple(sorted(nodes, key=lambda n: n.id))
        edges = tuple(sorted(make_edge(a, b) for a, b in edges))
        return cls(nodes, edges, target, query_type)

    def node(self, node_id: int) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    @property
    def node_map(self) -> dict[int, Node]:
        return {n.id: n for n in self.nodes}

    def incident(self, node_id: int) -> list[Edge]:
        return [e for e in self.edges if node_id in e]

    def to_dict(self) -> dict:
        return {
            "query_type": self.query_type.value,
            "target": self.target,
            "nodes": [_node_to_dict(n) for n in self.nodes],
            "edges": [list(e) for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "QueryGraphStructure":
        nodes = [_node_from_dict(n) for n in d["nodes"]]
        return cls.build(nodes, [tuple(e) for e in d["edges"]], d.get("target"),
                         QueryType(d["query_type"]))


def _node_to_dict(n: Node) -> dict:
    return {"id": n.id, "span": [n.start, n.end], "tag": n.tag.value,
            "uri": n.uri, "mention": n.mention}


def _node_from_dict(d: Mapping) -> Node:
    start, end = d["span"]
    return Node(int(d["id"]), int(start), int(end), NodeTag(d["tag"]), d.get("uri"),
                d.get("mention", ""))


def validate_structure(s: QueryGraphStructure) -> list[str]:
    """Return human-readable violations; empty iff `s` is well formed."""
    out = []
    ids = [n.id for n in s.nodes]
    seen = set()
    for i in ids:
        if i in seen:
            out.append(f"duplicate-node: id {i} appears more than once")
        seen.add(i)
    for n in s.nodes:
        if n.start < 0 or n.start >= n.end:
            out.append(f"bad-span: node {n.id} has span [{n.start}, {n.end})")
        if n.tag is NodeTag.VARIABLE and n.uri is not None:
            out.append(f"variable-with-uri: node {n.id} carries {n.uri}")
    edge_seen = set()
    for a, b in s.edges:
        if a == b:
            out.append(f"self-loop: edge ({a}, {b})")
        key = make_edge(a, b)
        if key in edge_seen:
            out.append(f"duplicate-edge: edge ({a}, {b})")
        edge_seen.add(key)
        for end in (a, b):
            if end not in seen:
                out.append(f"dangling-edge: edge ({a}, {b}) references missing node {end}")
    if s.query_type is QueryType.JUDGE:
        if s.target is not None:
            out.append(f"target-on-judge: JUDGE query has target {s.target}")
    else:
        if s.target is None:
            out.append(f"missing-target: {s.query_type.value} query has no target")
        elif s.target not in seen:
            out.append(f"dangling-target: target {s.target} is not a node")
    return out


@dataclass(frozen=True)
class EdgeBinding:
    edge: Edge
    predicate: DirectedPredicate
    score: float


@dataclass(frozen=True)
class QueryGraph:
    """A structure whose every edge carries a directed predicate.

    `bindings` keeps relation-extraction order, which is also the order the
    triples are emitted in SPARQL.
    """

    structure: QueryGraphStructure
    bindings: tuple[EdgeBinding, ...]

    @property
    def binding_map(self) -> dict[Edge, DirectedPredicate]:
        return {b.edge: b.predicate for b in self.bindings}

    @property
    def edge_scores(self) -> dict[Edge, float]:
        return {b.edge: b.score for b in self.bindings}

    @property
    def score(self) -> float:
        return math.prod(b.score for b in self.bindings)

    def triples(self) -> list[tuple[int, str, int]]:
        """(subject node id, predicate, object node id) in binding order."""
        out = []
        for b in self.bindings:
            n1, n2 = b.edge
            if b.predicate.direction is Direction.FORWARD:
                out.append((n1, b.predicate.predicate, n2))
            else:
                out.append((n2, b.predicate.predicate, n1))
        return out

    def to_dict(self) -> dict:
        return {
            "structure": self.structure.to_dict(),
            "bindings": [
                {"edge": list(b.edge), "predicate": b.predicate.predicate,
                 "direction": b.predicate.direction.value, "score": b.score}
                for b in self.bindings
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "QueryGraph":
        structure = QueryGraphStructure.from_dict(d["structure"])
        bindings = tuple(
            EdgeBinding(make_edge(*b["edge"]),
                        DirectedPredicate(b["predicate"], Direction(b["direction"])),
                        float(b["score"]))
            for b in d["bindings"])
        return cls(structure, bindings)


def validate_graph(g: QueryGraph) -> list[str]:
    out = validate_structure(g.structure)
    counts: dict[Edge, int] = {}
    for b in g.bindings:
        counts[b.edge] = counts.get(b.edge, 0) + 1
        if not 0.0 <= b.score <= 1.0:
            out.append(f"score-range: edge {b.edge} has score {b.score}")
    for e in g.structure.edges:
        c = counts.get(e, 0)
        if c != 1:
            out.append(f"binding-count: edge {e} has {c} bindings")
    for e in counts:
        if e not in set(g.structure.edges):
            out.append(f"unknown-binding: edge {e} is not in the structure")
    return out


def variable_names(s: QueryGraphStructure) -> dict[int, str]:
    """Stable SPARQL variable names derived from mentions."""
    names: dict[int, str] = {}
    used = set()
    for n in s.nodes:
        if not n.is_variable:
            continue
        base = re.sub(r"\W+", "_", n.mention.strip().lower()).strip("_") or "x"
        if not (base[0].isalpha() or base[0] == "_"):
            base = "v" + base
        name = base
        if name in used:
            name = f"{base}_{n.id}"
        used.add(name)
        names[n.id] = name
    return names
