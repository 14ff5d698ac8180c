"""Relation extraction: bind a directed KB predicate to every structure edge.

Edges are processed one at a time.  For each partial subgraph in the beam,
candidates are retrieved from the KB neighbourhood of the edge's grounded
endpoint (a linked node, or a variable already bound by the subgraph) and
scored by a :class:`Ranker`; the best `beam_width` extensions survive.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Protocol

from .errors import ContractViolation, DisconnectedStructureError, OracleGuardError
from .graph import (DirectedPredicate, Direction, Edge, EdgeBinding, Node, QueryGraph,
                    QueryGraphStructure)
from .store import TripleStore, match_pattern, neighbor_predicates
from .text import words

BEAM_WIDTH = 4
BINDING_CAP = 64
ORACLE_GUARD = 10 ** 6
SCORE_FLOOR = 1e-9

Scored = tuple[DirectedPredicate, float]


# -- rankers -------------------------------------------------------------------

class Ranker(Protocol):
    def rank(self, candidates: Iterable[DirectedPredicate], question: str,
             m1: str, m2: str) -> list[Scored]: ...


def _sorted_scores(scored: Iterable[Scored]) -> list[Scored]:
    return sorted(scored, key=lambda x: (-x[1], x[0].sort_key()))


def predicate_tokens(uri: str) -> list[str]:
    """Lower-cased words of a predicate's local name (camelCase and _ split)."""
    local = uri.strip("<>")
    local = re.split(r"[:/#]", local)[-1]
    local = re.sub(r"([a-z0-9])([A-Z])", r"\1 \2", local)
    return [w.lower() for w in re.split(r"[^A-Za-z0-9]+", local) if w]


class ReferenceRanker:
    """Lexical stand-in for a learned ranker.

    score = (1 + |pred words & context words| / max(1, |pred words|)) / 2,
    minus 0.01 for the n2 -> n1 reading, clamped to [0, 1].
    """

    reverse_penalty = 0.01

    def __init__(self):
        self._cache: dict[str, frozenset] = {}

    def _ptoks(self, uri):
        toks = self._cache.get(uri)
        if toks is None:
            toks = self._cache[uri] = frozenset(predicate_tokens(uri))
        return toks

    def rank(self, candidates, question, m1, m2):
        context = set(words(question)) | set(words(m1)) | set(words(m2))
        out = []
        for dp in candidates:
            toks = self._ptoks(dp.predicate)
            score = (1.0 + len(toks & context) / max(1, len(toks))) / 2.0
            if dp.direction is Direction.REVERSE:
                score -= self.reverse_penalty
            out.append((dp, min(1.0, max(0.0, score))))
        return _sorted_scores(out)


class FixtureRanker:
    """Scores looked up by (question id, m1, m2, predicate, direction).

    File format: ``{"default": 0.1, "scores": [...]}`` or just the list, each
    entry an object with those five keys plus ``score``.  Unlisted
    candidates get `default`.
    """

    def __init__(self, entries: Iterable[Mapping] = (), question_id: Optional[str] = None,
                 default: float = 0.0):
        self._table = {}
        for e in entries:
            key = (str(e["qid"]), e["m1"], e["m2"], e["predicate"], Direction(e["direction"]))
            self._table[key] = float(e["score"])
        self.question_id = question_id
        self.default = default

    @classmethod
    def from_file(cls, path) -> "FixtureRanker":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if isinstance(raw, Mapping):
            return cls(raw["scores"], default=float(raw.get("default", 0.0)))
        return cls(raw)

    def for_question(self, question_id) -> "FixtureRanker":
        bound = FixtureRanker(default=self.default)
        bound._table = self._table
        bound.question_id = str(question_id)
        return bound

    def rank(self, candidates, question, m1, m2):
        if self.question_id is None:
            raise ContractViolation("FixtureRanker must be bound with for_question() first")
        out = []
        for dp in candidates:
            key = (self.question_id, m1, m2, dp.predicate, dp.direction)
            out.append((dp, self._table.get(key, self.default)))
        return _sorted_scores(out)


def _checked_rank(ranker, candidates, question, m1, m2) -> list[Scored]:
    ranked = ranker.rank(candidates, question, m1, m2)
    if sorted(dp.sort_key() for dp, _ in ranked) != sorted(dp.sort_key() for dp in candidates):
        raise ContractViolation("ranker must score every candidate exactly once")
    return ranked


# -- partial subgraphs -------------------------------------------------------------

@dataclass(frozen=True)
class ScoredSubgraph:
    """A partially bound query graph; `score` is the product of edge scores."""

    bound: tuple[EdgeBinding, ...] = ()
    score: float = 1.0
    considered: int = 0  # candidates retrieved along the way, for tie-breaks

    def extend(self, edge: Edge, dp: DirectedPredicate, score: float, n_candidates: int) -> "ScoredSubgraph":
        s = max(score, SCORE_FLOOR)
        return ScoredSubgraph(self.bound + (EdgeBinding(edge, dp, s),), self.score * s,
                              self.considered + n_candidates)

    def sort_key(self):
        return (-self.score, self.considered,
                tuple((b.edge, b.predicate.sort_key()) for b in self.bound))

    @property
    def covered(self) -> frozenset[int]:
        return frozenset(n for b in self.bound for n in b.edge)

    def to_query_graph(self, structure: QueryGraphStructure) -> QueryGraph:
        return QueryGraph(structure, self.bound)


@dataclass
class Beam:
    structure: QueryGraphStructure
    elements: list[ScoredSubgraph]
    retrieval_sizes: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.elements)

    @property
    def graphs(self) -> list[QueryGraph]:
        return [e.to_query_graph(self.structure) for e in self.elements]

    @property
    def best(self) -> Optional[QueryGraph]:
        return self.elements[0].to_query_graph(self.structure) if self.elements else None


# -- retrieval ---------------------------------------------------------------------

def _grounded(node: Node, g: ScoredSubgraph) -> bool:
    return not node.is_variable or node.id in g.covered


def sample_edge(pending: Iterable[Edge], g: ScoredSubgraph, s: QueryGraphStructure) -> Edge:
    """Smallest pending edge with a grounded endpoint."""
    pending = sorted(pending)
    if not pending:
        raise ContractViolation("no pending edges")
    nodes = s.node_map
    for e in pending:
        if _grounded(nodes[e[0]], g) or _grounded(nodes[e[1]], g):
            return e
    raise DisconnectedStructureError(f"no pending edge among {pending} touches a grounded node")


def _component_bindings(g: ScoredSubgraph, roots: Iterable[int]) -> tuple[EdgeBinding, ...]:
    """Bound edges connected (within g) to any of `roots`."""
    adj: dict[int, list[EdgeBinding]] = {}
    for b in g.bound:
        for n in b.edge:
            adj.setdefault(n, []).append(b)
    seen_nodes = set()
    picked = []
    queue = deque(r for r in roots if r in adj)
    while queue:
        n = queue.popleft()
        if n in seen_nodes:
            continue
        seen_nodes.add(n)
        for b in adj.get(n, ()):
            if b not in picked:
                picked.append(b)
            for m in b.edge:
                if m not in seen_nodes:
                    queue.append(m)
    return tuple(b for b in g.bound if b in picked)


def _rows(store: TripleStore, g: ScoredSubgraph, s: QueryGraphStructure, nids) -> list[dict]:
    sub = _component_bindings(g, nids)
    if not sub:
        return [{}]
    return match_pattern(store, QueryGraph(s, sub))


def retrieve(store: TripleStore, g: ScoredSubgraph, n1: int, n2: int, s: QueryGraphStructure,
             binding_cap: int = BINDING_CAP) -> set[DirectedPredicate]:
    """Candidate directed predicates for edge (n1, n2) given partial graph `g`.

    Bindings of a grounded variable come from matching `g` against the
    store; at most `binding_cap` distinct bindings per endpoint are used,
    taken in URI order.  With both endpoints grounded only predicates on
    triples between their bindings qualify.
    """
    nodes = s.node_map
    a, b = nodes[n1], nodes[n2]
    ga, gb = _grounded(a, g), _grounded(b, g)
    if not (ga or gb):
        raise ContractViolation(f"edge ({n1}, {n2}) has no grounded endpoint")
    need = [n.id for n in (a, b) if n.is_variable and n.id in g.covered]
    rows = _rows(store, g, s, need) if need else [{}]

    def value(node, row):
        return node.uri if not node.is_variable else row.get(node.id)

    def capped(node):
        return sorted({value(node, r) for r in rows} - {None})[:binding_cap]

    out: set[DirectedPredicate] = set()
    if ga and gb:
        allowed_a, allowed_b = set(capped(a)), set(capped(b))
        pairs = {(value(a, r), value(b, r)) for r in rows}
        for u, v in sorted(p for p in pairs if p[0] in allowed_a and p[1] in allowed_b):
            for p, objs in store.out_edges(u).items():
                if v in objs:
                    out.add(DirectedPredicate(p, Direction.FORWARD))
            for p, objs in store.out_edges(v).items():
                if u in objs:
                    out.add(DirectedPredicate(p, Direction.REVERSE))
        return out
    if ga:
        for u in capped(a):
            out |= neighbor_predicates(store, u)
        return out
    for v in capped(b):
        out |= {DirectedPredicate(dp.predicate, dp.direction.flipped())
                for dp in neighbor_predicates(store, v)}
    return out


# -- beam search ---------------------------------------------------------------------

def beam_search_re(question: str, s: QueryGraphStructure, store: TripleStore, ranker: Ranker,
                   beam_width: int = BEAM_WIDTH, binding_cap: int = BINDING_CAP) -> Beam:
    """Retrieve-and-rank beam search over the edges of `s`.

    Returns at most `beam_width` complete graphs, best first.  An empty beam
    means every partial graph ran out of candidates.
    """
    if beam_width < 1:
        raise ContractViolation("beam width must be >= 1")
    nodes = s.node_map
    beam = [ScoredSubgraph()]
    pending = set(s.edges)
    sizes: list[int] = []
    while pending:
        edge = sample_edge(pending, beam[0], s)
        n1, n2 = edge
        m1, m2 = nodes[n1].mention, nodes[n2].mention
        extended = []
        for g in beam:
            cands = retrieve(store, g, n1, n2, s, binding_cap)
            sizes.append(len(cands))
            for dp, score in _checked_rank(ranker, cands, question, m1, m2):
                extended.append(g.extend(edge, dp, score, len(cands)))
        extended.sort(key=ScoredSubgraph.sort_key)
        beam = extended[:beam_width]
        pending.discard(edge)
        if not beam:
            return Beam(s, [], sizes)
    return Beam(s, beam, sizes)


def brute_force_re(question: str, s: QueryGraphStructure, store: TripleStore, ranker: Ranker,
                   binding_cap: int = BINDING_CAP, guard: int = ORACLE_GUARD) -> Optional[QueryGraph]:
    """Exhaustive search over every complete predicate assignment (test oracle).

    Uses the same edge order and retrieval as the beam search but keeps every
    branch; the winner is the best product score, ties going to fewer
    retrieved candidates and then to predicate URI order.  Refuses with
    :class:`OracleGuardError` once more than `guard` partial assignments
    have been visited.
    """
    nodes = s.node_map
    best: list = [None]
    visited = [0]

    def key(bound, score, considered):
        return (-score, considered, tuple((b.edge, b.predicate.sort_key()) for b in bound))

    def walk(bound: tuple, score: float, considered: int, pending: frozenset):
        visited[0] += 1
        if visited[0] > guard:
            raise OracleGuardError(f"assignment space exceeds {guard}")
        if not pending:
            k = key(bound, score, considered)
            if best[0] is None or k < best[0][0]:
                best[0] = (k, bound)
            return
        g = ScoredSubgraph(bound, score, considered)
        edge = sample_edge(pending, g, s)
        cands = retrieve(store, g, edge[0], edge[1], s, binding_cap)
        m1, m2 = nodes[edge[0]].mention, nodes[edge[1]].mention
        for dp, sc in ranker.rank(cands, question, m1, m2):
            sc = max(sc, SCORE_FLOOR)
            walk(bound + (EdgeBinding(edge, dp, sc),), score * sc, considered + len(cands),
                 pending - {edge})

    walk((), 1.0, 0, frozenset(s.edges))
    if best[0] is None:
        return None
    return QueryGraph(s, best[0][1])


# -- k-hop baseline ---------------------------------------------------------------------

@dataclass
class BaselineResult:
    graph: Optional[QueryGraph]
    candidate_counts: dict[Edge, int]
    hops: dict[Edge, int]

    @property
    def total_candidates(self) -> int:
        return sum(self.candidate_counts.values())


def _anchor_distance(s: QueryGraphStructure, start: int) -> tuple[Optional[int], int]:
    """Nearest non-variable node from `start` over structure edges: (id, hops)."""
    nodes = s.node_map
    adj: dict[int, list[int]] = {n: [] for n in nodes}
    for x, y in s.edges:
        adj[x].append(y)
        adj[y].append(x)
    seen = {start}
    frontier = [start]
    dist = 0
    while frontier:
        hits = sorted(n for n in frontier if not nodes[n].is_variable)
        if hits:
            return hits[0], dist
        nxt = []
        for n in frontier:
            for m in sorted(adj[n]):
                if m not in seen:
                    seen.add(m)
                    nxt.append(m)
        frontier = nxt
        dist += 1
    return None, -1


def khop_predicate_paths(store: TripleStore, anchor: str, k: int) -> dict[tuple, set]:
    """All predicate paths of length k from `anchor` -> the nodes they reach.

    A path is a tuple of DirectedPredicate, each hop taken in either
    direction.
    """
    states: dict[tuple, set] = {(): {anchor}}
    for _ in range(k):
        nxt: dict[tuple, set] = {}
        for path, reached in states.items():
            for u in reached:
                for p, objs in store.out_edges(u).items():
                    nxt.setdefault(path + (DirectedPredicate(p, Direction.FORWARD),), set()).update(objs)
                for p, subs in store.in_edges(u).items():
                    nxt.setdefault(path + (DirectedPredicate(p, Direction.REVERSE),), set()).update(subs)
        states = nxt
    return states


def baseline_re(question: str, s: QueryGraphStructure, store: TripleStore, ranker: Ranker) -> BaselineResult:
    """Rank each edge independently over predicates k hops from its anchor.

    For an edge touching a linked node, candidates are that node's adjacent
    predicates (k = 1).  Otherwise the nearest linked node at structure
    distance d from the edge anchors a walk of k = d + 1 hops, every
    distinct predicate path is enumerated, and the last hop of each path is
    a candidate.  `candidate_counts` reports the number of enumerated paths.
    """
    nodes = s.node_map
    counts: dict[Edge, int] = {}
    hops: dict[Edge, int] = {}
    bindings = []
    for edge in s.edges:
        n1, n2 = edge
        a1, d1 = _anchor_distance(s, n1)
        a2, d2 = _anchor_distance(s, n2)
        if a1 is None and a2 is None:
            raise DisconnectedStructureError(f"edge {edge} has no linked node in its component")
        # near endpoint: the one closer to an anchor (n1 on ties)
        if a2 is None or (a1 is not None and d1 <= d2):
            near_is_n1, anchor, dist = True, a1, d1
        else:
            near_is_n1, anchor, dist = False, a2, d2
        k = dist + 1
        paths = khop_predicate_paths(store, nodes[anchor].uri, k)
        counts[edge] = len(paths)
        hops[edge] = k
        last = {path[-1] for path in paths}
        if not near_is_n1:
            last = {DirectedPredicate(dp.predicate, dp.direction.flipped()) for dp in last}
        ranked = _checked_rank(ranker, last, question, nodes[n1].mention, nodes[n2].mention)
        if not ranked:
            return BaselineResult(None, counts, hops)
        dp, score = ranked[0]
        bindings.append(EdgeBinding(edge, dp, max(score, SCORE_FLOOR)))
    return BaselineResult(QueryGraph(s, tuple(bindings)), counts, hops)


# -- ranking-model training samples ---------------------------------------------------

class RankingSample(NamedTuple):
    question: str
    mention_a: str
    mention_b: str
    predicate: str
    label: int


def _free_predicate_candidates(store: TripleStore, gold: QueryGraph, binding: EdgeBinding):
    """Predicates r with the gold graph still satisfiable when this edge reads
    (subject r object) [first set] or (object r subject) [second set]."""
    s = gold.structure
    nodes = s.node_map
    others = tuple(b for b in gold.bindings if b is not binding)
    rows = match_pattern(store, QueryGraph(s, others)) if others else [{}]
    n1, n2 = binding.edge
    if binding.predicate.direction is Direction.FORWARD:
        subj, obj = nodes[n1], nodes[n2]
    else:
        subj, obj = nodes[n2], nodes[n1]

    def value(node, row):
        return node.uri if not node.is_variable else row.get(node.id)

    def preds(u, v):
        if u is not None and v is not None:
            return {p for p, objs in store.out_edges(u).items() if v in objs}
        if u is not None:
            return set(store.out_edges(u))
        if v is not None:
            return set(store.in_edges(v))
        return set(store.predicates)

    pos, rev = set(), set()
    for row in rows:
        u, v = value(subj, row), value(obj, row)
        pos |= preds(u, v)
        rev |= preds(v, u)
    return subj, obj, pos, rev


def gen_ranking_samples(gold: QueryGraph, store: TripleStore, question: str,
                        augment: bool = True) -> list[RankingSample]:
    """Positive and negative ranker inputs derived from a gold query graph.

    Per edge with gold predicate p* from subject A to object B: one positive
    (q, A, B, p*); negatives (q, A, B, p) for other predicates that fit the
    A -> B slot and (q, B, A, p) for predicates fitting B -> A.  With
    `augment`, the crossed combinations are added as negatives too.
    """
    out: list[RankingSample] = []
    for binding in gold.bindings:
        subj, obj, pos, rev = _free_predicate_candidates(store, gold, binding)
        gold_p = binding.predicate.predicate
        if gold_p not in pos:
            raise ContractViolation(f"gold edge {binding.edge} ({gold_p}) is not satisfiable in the store")
        ma, mb = subj.mention, obj.mention
        positive = RankingSample(question, ma, mb, gold_p, 1)
        negatives = [(ma, mb, p) for p in sorted(pos - {gold_p})]
        negatives += [(mb, ma, p) for p in sorted(rev)]
        if augment:
            negatives += [(ma, mb, p) for p in sorted(rev - {gold_p})]
            negatives += [(mb, ma, p) for p in sorted(pos)]
        seen = {(ma, mb, gold_p)}
        out.append(positive)
        for x, y, p in negatives:
            if (x, y, p) in seen:
                continue
            seen.add((x, y, p))
            out.append(RankingSample(question, x, y, p, 0))
    return out
