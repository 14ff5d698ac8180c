"""Synthetic stores, structures and rankers for oracle and scaling checks."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import DirectedPredicate, Node, NodeTag, QueryGraphStructure, QueryType
from .relation import (BEAM_WIDTH, BINDING_CAP, ORACLE_GUARD, ReferenceRanker, _sorted_scores,
                       baseline_re, beam_search_re, brute_force_re)
from .store import Triple, TripleStore

NS = "ex:"


class HashRanker:
    """Pseudo-random but reproducible scores in (0, 1) keyed on the full input."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def score(self, question: str, m1: str, m2: str, dp: DirectedPredicate) -> float:
        key = "\x1f".join((str(self.seed), question, m1, m2, dp.predicate, dp.direction.value))
        h = int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "little")
        return (h + 0.5) / 2.0 ** 64

    def rank(self, candidates, question, m1, m2):
        return _sorted_scores((dp, self.score(question, m1, m2, dp)) for dp in candidates)


def random_store(rng: np.random.Generator, max_nodes: int = 40, n_predicates: int = 6,
                 max_degree: int = 8, density: float = 2.0) -> TripleStore:
    """Random directed multigraph; every node touches at most `max_degree`
    distinct directed predicates."""
    n = int(rng.integers(4, max_nodes + 1))
    out_p: dict[int, set] = {i: set() for i in range(n)}
    in_p: dict[int, set] = {i: set() for i in range(n)}
    triples = []
    for _ in range(int(density * n)):
        s, o = (int(x) for x in rng.integers(0, n, size=2))
        if s == o:
            continue
        p = int(rng.integers(0, n_predicates))
        if len(out_p[s] | {p}) + len(in_p[s]) > max_degree or len(out_p[o]) + len(in_p[o] | {p}) > max_degree:
            continue
        out_p[s].add(p)
        in_p[o].add(p)
        triples.append(Triple(f"{NS}n{s}", f"{NS}p{p}", f"{NS}n{o}"))
    return TripleStore(triples)


def random_structure(rng: np.random.Generator, store: TripleStore, n_edges: Optional[int] = None,
                     entity_prob: float = 0.2) -> QueryGraphStructure:
    """A connected 1-3 edge structure anchored on a store term.

    Node 0 is an entity; further nodes attach to random earlier nodes and are
    variables except with probability `entity_prob`.  The last variable is
    the target (JUDGE when there is none).
    """
    if n_edges is None:
        n_edges = int(rng.integers(1, 4))
    terms = store.terms
    anchored = [t for t in terms if store.degree(t) > 0]
    tags = [NodeTag.ENTITY]
    uris: list[Optional[str]] = [anchored[int(rng.integers(len(anchored)))]]
    edges = []
    for i in range(1, n_edges + 1):
        parent = int(rng.integers(0, i))
        if rng.random() < entity_prob:
            tags.append(NodeTag.ENTITY)
            uris.append(terms[int(rng.integers(len(terms)))])
        else:
            tags.append(NodeTag.VARIABLE)
            uris.append(None)
        edges.append((parent, i))
    nodes = [Node(i, i + 1, i + 2, tag, uri, f"m{i}") for i, (tag, uri) in enumerate(zip(tags, uris))]
    variables = [nd.id for nd in nodes if nd.is_variable]
    if variables:
        return QueryGraphStructure.build(nodes, edges, variables[-1], QueryType.SELECT)
    return QueryGraphStructure.build(nodes, edges, None, QueryType.JUDGE)


def star_store(n: int, depth: int) -> TripleStore:
    """Tree in which every internal node has exactly n neighbours.

    The root has n children, other internal nodes n - 1 children plus their
    parent; leaves sit at `depth`.  Each triple has its own predicate, so a
    k-hop walk from the root has n**k distinct predicate paths for k <= depth.
    """
    triples = []
    frontier = [f"{NS}root"]
    counter = 0
    for level in range(depth):
        nxt = []
        fan = n if level == 0 else n - 1
        for parent in frontier:
            for _ in range(fan):
                child = f"{NS}v{counter}"
                triples.append(Triple(parent, f"{NS}r{counter}", child))
                counter += 1
                nxt.append(child)
        frontier = nxt
    return TripleStore(triples)


def chain_structure(k: int, root: str = f"{NS}root") -> QueryGraphStructure:
    """root - ?x1 - ... - ?xk, selecting ?xk."""
    nodes = [Node(0, 1, 2, NodeTag.ENTITY, root, "root")]
    nodes += [Node(i, i + 1, i + 2, NodeTag.VARIABLE, None, f"x{i}") for i in range(1, k + 1)]
    edges = [(i, i + 1) for i in range(k)]
    return QueryGraphStructure.build(nodes, edges, k, QueryType.SELECT)


# -- reports ---------------------------------------------------------------------

@dataclass
class OracleReport:
    trials: int = 0
    answerable: int = 0      # trials where some complete assignment exists
    exact: int = 0           # saturating beam top == oracle argmax
    contained: int = 0       # oracle argmax within the width-b beam
    mismatches: list = field(default_factory=list)

    @property
    def exact_rate(self) -> float:
        return self.exact / self.trials if self.trials else 1.0

    @property
    def containment_rate(self) -> float:
        return self.contained / self.trials if self.trials else 1.0

    def to_dict(self) -> dict:
        return {"trials": self.trials, "answerable": self.answerable, "exact": self.exact,
                "contained": self.contained, "exact_rate": self.exact_rate,
                "containment_rate": self.containment_rate, "mismatches": self.mismatches}


def oracle_trials(trials: int = 200, seed: int = 0, beam_width: int = BEAM_WIDTH,
                  binding_cap: int = BINDING_CAP, saturating_width: int = ORACLE_GUARD) -> OracleReport:
    """Beam search against the brute-force oracle on random stores.

    A trial with no complete assignment counts as exact (and contained)
    when the beam comes back empty too.
    """
    rng = np.random.default_rng(seed)
    rep = OracleReport()
    for t in range(trials):
        store = random_store(rng)
        s = random_structure(rng, store)
        ranker = HashRanker(seed * 100003 + t)
        q = f"trial {t}"
        oracle = brute_force_re(q, s, store, ranker, binding_cap)
        full = beam_search_re(q, s, store, ranker, saturating_width, binding_cap)
        narrow = beam_search_re(q, s, store, ranker, beam_width, binding_cap)
        rep.trials += 1
        if oracle is None:
            rep.exact += full.best is None
            rep.contained += not narrow.elements
            continue
        rep.answerable += 1
        if full.best == oracle:
            rep.exact += 1
        else:
            rep.mismatches.append(t)
        rep.contained += oracle in narrow.graphs
    return rep


@dataclass
class ScalingRow:
    n: int
    k: int
    baseline_count: int      # predicate paths enumerated for the k-th edge
    baseline_total: int      # over all chain edges
    beam_max_step: int       # largest single retrieval during beam search
    beam_total: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def scaling_rows(ns=(10, 30, 50), ks=(1, 2, 3), beam_width: int = BEAM_WIDTH,
                 binding_cap: int = BINDING_CAP) -> list[ScalingRow]:
    """Candidate counts of baseline and beam search on star stores and chains."""
    rows = []
    ranker = ReferenceRanker()
    for n in ns:
        store = star_store(n, max(ks))
        for k in ks:
            s = chain_structure(k)
            base = baseline_re("chain", s, store, ranker)
            beam = beam_search_re("chain", s, store, ranker, beam_width, binding_cap)
            rows.append(ScalingRow(n, k, base.candidate_counts[(k - 1, k)], base.total_candidates,
                                   max(beam.retrieval_sizes), sum(beam.retrieval_sizes)))
    return rows
