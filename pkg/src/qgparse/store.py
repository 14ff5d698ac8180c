"""Immutable in-memory triple store and conjunctive pattern matcher.

Terms are plain strings: prefixed names (``dbr:New_York``), full IRIs in
angle brackets, or literals kept in their quoted lexical form
(``"905748"``).  Literals compare by exact string equality.
"""

from __future__ import annotations

import io
import re
from collections import defaultdict
from types import MappingProxyType
from typing import IO, Iterable, Mapping, NamedTuple, Optional, Sequence, Union

from .errors import ContractViolation, TripleParseError
from .graph import DirectedPredicate, Direction, QueryGraph, QueryType

DEFAULT_PREFIXES = {
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "rdfs": "http://www.w3.org/2000/01/rdf-schema#",
    "xsd": "http://www.w3.org/2001/XMLSchema#",
    "dbo": "http://dbpedia.org/ontology/",
    "dbp": "http://dbpedia.org/property/",
    "dbr": "http://dbpedia.org/resource/",
}

RDF_TYPE = "rdf:type"


class Triple(NamedTuple):
    subject: str
    predicate: str
    object: str


def is_literal(term: str) -> bool:
    return term.startswith('"')


class TripleStore:
    """Read-only triple set with subject, object and predicate indexes."""

    def __init__(self, triples: Iterable[Triple] = (), prefixes: Optional[Mapping[str, str]] = None):
        uniq = sorted({Triple(*t) for t in triples})
        out_idx: dict = defaultdict(lambda: defaultdict(set))
        in_idx: dict = defaultdict(lambda: defaultdict(set))
        by_pred: dict = defaultdict(list)
        for s, p, o in uniq:
            if is_literal(s) or is_literal(p):
                raise ContractViolation(f"subject and predicate must be URIs: {(s, p, o)}")
            out_idx[s][p].add(o)
            in_idx[o][p].add(s)
            by_pred[p].append((s, o))
        self._triples = tuple(uniq)
        self._out = {s: {p: tuple(sorted(os)) for p, os in d.items()} for s, d in out_idx.items()}
        self._in = {o: {p: tuple(sorted(ss)) for p, ss in d.items()} for o, d in in_idx.items()}
        self._by_pred = {p: tuple(v) for p, v in by_pred.items()}
        self._terms = tuple(sorted(set(self._out) | set(self._in)))
        self._term_set = frozenset(self._terms)
        self.prefixes = MappingProxyType(dict(prefixes if prefixes is not None else DEFAULT_PREFIXES))

    def __len__(self):
        return len(self._triples)

    def __iter__(self):
        return iter(self._triples)

    def __contains__(self, item):
        if isinstance(item, tuple):
            s, p, o = item
            return o in self._out.get(s, {}).get(p, ())
        return item in self._term_set

    @property
    def triples(self) -> tuple[Triple, ...]:
        return self._triples

    @property
    def terms(self) -> tuple[str, ...]:
        """Every subject or object, sorted."""
        return self._terms

    @property
    def predicates(self) -> tuple[str, ...]:
        return tuple(sorted(self._by_pred))

    def out_edges(self, subject: str) -> Mapping[str, tuple[str, ...]]:
        return self._out.get(subject, {})

    def in_edges(self, obj: str) -> Mapping[str, tuple[str, ...]]:
        return self._in.get(obj, {})

    def objects(self, subject: str, predicate: str) -> tuple[str, ...]:
        return self._out.get(subject, {}).get(predicate, ())

    def subjects(self, predicate: str, obj: str) -> tuple[str, ...]:
        return self._in.get(obj, {}).get(predicate, ())

    def pairs(self, predicate: str) -> tuple[tuple[str, str], ...]:
        return self._by_pred.get(predicate, ())

    def predicates_of(self, node: str, direction: Direction) -> frozenset[str]:
        """Predicates leaving `node` (forward) or entering it (reverse)."""
        idx = self._out if direction is Direction.FORWARD else self._in
        return frozenset(idx.get(node, ()))

    def degree(self, node: str) -> int:
        """Number of distinct directed predicates incident to `node`."""
        return len(self._out.get(node, ())) + len(self._in.get(node, ()))

    def max_degree(self) -> int:
        return max((self.degree(t) for t in self._terms), default=0)


# -- loading ---------------------------------------------------------------

_NT_TERM = re.compile(r'\s*(<[^>]*>|"(?:[^"\\]|\\.)*"(?:@[A-Za-z][\w-]*|\^\^\S+)?|[^\s<>"]+)')
_PREFIX_LINE = re.compile(r"^@prefix\s+([A-Za-z][\w-]*)?:\s+<?([^>\s]+)>?\s*\.?\s*$")


def _compact(term: str, prefixes: Mapping[str, str]) -> str:
    if term.startswith("<") and term.endswith(">"):
        iri = term[1:-1]
        best = None
        for name, exp in prefixes.items():
            if iri.startswith(exp) and (best is None or len(exp) > len(prefixes[best])):
                best = name
        if best is not None:
            local = iri[len(prefixes[best]):]
            if local and not re.search(r"[\s<>]", local):
                return f"{best}:{local}"
    if term == "a":
        return RDF_TYPE
    return term


def load_triples(source: Union[bytes, str, IO], fmt: str = "tsv",
                 prefixes: Optional[Mapping[str, str]] = None) -> TripleStore:
    """Parse a KB file into a :class:`TripleStore`.

    `fmt` is ``"tsv"`` (three tab-separated fields per line) or ``"nt"``
    (N-Triples style: whitespace separated terms ending with ``.``).  Both
    accept ``@prefix name: expansion`` declarations, blank lines and ``#``
    comments.  Full IRIs covered by a known prefix are stored compacted.
    """
    if fmt not in ("tsv", "nt"):
        raise ContractViolation(f"unknown triple format {fmt!r}")
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    pmap = dict(DEFAULT_PREFIXES if prefixes is None else prefixes)
    triples = []
    for no, raw in enumerate(io.StringIO(text), start=1):
        line = raw.rstrip("\r\n")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("@prefix"):
            m = _PREFIX_LINE.match(stripped)
            if not m:
                raise TripleParseError(no, line, "malformed prefix declaration")
            pmap[m.group(1) or ""] = m.group(2)
            continue
        if fmt == "tsv":
            fields = line.split("\t")
            if len(fields) != 3 or any(not f.strip() for f in fields):
                raise TripleParseError(no, line, "expected three non-empty tab-separated fields")
            fields = [f.strip() for f in fields]
        else:
            fields = _split_nt(stripped, no, line)
        s, p, o = (_compact(f, pmap) for f in fields)
        if is_literal(s) or is_literal(p):
            raise TripleParseError(no, line, "subject and predicate must be URIs")
        triples.append(Triple(s, p, o))
    return TripleStore(triples, pmap)


def _split_nt(stripped, no, line):
    if not stripped.endswith("."):
        raise TripleParseError(no, line, "N-Triples line must end with '.'")
    body = stripped[:-1].rstrip()
    terms = []
    pos = 0
    while pos < len(body):
        m = _NT_TERM.match(body, pos)
        if not m:
            raise TripleParseError(no, line, "unreadable term")
        terms.append(m.group(1))
        pos = m.end()
        while pos < len(body) and body[pos].isspace():
            pos += 1
    if len(terms) != 3:
        raise TripleParseError(no, line, f"expected 3 terms, found {len(terms)}")
    return terms


def load_triples_file(path, fmt: Optional[str] = None,
                      prefixes: Optional[Mapping[str, str]] = None) -> TripleStore:
    if fmt is None:
        fmt = "nt" if str(path).endswith((".nt", ".ttl")) else "tsv"
    with open(path, "rb") as fh:
        return load_triples(fh, fmt, prefixes)


# -- queries ---------------------------------------------------------------

def neighbor_predicates(store: TripleStore, node: str) -> set[DirectedPredicate]:
    out = {DirectedPredicate(p, Direction.FORWARD) for p in store.out_edges(node)}
    out |= {DirectedPredicate(p, Direction.REVERSE) for p in store.in_edges(node)}
    return out


def _pattern(g: QueryGraph):
    nodes = g.structure.node_map
    fixed = {}
    for n in nodes.values():
        if not n.is_variable:
            if n.uri is None:
                raise ContractViolation(f"node {n.id} ({n.tag.value}) is not linked to a URI")
            fixed[n.id] = n.uri
    variables = {nid for nid, n in nodes.items() if n.is_variable}
    return g.triples(), fixed, variables


def match_pattern(store: TripleStore, g: QueryGraph,
                  seeds: Optional[Mapping[int, str]] = None,
                  edge_order: Optional[Sequence[int]] = None) -> list[dict[int, str]]:
    """All variable assignments under which every bound edge is a store triple.

    Mappings cover the variables that occur on an edge or in `seeds`;
    non-variable nodes stand for their own URI.  The join is a backtracking
    search that always extends the most constrained remaining triple
    pattern; `edge_order` forces a fixed order instead (indexes into the
    graph's binding order).  The result is deduplicated and sorted.
    """
    patterns, fixed, variables = _pattern(g)
    seeds = dict(seeds or {})
    for v in seeds:
        if v not in variables:
            raise ContractViolation(f"seed for {v} which is not a variable of the graph")
    if edge_order is not None and sorted(edge_order) != list(range(len(patterns))):
        raise ContractViolation("edge_order must be a permutation of the bound edges")

    results: set[tuple] = set()
    binding = dict(seeds)

    def value(nid):
        if nid in fixed:
            return fixed[nid]
        return binding.get(nid)

    def estimate(i):
        s, p, o = patterns[i]
        sv, ov = value(s), value(o)
        if sv is not None and ov is not None:
            return (0, 0)
        if sv is not None:
            return (1, len(store.objects(sv, p)))
        if ov is not None:
            return (1, len(store.subjects(p, ov)))
        return (2, len(store.pairs(p)))

    def candidates(i):
        s, p, o = patterns[i]
        sv, ov = value(s), value(o)
        if sv is not None and ov is not None:
            if (sv, p, ov) in store:
                yield sv, ov
        elif sv is not None:
            for obj in store.objects(sv, p):
                yield sv, obj
        elif ov is not None:
            for subj in store.subjects(p, ov):
                yield subj, ov
        else:
            yield from store.pairs(p)

    def search(remaining):
        if not remaining:
            results.add(tuple(sorted(binding.items())))
            return
        if edge_order is not None:
            i = remaining[0]
        else:
            i = min(remaining, key=lambda k: (estimate(k), k))
        rest = [k for k in remaining if k != i]
        s, _, o = patterns[i]
        for sv, ov in candidates(i):
            added = []
            ok = True
            for nid, val in ((s, sv), (o, ov)):
                cur = value(nid)
                if cur is None:
                    binding[nid] = val
                    added.append(nid)
                elif cur != val:
                    ok = False
                    break
            if ok:
                search(rest)
            for nid in added:
                del binding[nid]

    order = list(edge_order) if edge_order is not None else list(range(len(patterns)))
    search(order)
    return [dict(r) for r in sorted(results)]


Answer = Union[frozenset, int, bool]


def execute(store: TripleStore, g: QueryGraph) -> Answer:
    qtype = g.structure.query_type
    rows = match_pattern(store, g)
    if qtype is QueryType.JUDGE:
        return bool(rows)
    target = g.structure.target
    if target is None:
        raise ContractViolation(f"{qtype.value} query without a target node")
    node = g.structure.node(target)
    if node.is_variable:
        values = frozenset(r[target] for r in rows if target in r)
    else:
        values = frozenset([node.uri]) if rows else frozenset()
    if qtype is QueryType.COUNT:
        return len(values)
    return values
