"""Query-type classification and SPARQL serialization of query graphs."""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, NamedTuple, Optional

from .errors import ContractViolation
from .graph import QueryGraph, QueryType, variable_names
from .store import RDF_TYPE
from .text import words

START, ANYWHERE = "start", "anywhere"


class Trigger(NamedTuple):
    words: tuple[str, ...]
    query_type: QueryType
    anchor: str  # START or ANYWHERE

    @property
    def phrase(self) -> str:
        return " ".join(self.words)


def _default_anchor(qt: QueryType) -> str:
    return START if qt is QueryType.JUDGE else ANYWHERE


@dataclass(frozen=True)
class TriggerLexicon:
    """Trigger phrases checked longest first; the first hit decides the type.

    Ties in length go to start-anchored phrases, then alphabetical order.
    JUDGE phrases default to matching only at the start of the question.
    """

    triggers: tuple[Trigger, ...]

    @classmethod
    def from_entries(cls, entries: Iterable[tuple]) -> "TriggerLexicon":
        out = {}
        for entry in entries:
            phrase, qt = entry[0], QueryType(str(entry[1]).upper())
            anchor = entry[2] if len(entry) > 2 and entry[2] else _default_anchor(qt)
            if anchor not in (START, ANYWHERE):
                raise ContractViolation(f"unknown trigger anchor {anchor!r}")
            toks = tuple(words(phrase))
            if not toks:
                raise ContractViolation(f"empty trigger phrase {phrase!r}")
            out[(toks, anchor)] = Trigger(toks, qt, anchor)
        ordered = sorted(out.values(), key=lambda t: (-len(t.words), t.anchor != START, t.words))
        return cls(tuple(ordered))

    @classmethod
    def from_text(cls, text: str) -> "TriggerLexicon":
        """Lines ``phrase<TAB>TYPE[<TAB>start|anywhere]``; ``#`` starts a comment."""
        entries = []
        for no, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = [f.strip() for f in line.split("\t")]
            if len(fields) not in (2, 3):
                raise ContractViolation(f"lexicon line {no}: expected 2 or 3 tab-separated fields")
            try:
                QueryType(fields[1].upper())
            except ValueError as exc:
                raise ContractViolation(f"lexicon line {no}: {exc}") from None
            entries.append(tuple(fields))
        return cls.from_entries(entries)

    @classmethod
    def from_file(cls, path) -> "TriggerLexicon":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    @classmethod
    def default(cls) -> "TriggerLexicon":
        text = resources.files("qgparse.data").joinpath("lexicon.tsv").read_text(encoding="utf-8")
        return cls.from_text(text)

    def match(self, question: str) -> Optional[Trigger]:
        toks = words(question)
        for trig in self.triggers:
            k = len(trig.words)
            if trig.anchor == START:
                if tuple(toks[:k]) == trig.words:
                    return trig
            elif any(tuple(toks[i:i + k]) == trig.words for i in range(len(toks) - k + 1)):
                return trig
        return None


def classify_query_type(question: str, lex: Optional[TriggerLexicon] = None) -> QueryType:
    if not question.strip():
        raise ContractViolation("empty question")
    hit = (lex or TriggerLexicon.default()).match(question)
    return hit.query_type if hit else QueryType.SELECT


# -- emission -------------------------------------------------------------------

def load_prefix_map(path) -> dict[str, str]:
    """Lines ``prefix<TAB>expansion``."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 2:
                raise ContractViolation(f"prefix map line {no}: expected 2 tab-separated fields")
            out[fields[0].strip().rstrip(":")] = fields[1].strip()
    return out


def render_term(term: str, prefixes: Optional[Mapping[str, str]] = None) -> str:
    if prefixes and term.startswith("<") and term.endswith(">"):
        iri = term[1:-1]
        for name, exp in sorted(prefixes.items(), key=lambda kv: (-len(kv[1]), kv[0])):
            local = iri[len(exp):]
            if iri.startswith(exp) and local and re.fullmatch(r"[^\s{}]+", local):
                return f"{name}:{local}"
    return term


def body_triples(g: QueryGraph, prefixes: Optional[Mapping[str, str]] = None) -> list[tuple[str, str, str]]:
    """Rendered (subject, predicate, object) strings in binding order."""
    names = variable_names(g.structure)
    nodes = g.structure.node_map

    def node_term(nid):
        n = nodes[nid]
        if n.is_variable:
            return "?" + names[nid]
        if n.uri is None:
            raise ContractViolation(f"node {nid} is not linked")
        return render_term(n.uri, prefixes)

    out = []
    for s, p, o in g.triples():
        pred = "a" if p == RDF_TYPE else render_term(p, prefixes)
        out.append((node_term(s), pred, node_term(o)))
    return out


def emit_sparql(g: QueryGraph, prefixes: Optional[Mapping[str, str]] = None) -> str:
    s = g.structure
    bound = {b.edge for b in g.bindings}
    if bound != set(s.edges) or len(g.bindings) != len(s.edges):
        raise ContractViolation("every structure edge needs exactly one binding")
    if s.query_type is QueryType.JUDGE:
        header = "ask"
    else:
        if s.target is None:
            raise ContractViolation(f"{s.query_type.value} query without a target")
        target = s.node(s.target)
        if not target.is_variable:
            raise ContractViolation(f"target node {s.target} is not a variable")
        var = "?" + variable_names(s)[s.target]
        header = f"select count({var})" if s.query_type is QueryType.COUNT else f"select {var}"
    body = " . ".join(" ".join(t) for t in body_triples(g, prefixes))
    return f"{header} {{{body}}}"


# -- minimal reader --------------------------------------------------------------

class ParsedQuery(NamedTuple):
    query_type: QueryType
    target: Optional[str]  # variable name without '?'
    triples: tuple[tuple[str, str, str], ...]


_HEADER = re.compile(
    r"^\s*(?:(?P<ask>ask)|select\s+count\(\s*\?(?P<count>\w+)\s*\)|select\s+\?(?P<sel>\w+))"
    r"\s*(?:where\s*)?\{(?P<body>.*)\}\s*$", re.IGNORECASE | re.DOTALL)
_TERM = re.compile(r'<[^>]*>|"(?:[^"\\]|\\.)*"(?:@[\w-]+|\^\^\S+)?|\S+')


def parse_sparql(text: str) -> ParsedQuery:
    """Read back the subset of SPARQL that :func:`emit_sparql` writes."""
    m = _HEADER.match(text)
    if not m:
        raise ContractViolation(f"unsupported query form: {text!r}")
    if m.group("ask"):
        qt, target = QueryType.JUDGE, None
    elif m.group("count"):
        qt, target = QueryType.COUNT, m.group("count")
    else:
        qt, target = QueryType.SELECT, m.group("sel")
    terms = _TERM.findall(m.group("body"))
    triples = []
    cur: list[str] = []
    for t in terms + ["."]:
        if t == ".":
            if cur:
                if len(cur) != 3:
                    raise ContractViolation(f"malformed triple {cur}")
                triples.append(tuple(cur))
            cur = []
        else:
            cur.append(t)
    return ParsedQuery(qt, target, tuple(triples))
