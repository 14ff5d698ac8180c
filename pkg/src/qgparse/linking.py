"""Entity and type linking for non-variable nodes."""

from __future__ import annotations

import json
import logging
import threading
import urllib.error
import urllib.parse
import urllib.request
from typing import Callable, Iterable, Mapping, NamedTuple, Optional, Protocol

from .errors import LinkingError
from .graph import NodeTag, QueryGraphStructure, validate_structure
from .store import TripleStore

log = logging.getLogger(__name__)

ENTITY_PREFIX = "dbr:"
TYPE_PREFIX = "dbo:"


class Candidate(NamedTuple):
    uri: str
    name: str
    score: float


def _ranked(cands: Iterable[Candidate]) -> list[Candidate]:
    return sorted(cands, key=lambda c: (-c.score, c.uri))


class LookupClient(Protocol):
    def query(self, mention: str) -> list[Candidate]: ...


class FixtureLookup:
    """Offline lookup backed by a mention -> candidates table.

    File format (JSON)::

        {"new york": [{"uri": "dbr:New_York", "name": "New York", "score": 0.9}, ...]}

    Mentions are matched exactly first, then case-insensitively.
    """

    def __init__(self, table: Mapping[str, Iterable] = ()):
        self._table = {}
        for mention, cands in dict(table).items():
            self._table[mention] = _ranked(
                Candidate(c["uri"], c.get("name", ""), float(c.get("score", 0.0)))
                if isinstance(c, Mapping) else Candidate(*c) for c in cands)
        self._lower = {}
        for mention in sorted(self._table):
            self._lower.setdefault(mention.lower(), self._table[mention])

    @classmethod
    def from_file(cls, path) -> "FixtureLookup":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def query(self, mention: str) -> list[Candidate]:
        hit = self._table.get(mention)
        if hit is None:
            hit = self._lower.get(mention.lower(), [])
        return list(hit)


class HttpLookup:
    """Remote lookup service: ``GET <endpoint>?<param>=<mention>``.

    Accepts either a JSON list of ``{"uri", "name", "score"}`` objects or a
    DBpedia-Lookup style ``{"docs": [{"resource": [..], "label": [..],
    "score": [..]}]}`` body.  Transport or decoding failures are retried once
    and then raised as :class:`LinkingError`; there is no fallback.
    """

    def __init__(self, endpoint: str, param: str = "query", timeout: float = 5.0,
                 attempts: int = 2, opener: Optional[Callable] = None):
        self.endpoint = endpoint
        self.param = param
        self.timeout = timeout
        self.attempts = attempts
        self._open = opener or urllib.request.urlopen
        self._lock = threading.Lock()

    def query(self, mention: str) -> list[Candidate]:
        sep = "&" if "?" in self.endpoint else "?"
        url = f"{self.endpoint}{sep}{urllib.parse.urlencode({self.param: mention})}"
        last = None
        with self._lock:
            for attempt in range(self.attempts):
                try:
                    with self._open(url, timeout=self.timeout) as resp:
                        body = json.loads(resp.read().decode("utf-8"))
                    return _ranked(_parse_lookup(body))
                except (OSError, urllib.error.URLError, ValueError, KeyError, TypeError) as exc:
                    last = exc
                    log.warning("lookup attempt %d for %r failed: %s", attempt + 1, mention, exc)
        raise LinkingError(f"lookup service failed for {mention!r}: {last}")


def _first(v):
    return v[0] if isinstance(v, list) else v


def _parse_lookup(body) -> list[Candidate]:
    if isinstance(body, Mapping) and "docs" in body:
        return [Candidate(_first(d["resource"]), str(_first(d.get("label", "")) or ""),
                          float(_first(d.get("score", 0.0)) or 0.0)) for d in body["docs"]]
    return [Candidate(d["uri"], d.get("name", ""), float(d.get("score", 0.0))) for d in body]


class TypeDictionary:
    """Mention -> type URI pairs collected from training data (case-insensitive)."""

    def __init__(self, pairs: Iterable[tuple[str, str]] = ()):
        self._map: dict[str, str] = {}
        for mention, uri in pairs:
            self._map.setdefault(mention.strip().lower(), uri)

    @classmethod
    def from_file(cls, path) -> "TypeDictionary":
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                mention, uri = line.split("\t")
                pairs.append((mention, uri.strip()))
        return cls(pairs)

    def get(self, mention: str) -> Optional[str]:
        return self._map.get(mention.strip().lower())

    def __len__(self):
        return len(self._map)


def entity_name_uri(mention: str, prefix: str = ENTITY_PREFIX) -> str:
    return prefix + "_".join(mention.split())


def link_entity(mention: str, store: TripleStore, client: LookupClient,
                prefix: str = ENTITY_PREFIX) -> Optional[str]:
    """Exact-name KB entity, else the best lookup candidate.

    Lookup candidates whose lower-cased name equals the lower-cased mention
    are preferred over higher-scored ones.
    """
    exact = entity_name_uri(mention, prefix)
    if exact in store:
        return exact
    cands = _ranked(client.query(mention))
    if not cands:
        return None
    low = mention.strip().lower()
    preferred = [c for c in cands if c.name.strip().lower() == low]
    return (preferred or cands)[0].uri


def singularize(word: str) -> str:
    """Replaceable heuristic: -ies -> -y, -ses -> -s, else drop one trailing s (not -ss)."""
    w = word
    if w.endswith("ies") and len(w) > 3:
        return w[:-3] + "y"
    if w.endswith("ses"):
        return w[:-2]
    if w.endswith("s") and not w.endswith("ss") and len(w) > 1:
        return w[:-1]
    return w


def type_uri_for(mention: str, prefix: str = TYPE_PREFIX) -> str:
    words = singularize(mention.strip()).split()
    return prefix + "".join(w[:1].upper() + w[1:] for w in words)


def link_type(mention: str, dictionary: TypeDictionary, store: TripleStore,
              prefix: str = TYPE_PREFIX) -> Optional[str]:
    hit = dictionary.get(mention)
    if hit is not None:
        return hit
    uri = type_uri_for(mention, prefix)
    return uri if uri in store else None


def link_nodes(s: QueryGraphStructure, store: TripleStore, client: LookupClient,
               dictionary: TypeDictionary) -> QueryGraphStructure:
    """Link every Entity/Type node; drop the ones with no KB entry.

    Dropped nodes take their incident edges with them.  Dropping the target
    raises :class:`LinkingError`.
    """
    kept = []
    dropped = set()
    for node in s.nodes:
        if node.tag is NodeTag.VARIABLE or node.uri is not None:
            kept.append(node)
            continue
        if node.tag is NodeTag.ENTITY:
            uri = link_entity(node.mention, store, client)
        else:
            uri = link_type(node.mention, dictionary, store)
        if uri is None:
            log.info("discarding unlinkable %s node %r", node.tag.value, node.mention)
            dropped.add(node.id)
        else:
            kept.append(node.with_uri(uri))
    if s.target is not None and s.target in dropped:
        raise LinkingError(f"target node {s.target} could not be linked")
    edges = [e for e in s.edges if not (set(e) & dropped)]
    out = QueryGraphStructure.build(kept, edges, s.target, s.query_type)
    problems = validate_structure(out)
    if problems:
        raise LinkingError(f"linked structure is invalid: {problems}")
    return out
