import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from urllib.parse import parse_qs, urlparse

import pytest

from qgparse.errors import LinkingError
from qgparse.graph import Node, NodeTag, QueryGraphStructure, QueryType
from qgparse.linking import (Candidate, FixtureLookup, HttpLookup, TypeDictionary, link_entity, link_nodes,
                             link_type, singularize, type_uri_for)
from qgparse.store import load_triples

STORE = load_triples("dbr:New_York\trdf:type\tdbo:City\n"
                     "dbr:The_Beatles\trdf:type\tdbo:Band\n"
                     "dbr:George_Orwell\trdf:type\tdbo:Writer\n")


class ListLookup:
    def __init__(self, cands):
        self.cands = cands
        self.calls = []

    def query(self, mention):
        self.calls.append(mention)
        return list(self.cands)


# -- entities -------------------------------------------------------------------

def test_exact_name_wins_without_lookup():
    client = ListLookup([Candidate("dbr:Other", "New York", 1.0)])
    assert link_entity("New York", STORE, client) == "dbr:New_York"
    assert client.calls == []


def test_no_candidates_means_unlinked():
    assert link_entity("Atlantis", STORE, ListLookup([])) is None


def test_lowercase_name_match_beats_higher_score():
    client = ListLookup([Candidate("ex:A", "new york", 0.4), Candidate("ex:B", "York", 0.9)])
    assert link_entity("new york", load_triples(""), client) == "ex:A"


def test_highest_score_when_nothing_is_prioritised():
    client = ListLookup([Candidate("ex:A", "Alpha", 0.4), Candidate("ex:B", "Beta", 0.9)])
    assert link_entity("gamma", STORE, client) == "ex:B"


def test_fixture_lookup_falls_back_to_case_insensitive():
    lookup = FixtureLookup({"Liverpool": [{"uri": "dbr:Liverpool", "name": "Liverpool", "score": 0.7}]})
    assert [c.uri for c in lookup.query("liverpool")] == ["dbr:Liverpool"]
    assert lookup.query("Leeds") == []


# -- types ----------------------------------------------------------------------

@pytest.mark.parametrize("word,expected", [
    ("bands", "band"), ("cities", "city"), ("buses", "bus"), ("class", "class"),
    ("person", "person"), ("s", "s"),
])
def test_singularize(word, expected):
    assert singularize(word) == expected


def test_type_uri_is_capitalised_per_word():
    assert type_uri_for("bands") == "dbo:Band"
    assert type_uri_for("music genres") == "dbo:MusicGenre"


def test_type_from_store():
    assert link_type("bands", TypeDictionary(), STORE) == "dbo:Band"


def test_type_from_dictionary_first():
    d = TypeDictionary([("authors", "dbo:Writer")])
    assert link_type("Authors", d, STORE) == "dbo:Writer"


def test_unknown_type():
    assert link_type("xyzzies", TypeDictionary(), STORE) is None


# -- nodes ----------------------------------------------------------------------

def _crake_unlinked(crake_structure):
    nodes = [n.with_uri(None) for n in crake_structure.nodes]
    return QueryGraphStructure.build(nodes, crake_structure.edges, crake_structure.target,
                                     crake_structure.query_type)


def test_crake_structure_links_fully(crake_structure, crake_store):
    linked = link_nodes(_crake_unlinked(crake_structure), crake_store, FixtureLookup(), TypeDictionary())
    assert linked == crake_structure


def test_unlinkable_type_node_is_dropped_with_its_edges(crake_structure, crake_store):
    s = _crake_unlinked(crake_structure)
    nodes = [n if n.id != 3 else Node(3, 10, 11, NodeTag.TYPE, None, "xyzzy") for n in s.nodes]
    s = QueryGraphStructure.build(nodes, s.edges, s.target, s.query_type)
    linked = link_nodes(s, crake_store, FixtureLookup(), TypeDictionary())
    assert [n.id for n in linked.nodes] == [0, 1, 2]
    assert linked.edges == ((0, 1), (0, 2))


def test_all_variable_structure_is_unchanged():
    s = QueryGraphStructure.build([Node(0, 1, 2, NodeTag.VARIABLE, None, "a"),
                                   Node(1, 3, 4, NodeTag.VARIABLE, None, "b")],
                                  [(0, 1)], 1, QueryType.SELECT)
    assert link_nodes(s, STORE, FixtureLookup(), TypeDictionary()) == s


def test_unlinkable_target_is_an_error():
    s = QueryGraphStructure.build([Node(0, 1, 2, NodeTag.ENTITY, None, "Atlantis")], [], 0, QueryType.SELECT)
    with pytest.raises(LinkingError):
        link_nodes(s, STORE, FixtureLookup(), TypeDictionary())


# -- remote lookup ------------------------------------------------------------------

class _Handler(BaseHTTPRequestHandler):
    def do_GET(self):
        q = parse_qs(urlparse(self.path).query).get("query", [""])[0]
        self.server.seen.append(q)
        if self.server.mode == "fail":
            self.send_response(500)
            self.end_headers()
            return
        if self.server.mode == "docs":
            body = {"docs": [{"resource": ["dbr:B"], "label": ["York"], "score": ["0.9"]},
                             {"resource": ["dbr:A"], "label": ["new york"], "score": ["0.4"]}]}
        else:
            body = [{"uri": "dbr:B", "name": "York", "score": 0.9},
                    {"uri": "dbr:A", "name": "new york", "score": 0.4}]
        data = json.dumps(body).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def lookup_server():
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    srv.seen = []
    srv.mode = "list"
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield srv
    srv.shutdown()
    srv.server_close()


@pytest.mark.parametrize("mode", ["list", "docs"])
def test_http_lookup_formats(lookup_server, mode):
    lookup_server.mode = mode
    client = HttpLookup(f"http://127.0.0.1:{lookup_server.server_port}/api/search")
    cands = client.query("new york")
    assert [c.uri for c in cands] == ["dbr:B", "dbr:A"]
    assert lookup_server.seen == ["new york"]
    assert link_entity("new york", load_triples(""), client) == "dbr:A"


def test_http_lookup_failure_is_retried_then_raised(lookup_server):
    lookup_server.mode = "fail"
    client = HttpLookup(f"http://127.0.0.1:{lookup_server.server_port}/", attempts=2, timeout=2)
    with pytest.raises(LinkingError):
        client.query("x")
    assert lookup_server.seen == ["x", "x"]
