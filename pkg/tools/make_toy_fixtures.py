"""Regenerate the bundled golden question set and its score fixtures.

    python3 tools/make_toy_fixtures.py [--seed 7]

Writes toy_questions.jsonl, toy_scores.json and toy_ranker.json into
src/qgparse/data.  Gold answers and SPARQL come from executing the
hand-annotated graphs against toy_kb.tsv.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from qgparse.graph import Direction, DirectedPredicate, EdgeBinding, QueryGraph, QueryGraphStructure, QueryType
from qgparse.gsg.decode import MentionSpan, encode_gold, spans_to_nodes
from qgparse.gsg.numeric import NUM_LABELS
from qgparse.pipeline import DatasetRecord, ScoreFixture, answer_to_json
from qgparse.relation import ScoredSubgraph, sample_edge
from qgparse.sparql import TriggerLexicon, classify_query_type, emit_sparql
from qgparse.store import RDF_TYPE, execute, load_triples_file
from qgparse.text import tokenize

DATA = Path(__file__).resolve().parents[1] / "src" / "qgparse" / "data"

# mentions: key -> (surface text, class, uri).  For VT mentions `key` names the
# variable and `key:type` the type node; the rdf:type edge between them is implied.
# triples: (subject key, predicate, object key).
QUESTIONS = [
    ("q01", "The class of Swinhoe's Crake was named by which person?",
     {"class": ("class", "V", None), "crake": ("Swinhoe's Crake", "E", "dbr:Swinhoe's_Crake"),
      "person": ("person", "VT", "dbo:Person")},
     [("crake", "dbp:class", "class"), ("class", "dbp:named_by", "person")], "person"),
    ("q02", "Is New York a city?",
     {"ny": ("New York", "E", "dbr:New_York"), "city": ("city", "T", "dbo:City")},
     [("ny", RDF_TYPE, "city")], None),
    ("q03", "How many cities are in Ohio?",
     {"cities": ("cities", "VT", "dbo:City"), "ohio": ("Ohio", "E", "dbr:Ohio")},
     [("cities", "dbo:state", "ohio")], "cities"),
    ("q04", "Name the cities in Ohio.",
     {"cities": ("cities", "VT", "dbo:City"), "ohio": ("Ohio", "E", "dbr:Ohio")},
     [("cities", "dbo:state", "ohio")], "cities"),
    ("q05", "What is the capital of Illinois?",
     {"capital": ("capital", "V", None), "il": ("Illinois", "E", "dbr:Illinois")},
     [("il", "dbo:capital", "capital")], "capital"),
    ("q06", "Who are the members of The Beatles?",
     {"members": ("members", "V", None), "beatles": ("The Beatles", "E", "dbr:The_Beatles")},
     [("beatles", "dbo:bandMember", "members")], "members"),
    ("q07", "How many members does The Rolling Stones have?",
     {"members": ("members", "V", None), "stones": ("The Rolling Stones", "E", "dbr:The_Rolling_Stones")},
     [("stones", "dbo:bandMember", "members")], "members"),
    ("q08", "Where were the members of Pink Floyd born?",
     {"where": ("Where", "V", None), "members": ("members", "V", None),
      "floyd": ("Pink Floyd", "E", "dbr:Pink_Floyd")},
     [("members", "dbo:birthPlace", "where"), ("floyd", "dbo:bandMember", "members")], "where"),
    ("q09", "Which band is from liverpool?",
     {"band": ("band", "VT", "dbo:Band"), "lpool": ("liverpool", "E", "dbr:Liverpool")},
     [("band", "dbo:hometown", "lpool")], "band"),
    ("q10", "Who wrote Animal Farm?",
     {"who": ("Who", "V", None), "farm": ("Animal Farm", "E", "dbr:Animal_Farm")},
     [("farm", "dbo:author", "who")], "who"),
    ("q11", "Which books were written by George Orwell?",
     {"books": ("books", "VT", "dbo:Book"), "orwell": ("George Orwell", "E", "dbr:George_Orwell")},
     [("books", "dbo:author", "orwell")], "books"),
    ("q12", "How many books did George Orwell write?",
     {"books": ("books", "VT", "dbo:Book"), "orwell": ("George Orwell", "E", "dbr:George_Orwell")},
     [("books", "dbo:author", "orwell")], "books"),
    ("q13", "Who published Harry Potter?",
     {"who": ("Who", "V", None),
      "hp": ("Harry Potter", "E", "dbr:Harry_Potter_and_the_Philosopher's_Stone")},
     [("hp", "dbo:publisher", "who")], "who"),
    ("q14", "Which films directed by Christopher Nolan star Leonardo DiCaprio?",
     {"films": ("films", "VT", "dbo:Film"), "nolan": ("Christopher Nolan", "E", "dbr:Christopher_Nolan"),
      "leo": ("Leonardo DiCaprio", "E", "dbr:Leonardo_DiCaprio")},
     [("films", "dbo:director", "nolan"), ("films", "dbo:starring", "leo")], "films"),
    ("q15", "Did James Cameron direct Titanic?",
     {"cameron": ("James Cameron", "E", "dbr:James_Cameron"), "titanic": ("Titanic", "E", "dbr:Titanic")},
     [("titanic", "dbo:director", "cameron")], None),
    ("q16", "How many members of bands from London were born in Dartford?",
     {"members": ("members", "V", None), "bands": ("bands", "VT", "dbo:Band"),
      "london": ("London", "E", "dbr:London"), "dartford": ("Dartford", "E", "dbr:Dartford")},
     [("bands", "dbo:bandMember", "members"), ("bands", "dbo:hometown", "london"),
      ("members", "dbo:birthPlace", "dartford")], "members"),
    ("q17", "What is the mouth of the Ohio River?",
     {"mouth": ("mouth", "V", None), "river": ("Ohio River", "E", "dbr:Ohio_River")},
     [("river", "dbo:mouth", "mouth")], "mouth"),
    ("q18", "In which city is Ohio State University located?",
     {"city": ("city", "VT", "dbo:City"), "osu": ("Ohio State University", "E", "dbr:Ohio_State_University")},
     [("osu", "dbo:city", "city")], "city"),
    ("q19", "Which authors were born in Yate?",
     {"authors": ("authors", "VT", "dbo:Writer"), "yate": ("Yate", "E", "dbr:Yate")},
     [("authors", "dbo:birthPlace", "yate")], "authors"),
    ("q20", "Was Paul McCartney born in Liverpool?",
     {"paul": ("Paul McCartney", "E", "dbr:Paul_McCartney"), "lpool": ("Liverpool", "E", "dbr:Liverpool")},
     [("paul", "dbo:birthPlace", "lpool")], None),
]

GOLD_SCORE = 0.95
DEFAULT_SCORE = 0.1


def find_span(tokens, surface):
    want = [t.text for t in tokenize(surface)]
    for i in range(1, len(tokens) - len(want)):
        if tokens[i:i + len(want)] == want:
            return i, i + len(want)
    raise SystemExit(f"mention {surface!r} not found in {tokens}")


def build(qid, question, mentions, triples, target_key, store, lexicon):
    record = DatasetRecord.from_dict({"id": qid, "question": question})
    spans, span_of = [], {}
    for key, (surface, cls, _) in mentions.items():
        s, e = find_span(record.tokens, surface)
        spans.append(MentionSpan(s, e, cls))
        span_of[key] = (s, e)
    nodes = spans_to_nodes(spans, mention_text=record.mention)
    node_id = {}
    for key, (surface, cls, uri) in mentions.items():
        for nd in nodes:
            if nd.span != span_of[key]:
                continue
            if nd.is_variable:
                node_id[key] = nd.id
            else:
                node_id[key if cls != "VT" else key + ":type"] = nd.id
    uris = {}
    for key, (_, cls, uri) in mentions.items():
        if cls == "VT":
            uris[node_id[key + ":type"]] = uri
        elif cls != "V":
            uris[node_id[key]] = uri
    nodes = [nd.with_uri(uris.get(nd.id)) for nd in nodes]

    all_triples = list(triples) + [(k, RDF_TYPE, k + ":type") for k, m in mentions.items() if m[1] == "VT"]
    bindings = []
    for subj, pred, obj in all_triples:
        a, b = node_id[subj], node_id[obj]
        direction = Direction.FORWARD if a < b else Direction.REVERSE
        bindings.append(EdgeBinding((min(a, b), max(a, b)), DirectedPredicate(pred, direction), GOLD_SCORE))
    qtype = classify_query_type(question, lexicon)
    expected = QueryType.JUDGE if target_key is None else (
        QueryType.COUNT if question.lower().startswith("how many") else QueryType.SELECT)
    assert qtype is expected, (qid, qtype)
    target = None if target_key is None else node_id[target_key]
    structure = QueryGraphStructure.build(nodes, [b.edge for b in bindings], target, qtype)
    graph = QueryGraph(structure, extraction_order(structure, bindings))
    answer = execute(store, graph)
    assert answer, f"{qid}: gold graph has an empty or false answer"
    record.graph = graph
    record.sparql = emit_sparql(graph, store.prefixes)
    record.answer = answer
    return record


def extraction_order(structure, bindings):
    """Bindings in the order relation extraction visits the edges."""
    by_edge = {b.edge: b for b in bindings}
    g = ScoredSubgraph()
    pending = set(by_edge)
    while pending:
        e = sample_edge(pending, g, structure)
        b = by_edge[e]
        g = g.extend(e, b.predicate, b.score, 0)
        pending.discard(e)
    return g.bound


def score_fixture(record, rng) -> ScoreFixture:
    n = len(record.tokens)
    labels, gold = encode_gold(record.graph.structure, n)
    ne = rng.uniform(-1.0, 1.0, size=(n, NUM_LABELS))
    ne[np.arange(n), labels] = 4.0 + rng.uniform(0.0, 1.0, size=n)
    p1 = np.where(gold, rng.uniform(0.75, 0.97, size=(n, n)), rng.uniform(0.02, 0.25, size=(n, n)))
    p1 = np.round(p1, 6)
    return ScoreFixture(np.round(ne, 6), np.stack([np.round(1.0 - p1, 6), p1], axis=2))


def ranker_entries(record):
    s = record.graph.structure
    nodes = s.node_map
    out = []
    for b in record.graph.bindings:
        n1, n2 = b.edge
        out.append({"qid": record.id, "m1": nodes[n1].mention, "m2": nodes[n2].mention,
                    "predicate": b.predicate.predicate, "direction": b.predicate.direction.value,
                    "score": GOLD_SCORE})
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", type=Path, default=DATA)
    args = ap.parse_args(argv)
    store = load_triples_file(DATA / "toy_kb.tsv")
    lexicon = TriggerLexicon.default()
    rng = np.random.default_rng(args.seed)
    records = [build(*q, store, lexicon) for q in QUESTIONS]
    with open(args.out / "toy_questions.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    scores = {r.id: score_fixture(r, rng).to_dict() for r in records}
    with open(args.out / "toy_scores.json", "w", encoding="utf-8") as fh:
        json.dump(scores, fh, separators=(",", ":"))
    entries = [e for r in records for e in ranker_entries(r)]
    with open(args.out / "toy_ranker.json", "w", encoding="utf-8") as fh:
        json.dump({"default": DEFAULT_SCORE, "scores": entries}, fh, indent=1, ensure_ascii=False)
    for r in records:
        print(r.id, r.sparql, answer_to_json(r.answer))


if __name__ == "__main__":
    main()
