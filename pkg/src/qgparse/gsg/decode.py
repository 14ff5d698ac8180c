"""Turn NE label sequences and GC tables into query graph structures.

Table coordinates: row/column 0 is the prefixed [CLS] token; the last
row/column is the suffixed [SEP] token.  Node spans index the same axis.
"""

from __future__ import annotations

from typing import NamedTuple, Optional, Sequence

import numpy as np

from ..errors import ContractViolation, DecodeError
from ..graph import Node, NodeTag, QueryGraphStructure, QueryType, make_edge
from .numeric import LABEL_INDEX, LABELS, NUM_LABELS, GcScoreTable

SPAN_CLASSES = ("V", "E", "T", "VT")
THRESHOLD = 0.5


class MentionSpan(NamedTuple):
    start: int
    end: int
    tag: str  # V, E, T or VT


def decode_ne(labels: Sequence[int]) -> list[MentionSpan]:
    """Maximal B/I runs of one class become spans.

    An I label that does not continue a run of its own class opens a new span
    as if it were B.
    """
    spans = []
    cur = None  # [start, end, cls]
    for i, lab in enumerate(labels):
        lab = int(lab)
        if not 0 <= lab < NUM_LABELS:
            raise ContractViolation(f"label index {lab} out of range")
        name = LABELS[lab]
        if name == "O":
            if cur:
                spans.append(MentionSpan(*cur))
            cur = None
            continue
        bio, cls = name.split("-", 1)
        if bio == "I" and cur is not None and cur[2] == cls:
            cur[1] = i + 1
            continue
        if cur:
            spans.append(MentionSpan(*cur))
        cur = [i, i + 1, cls]
    if cur:
        spans.append(MentionSpan(*cur))
    return spans


_TAGS_FOR = {
    "V": (NodeTag.VARIABLE,),
    "E": (NodeTag.ENTITY,),
    "T": (NodeTag.TYPE,),
    "VT": (NodeTag.VARIABLE, NodeTag.TYPE),
}


def spans_to_nodes(spans: Sequence[MentionSpan], tokens: Optional[Sequence[str]] = None,
                   mention_text=None) -> list[Node]:
    """Create nodes with ids in (span, tag) order.

    `mention_text(start, end)` renders a mention; by default tokens are
    joined with spaces.
    """
    if mention_text is None:
        if tokens is None:
            mention_text = lambda s, e: ""  # noqa: E731
        else:
            mention_text = lambda s, e: " ".join(tokens[s:e])  # noqa: E731
    raw = []
    for sp in spans:
        for tag in _TAGS_FOR[sp.tag]:
            raw.append((sp.start, sp.end, tag))
    raw.sort(key=lambda r: (r[0], r[1], r[2].order))
    return [Node(i, s, e, tag, None, mention_text(s, e)) for i, (s, e, tag) in enumerate(raw)]


def edge_probability(t: GcScoreTable, a: tuple[int, int], b: tuple[int, int]) -> float:
    """Mean of the symmetrized edge probability over the a x b rectangle."""
    p = t.edge
    block = p[a[0]:a[1], b[0]:b[1]]
    block_t = p[b[0]:b[1], a[0]:a[1]].T
    if block.size == 0:
        raise ContractViolation(f"empty rectangle for spans {a} and {b}")
    return float(np.mean((block + block_t) / 2.0))


def vt_pairs(nodes: Sequence[Node]) -> dict[int, int]:
    """Map the Type node of every VT mention to its Variable partner."""
    var_by_span = {n.span: n.id for n in nodes if n.tag is NodeTag.VARIABLE}
    return {n.id: var_by_span[n.span] for n in nodes
            if n.tag is NodeTag.TYPE and n.span in var_by_span}


def decode_structure(t: GcScoreTable, nodes: Sequence[Node], query_type: QueryType,
                     threshold: float = THRESHOLD) -> QueryGraphStructure:
    """Connect node pairs whose rectangle probability exceeds `threshold`.

    The Type node of a VT mention is tied to its Variable partner and takes
    part in no other edge; rectangle edges of the shared span go to the
    Variable.  For SELECT/COUNT the target is the node with the highest
    [CLS] pair probability (lowest id on ties).
    """
    nodes = sorted(nodes, key=lambda n: n.id)
    n = t.n
    for nd in nodes:
        if nd.start < 1 or nd.end > n - 1:
            raise ContractViolation(f"node {nd.id} span {nd.span} overlaps [CLS]/[SEP] or exceeds the table")
    tied = vt_pairs(nodes)
    edges = [make_edge(ty, var) for ty, var in tied.items()]
    free = [nd for nd in nodes if nd.id not in tied]
    for i, a in enumerate(free):
        for b in free[i + 1:]:
            if a.span == b.span:
                continue
            if edge_probability(t, a.span, b.span) > threshold:
                edges.append(make_edge(a.id, b.id))
    target = None
    if query_type is not QueryType.JUDGE:
        if not nodes:
            raise DecodeError(f"{query_type.value} question produced no nodes")
        cls_span = (0, 1)
        best = max(nodes, key=lambda nd: (edge_probability(t, cls_span, nd.span), -nd.id))
        target = best.id
    return QueryGraphStructure.build(nodes, edges, target, query_type)


# -- gold tables -----------------------------------------------------------------

def encode_gold(structure: QueryGraphStructure, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gold NE labels and gold GC table for a structure over an n-token table.

    Each connected node pair fills its rectangle (both orientations) with 1;
    [CLS] is connected to the target, or to [SEP] for JUDGE questions.
    """
    labels = np.zeros(n, dtype=np.int64)
    tags_by_span: dict[tuple[int, int], set] = {}
    for nd in structure.nodes:
        if nd.start < 1 or nd.end > n - 1:
            raise ContractViolation(f"node span {nd.span} does not fit a {n}-token table")
        tags_by_span.setdefault(nd.span, set()).add(nd.tag)
    for (s, e), tags in tags_by_span.items():
        if tags == {NodeTag.VARIABLE, NodeTag.TYPE}:
            cls = "VT"
        elif len(tags) == 1:
            cls = {NodeTag.VARIABLE: "V", NodeTag.ENTITY: "E", NodeTag.TYPE: "T"}[next(iter(tags))]
        else:
            raise ContractViolation(f"span {(s, e)} carries tags {sorted(t.value for t in tags)}")
        if np.any(labels[s:e] != 0):
            raise ContractViolation(f"span {(s, e)} overlaps another mention")
        labels[s] = LABEL_INDEX[f"B-{cls}"]
        labels[s + 1:e] = LABEL_INDEX[f"I-{cls}"]

    gold = np.zeros((n, n), dtype=bool)
    nodes = structure.node_map

    def fill(a, b):
        gold[a[0]:a[1], b[0]:b[1]] = True
        gold[b[0]:b[1], a[0]:a[1]] = True

    for x, y in structure.edges:
        fill(nodes[x].span, nodes[y].span)
    if structure.query_type is QueryType.JUDGE:
        fill((0, 1), (n - 1, n))
    elif structure.target is not None:
        fill((0, 1), nodes[structure.target].span)
    return labels, gold


def gold_probability_table(gold: np.ndarray) -> GcScoreTable:
    p1 = gold.astype(np.float64)
    return GcScoreTable(np.stack([1.0 - p1, p1], axis=2), gold)
