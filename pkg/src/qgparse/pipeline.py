"""End-to-end orchestration, dataset and fixture ingestion, evaluation."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from .errors import ContractViolation, QGParseError, StageError
from .graph import QueryGraph, QueryGraphStructure
from .gsg.decode import decode_ne, decode_structure, spans_to_nodes
from .gsg.model import GSGModel
from .gsg.numeric import NUM_LABELS, GcScoreTable, NeLabelTable
from .linking import FixtureLookup, LookupClient, TypeDictionary, link_nodes
from .relation import BEAM_WIDTH, BINDING_CAP, Ranker, beam_search_re
from .sparql import TriggerLexicon, classify_query_type, emit_sparql
from .store import Answer, TripleStore, execute
from .text import CLS, SEP, HashFeatureProvider, tokenize

log = logging.getLogger(__name__)


# -- answers -------------------------------------------------------------------

def answer_to_json(a: Optional[Answer]):
    if a is None or isinstance(a, (bool, int)):
        return a
    return sorted(a)


def answer_from_json(v) -> Optional[Answer]:
    if v is None or isinstance(v, (bool, int)):
        return v
    if isinstance(v, list):
        return frozenset(str(x) for x in v)
    raise ContractViolation(f"unsupported answer value {v!r}")


def answer_set(a: Optional[Answer]) -> frozenset:
    """Answers as comparable sets; booleans and counts become tagged singletons."""
    if a is None:
        return frozenset()
    if isinstance(a, bool):
        return frozenset([("bool", a)])
    if isinstance(a, int):
        return frozenset([("count", a)])
    return frozenset(a)


# -- records and fixtures ---------------------------------------------------------

@dataclass
class DatasetRecord:
    id: str
    question: str
    tokens: list[str]
    sparql: Optional[str] = None
    graph: Optional[QueryGraph] = None  # gold annotation, spans on the token axis
    answer: Optional[Answer] = None

    def __post_init__(self):
        if not self.question.strip():
            raise ContractViolation(f"record {self.id}: empty question")
        if not self.tokens or self.tokens[0] != CLS:
            raise ContractViolation(f"record {self.id}: token list must start with {CLS}")
        if self.tokens[-1] != SEP:
            self.tokens = list(self.tokens) + [SEP]

    @classmethod
    def from_dict(cls, d: Mapping) -> "DatasetRecord":
        tokens = d.get("tokens")
        if tokens is None:
            tokens = [CLS] + [t.text for t in tokenize(d["question"])] + [SEP]
        graph = QueryGraph.from_dict(d["graph"]) if d.get("graph") else None
        return cls(str(d["id"]), d["question"], list(tokens), d.get("sparql"), graph,
                   answer_from_json(d.get("answer")))

    def to_dict(self) -> dict:
        out = {"id": self.id, "question": self.question, "tokens": self.tokens}
        if self.sparql is not None:
            out["sparql"] = self.sparql
        if self.graph is not None:
            out["graph"] = self.graph.to_dict()
        if self.answer is not None:
            out["answer"] = answer_to_json(self.answer)
        return out

    def mention(self, start: int, end: int) -> str:
        """Surface text of table tokens [start, end), original casing kept."""
        toks = tokenize(self.question)
        if [CLS] + [t.text for t in toks] + [SEP] == self.tokens and 1 <= start < end <= len(toks) + 1:
            return self.question[toks[start - 1].start:toks[end - 2].end]
        return " ".join(self.tokens[start:end])


def load_dataset(path) -> list[DatasetRecord]:
    """One JSON object per line; blank lines are skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(DatasetRecord.from_dict(json.loads(line)))
            except (KeyError, ValueError) as exc:
                raise ContractViolation(f"{path}:{no}: bad record: {exc}") from exc
    ids = [r.id for r in out]
    if len(set(ids)) != len(ids):
        raise ContractViolation(f"{path}: duplicate record ids")
    return out


@dataclass
class ScoreFixture:
    ne_logits: np.ndarray
    gc_table: np.ndarray
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        self.ne_logits = np.asarray(self.ne_logits, dtype=np.float64)
        self.gc_table = np.asarray(self.gc_table, dtype=np.float64)
        n = self.ne_logits.shape[0]
        if self.ne_logits.shape != (n, NUM_LABELS):
            raise ContractViolation(f"ne_logits must be n x {NUM_LABELS}")
        if self.gc_table.shape != (n, n, 2):
            raise ContractViolation(f"gc_table must be {n} x {n} x 2")
        GcScoreTable(self.gc_table)  # validates probability pairs
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
            if self.features.ndim != 2 or self.features.shape[0] != n:
                raise ContractViolation("features must have one row per token")

    @property
    def n(self) -> int:
        return self.ne_logits.shape[0]

    def to_dict(self, digits: int = 6) -> dict:
        out = {"ne_logits": np.round(self.ne_logits, digits).tolist(),
               "gc_table": np.round(self.gc_table, digits).tolist()}
        if self.features is not None:
            out["features"] = np.round(self.features, digits).tolist()
        return out


def load_fixtures(path) -> dict[str, ScoreFixture]:
    """JSON object keyed by question id: {"ne_logits", "gc_table"[, "features"]}."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return {str(k): ScoreFixture(v["ne_logits"], v["gc_table"], v.get("features"))
            for k, v in raw.items()}


# -- providers ----------------------------------------------------------------------

class ScoreProvider(Protocol):
    def scores(self, record: DatasetRecord) -> tuple[NeLabelTable, GcScoreTable]: ...


class FixtureScores:
    def __init__(self, fixtures: Mapping[str, ScoreFixture]):
        self.fixtures = dict(fixtures)

    def scores(self, record):
        fx = self.fixtures.get(record.id)
        if fx is None:
            raise ContractViolation(f"no score fixture for record {record.id}")
        if fx.n != len(record.tokens):
            raise ContractViolation(f"record {record.id} has {len(record.tokens)} tokens, fixture has {fx.n}")
        return NeLabelTable(fx.ne_logits), GcScoreTable(fx.gc_table)


class ModelScores:
    """Scores from a GSG checkpoint over deterministic hashed token features."""

    def __init__(self, model: GSGModel, features: Optional[HashFeatureProvider] = None):
        self.model = model
        self.features = features or HashFeatureProvider(model.config.h_rb)
        if self.features.width != model.config.h_rb:
            raise ContractViolation("feature width does not match the checkpoint")

    def scores(self, record):
        enc = self.features.encode(record.tokens)
        return self.model.predict(enc.features)


@dataclass
class Providers:
    scores: ScoreProvider
    ranker: Ranker
    lookup: LookupClient = field(default_factory=FixtureLookup)
    types: TypeDictionary = field(default_factory=TypeDictionary)
    lexicon: TriggerLexicon = field(default_factory=TriggerLexicon.default)


@dataclass(frozen=True)
class PipelineConfig:
    beam_width: int = BEAM_WIDTH
    threshold: float = 0.5
    binding_cap: int = BINDING_CAP
    seed: int = 0

    def __post_init__(self):
        if self.beam_width < 1 or self.binding_cap < 1:
            raise ContractViolation("beam width and binding cap must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ContractViolation("threshold must lie in (0, 1)")


# -- running -------------------------------------------------------------------------

@dataclass
class PipelineResult:
    id: str
    structure: Optional[QueryGraphStructure] = None
    graph: Optional[QueryGraph] = None
    sparql: Optional[str] = None
    answer: Optional[Answer] = None
    error: Optional[StageError] = None

    @property
    def answerable(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        out = {"id": self.id, "sparql": self.sparql, "answer": answer_to_json(self.answer)}
        if self.error is not None:
            out["unanswerable"] = {"stage": self.error.stage, "message": str(self.error)}
        if self.graph is not None:
            out["graph"] = self.graph.to_dict()
        elif self.structure is not None:
            out["structure"] = self.structure.to_dict()
        return out


def _ranker_for(ranker, record):
    bind = getattr(ranker, "for_question", None)
    return bind(record.id) if bind is not None else ranker


def run_pipeline(record: DatasetRecord, store: TripleStore, config: PipelineConfig,
                 providers: Providers) -> PipelineResult:
    """Parse, link, extract relations, compose SPARQL and execute one question.

    Library errors are caught and reported as a :class:`StageError` on the
    result naming the stage that failed.
    """
    res = PipelineResult(record.id)
    stage = "parse"
    try:
        ne, gc = providers.scores.scores(record)
        spans = decode_ne(ne.predictions())
        nodes = spans_to_nodes(spans, mention_text=record.mention)
        qtype = classify_query_type(record.question, providers.lexicon)
        res.structure = decode_structure(gc, nodes, qtype, config.threshold)

        stage = "link"
        res.structure = link_nodes(res.structure, store, providers.lookup, providers.types)

        stage = "re"
        beam = beam_search_re(record.question, res.structure, store,
                              _ranker_for(providers.ranker, record),
                              config.beam_width, config.binding_cap)
        if beam.best is None:
            raise StageError("re", "no predicate assignment completes the query graph")
        res.graph = beam.best

        stage = "exec"
        res.sparql = emit_sparql(res.graph, store.prefixes)
        res.answer = execute(store, res.graph)
    except StageError as exc:
        res.error = exc
    except QGParseError as exc:
        res.error = StageError(stage, str(exc), exc)
    if res.error is not None:
        log.info("question %s unanswerable: %s", record.id, res.error)
    return res


def run_many(records: Sequence[DatasetRecord], store: TripleStore, config: PipelineConfig,
             providers: Providers, workers: int = 1) -> list[PipelineResult]:
    """Run records independently; results keep input order."""
    if workers <= 1:
        return [run_pipeline(r, store, config, providers) for r in records]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: run_pipeline(r, store, config, providers), records))


# -- evaluation ------------------------------------------------------------------------

@dataclass
class Metrics:
    per_question: dict[str, tuple[float, float, float]]
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "per_question": {k: {"precision": p, "recall": r, "f1": f}
                                 for k, (p, r, f) in sorted(self.per_question.items())}}


def prf(pred: frozenset, gold: frozenset) -> tuple[float, float, float]:
    if not pred and not gold:
        return 1.0, 1.0, 1.0
    if not pred or not gold:
        return 0.0, 0.0, 0.0
    hit = len(pred & gold)
    p, r = hit / len(pred), hit / len(gold)
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f


def evaluate(predictions: Mapping[str, Optional[Answer]], gold: Mapping[str, Optional[Answer]]) -> Metrics:
    """Macro-averaged answer-level precision, recall and F1.

    Unanswerable predictions (None) count as empty answers.
    """
    if set(predictions) != set(gold):
        raise ContractViolation("prediction and gold id sets differ")
    per = {k: prf(answer_set(predictions[k]), answer_set(gold[k])) for k in sorted(gold)}
    if not per:
        return Metrics({}, 0.0, 0.0, 0.0)
    m = len(per)
    return Metrics(per,
                   sum(v[0] for v in per.values()) / m,
                   sum(v[1] for v in per.values()) / m,
                   sum(v[2] for v in per.values()) / m)
