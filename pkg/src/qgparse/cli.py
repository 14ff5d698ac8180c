"""Command line interface.

Exit codes: 0 success, 2 bad input or contract violation, 3 when at least
one question came back unanswerable (outputs are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from .errors import QGParseError
from .gsg.decode import encode_gold
from .gsg.model import GSGConfig, GSGModel, TrainingExample, train
from .linking import FixtureLookup, HttpLookup, TypeDictionary
from .pipeline import (DatasetRecord, FixtureScores, ModelScores, PipelineConfig, Providers,
                       answer_from_json, answer_to_json, evaluate, load_dataset, load_fixtures, run_many)
from .relation import FixtureRanker, ReferenceRanker
from .sparql import TriggerLexicon, load_prefix_map
from .store import load_triples_file
from .synthetic import oracle_trials, scaling_rows
from .text import HashFeatureProvider

EXIT_OK, EXIT_INPUT, EXIT_UNANSWERABLE = 0, 2, 3

TOY_FILES = {"kb": "toy_kb.tsv", "dataset": "toy_questions.jsonl", "fixtures": "toy_scores.json",
             "lookup": "toy_lookup.json", "type_dict": "toy_types.tsv",
             "ranker_fixtures": "toy_ranker.json"}


def bundled(name: str) -> Path:
    return Path(str(resources.files("qgparse.data").joinpath(name)))


# -- argument parsing ---------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("inputs")
    g.add_argument("--kb", type=Path, help="triple file (.tsv or .nt)")
    g.add_argument("--dataset", type=Path, help="JSONL question records")
    g.add_argument("--fixtures", type=Path, help="score fixtures keyed by question id")
    g.add_argument("--checkpoint", type=Path, help="GSG checkpoint (.npz) used when no fixtures are given")
    g.add_argument("--lookup", type=Path, help="offline entity lookup table (JSON)")
    g.add_argument("--lookup-url", help="entity lookup service endpoint (replaces --lookup)")
    g.add_argument("--type-dict", type=Path, help="mention<TAB>type URI dictionary")
    g.add_argument("--ranker-fixtures", type=Path, help="predicate scores for --scorer fixture")
    g.add_argument("--lexicon", type=Path, help="trigger lexicon replacing the default one")
    g.add_argument("--prefixes", type=Path, help="prefix<TAB>expansion map")
    g.add_argument("--toy", action="store_true", help="fill every unset input with the bundled toy data")
    c = p.add_argument_group("configuration")
    c.add_argument("--beam-width", type=int, default=4)
    c.add_argument("--threshold", type=float, default=0.5)
    c.add_argument("--binding-cap", type=int, default=64)
    c.add_argument("--scorer", choices=("reference", "fixture"), default="reference")
    c.add_argument("--seed", type=int, default=0, help="also seeds the hashed token features")
    c.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.add_argument("--output", type=Path, help="write results here instead of stdout")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qgparse", description="Query-graph KBQA parser")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="question -> structure + SPARQL")
    _common(p)
    p.add_argument("--question", help="parse this question (needs --checkpoint)")
    p.add_argument("--id", action="append", help="only these dataset records")

    p = sub.add_parser("answer", help="dataset + KB -> answers")
    _common(p)
    p.add_argument("--id", action="append", help="only these dataset records")

    p = sub.add_parser("eval", help="answers + gold -> metrics")
    _common(p)
    p.add_argument("--answers", type=Path, help="answers written by `answer --format structured`; "
                                                "omitted: run the pipeline first")

    p = sub.add_parser("oracle-check", help="beam search vs brute-force report")
    _common(p)
    p.add_argument("--trials", type=int, default=200)

    p = sub.add_parser("bench-re", help="beam vs baseline candidate counts")
    _common(p)
    p.add_argument("--n", type=int, nargs="+", default=[10, 30, 50])
    p.add_argument("--k", type=int, nargs="+", default=[1, 2, 3])

    p = sub.add_parser("train", help="fit a GSG checkpoint on the dataset's gold graphs")
    _common(p)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, help="default: 0.01 for adamw, 0.5 for gd")
    p.add_argument("--method", choices=("adamw", "gd"), default="adamw")
    p.add_argument("--h-rb", type=int, default=1024)
    p.add_argument("--h-bi", type=int, default=256)
    p.add_argument("--h-le", type=int, default=256)
    p.add_argument("--save", type=Path, required=True)
    return ap


# -- helpers ----------------------------------------------------------------------------

def _apply_toy(args):
    if not args.toy:
        return
    for attr, name in TOY_FILES.items():
        if attr == "fixtures" and args.checkpoint is not None:
            continue
        if getattr(args, attr, None) is None:
            setattr(args, attr, bundled(name))


def _need(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise QGParseError(f"missing required option(s): {', '.join(missing)}")


def _store(args):
    prefixes = load_prefix_map(args.prefixes) if args.prefixes else None
    return load_triples_file(args.kb, prefixes=prefixes)


def _providers(args) -> Providers:
    if args.fixtures is not None:
        scores = FixtureScores(load_fixtures(args.fixtures))
    elif args.checkpoint is not None:
        model = GSGModel.load(args.checkpoint)
        scores = ModelScores(model, HashFeatureProvider(model.config.h_rb, args.seed))
    else:
        raise QGParseError("either --fixtures or --checkpoint is required")
    if args.scorer == "fixture":
        _need(args, "ranker_fixtures")
        ranker = FixtureRanker.from_file(args.ranker_fixtures)
    else:
        ranker = ReferenceRanker()
    if args.lookup_url:
        lookup = HttpLookup(args.lookup_url)
    elif args.lookup is not None:
        lookup = FixtureLookup.from_file(args.lookup)
    else:
        lookup = FixtureLookup()
    types = TypeDictionary.from_file(args.type_dict) if args.type_dict else TypeDictionary()
    lexicon = TriggerLexicon.from_file(args.lexicon) if args.lexicon else TriggerLexicon.default()
    return Providers(scores, ranker, lookup, types, lexicon)


def _config(args) -> PipelineConfig:
    return PipelineConfig(args.beam_width, args.threshold, args.binding_cap, args.seed)


def _records(args):
    if getattr(args, "question", None):
        if args.checkpoint is None:
            raise QGParseError("--question needs --checkpoint (fixtures are keyed by dataset id)")
        args.fixtures = None
        return [DatasetRecord.from_dict({"id": "question", "question": args.question})]
    _need(args, "dataset")
    records = load_dataset(args.dataset)
    wanted = getattr(args, "id", None)
    if wanted:
        known = {r.id for r in records}
        unknown = sorted(set(wanted) - known)
        if unknown:
            raise QGParseError(f"unknown record id(s): {', '.join(unknown)}")
        records = [r for r in records if r.id in set(wanted)]
    return records


def _run(args):
    _need(args, "kb")
    records = _records(args)
    results = run_many(records, _store(args), _config(args), _providers(args), args.workers)
    return records, results


class _Out:
    def __init__(self, path):
        self.fh = open(path, "w", encoding="utf-8") if path else sys.stdout

    def line(self, text=""):
        self.fh.write(text + "\n")

    def json(self, obj):
        self.line(json.dumps(obj, ensure_ascii=False, sort_keys=True))

    def close(self):
        if self.fh is not sys.stdout:
            self.fh.close()


# -- commands -----------------------------------------------------------------------------

def cmd_parse(args, out) -> int:
    _, results = _run(args)
    for r in results:
        if args.format == "structured":
            d = {"id": r.id, "sparql": r.sparql,
                 "structure": r.structure.to_dict() if r.structure else None}
            if r.error:
                d["unanswerable"] = {"stage": r.error.stage, "message": str(r.error)}
            out.json(d)
            continue
        out.line(f"[{r.id}]")
        if r.structure is not None:
            s = r.structure
            out.line(f"  type: {s.query_type.value}  target: {s.target}")
            for nd in s.nodes:
                uri = f" -> {nd.uri}" if nd.uri else ""
                out.line(f"  node {nd.id}: {nd.tag.value:<8} {nd.mention!r}{uri}")
            out.line(f"  edges: {', '.join(f'({a},{b})' for a, b in s.edges) or '-'}")
        out.line(f"  sparql: {r.sparql}" if r.sparql else f"  unanswerable: {r.error}")
    return EXIT_UNANSWERABLE if any(r.error for r in results) else EXIT_OK


def cmd_answer(args, out) -> int:
    _, results = _run(args)
    for r in results:
        if args.format == "structured":
            out.json(r.to_dict())
        elif r.error:
            out.line(f"{r.id}\tUNANSWERABLE({r.error.stage})\t{r.error}")
        else:
            out.line(f"{r.id}\t{json.dumps(answer_to_json(r.answer), ensure_ascii=False)}\t{r.sparql}")
    return EXIT_UNANSWERABLE if any(r.error for r in results) else EXIT_OK


def cmd_eval(args, out) -> int:
    _need(args, "dataset")
    gold_records = load_dataset(args.dataset)
    gold = {r.id: r.answer for r in gold_records}
    failed = False
    if args.answers is not None:
        preds = {}
        with open(args.answers, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    preds[str(d["id"])] = answer_from_json(d.get("answer"))
                    failed |= "unanswerable" in d
    else:
        _, results = _run(args)
        preds = {r.id: r.answer for r in results}
        failed = any(r.error for r in results)
    m = evaluate(preds, gold)
    if args.format == "structured":
        out.json(m.to_dict())
    else:
        for qid, (p, r, f) in sorted(m.per_question.items()):
            out.line(f"{qid}\tP={p:.4f}\tR={r:.4f}\tF1={f:.4f}")
        out.line(f"macro\tP={m.precision:.4f}\tR={m.recall:.4f}\tF1={m.f1:.4f}")
    return EXIT_UNANSWERABLE if failed else EXIT_OK


def cmd_oracle_check(args, out) -> int:
    rep = oracle_trials(args.trials, args.seed, args.beam_width, args.binding_cap)
    if args.format == "structured":
        out.json(rep.to_dict())
    else:
        out.line(f"trials {rep.trials} (answerable {rep.answerable})")
        out.line(f"saturating beam == oracle: {rep.exact}/{rep.trials}")
        out.line(f"oracle in width-{args.beam_width} beam: {rep.contained}/{rep.trials} "
                 f"({rep.containment_rate:.3f})")
    return EXIT_OK


def cmd_bench_re(args, out) -> int:
    rows = scaling_rows(args.n, args.k, args.beam_width, args.binding_cap)
    if args.format == "structured":
        for row in rows:
            out.json(row.to_dict())
        return EXIT_OK
    out.line("n\tk\tbaseline(k-th edge)\tbaseline(total)\tbeam(max step)\tbeam(total)")
    for r in rows:
        out.line(f"{r.n}\t{r.k}\t{r.baseline_count}\t{r.baseline_total}\t{r.beam_max_step}\t{r.beam_total}")
    return EXIT_OK


def cmd_train(args, out) -> int:
    _need(args, "dataset")
    records = [r for r in load_dataset(args.dataset) if r.graph is not None]
    if not records:
        raise QGParseError("dataset has no annotated graphs to train on")
    config = GSGConfig(h_rb=args.h_rb, h_bi=args.h_bi, h_le=args.h_le)
    feats = HashFeatureProvider(config.h_rb, args.seed)
    examples = []
    for r in records:
        labels, gold = encode_gold(r.graph.structure, len(r.tokens))
        examples.append(TrainingExample(feats.encode(r.tokens).features, labels, gold))
    model = GSGModel.init(config, args.seed)
    history = train(model, examples, args.steps, args.method, args.lr, args.seed)
    model.save(args.save)
    if args.format == "structured":
        out.json({"initial_loss": history[0], "final_loss": history[-1], "steps": args.steps,
                  "checkpoint": str(args.save)})
    else:
        out.line(f"loss {history[0]:.6f} -> {history[-1]:.6f} after {args.steps} steps; saved {args.save}")
    return EXIT_OK


COMMANDS = {"parse": cmd_parse, "answer": cmd_answer, "eval": cmd_eval,
            "oracle-check": cmd_oracle_check, "bench-re": cmd_bench_re, "train": cmd_train}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _apply_toy(args)
    out = None
    try:
        out = _Out(args.output)
        return COMMANDS[args.command](args, out)
    except (QGParseError, OSError, ValueError, KeyError) as exc:
        print(f"qgparse: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        if out is not None:
            out.close()


if __name__ == "__main__":
    sys.exit(main())
