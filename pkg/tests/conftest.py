import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from qgparse.cli import TOY_FILES, bundled
from qgparse.graph import DirectedPredicate, Direction, Node, NodeTag, QueryGraphStructure, QueryType
from qgparse.linking import FixtureLookup, TypeDictionary
from qgparse.pipeline import FixtureScores, PipelineConfig, Providers, load_dataset, load_fixtures
from qgparse.relation import FixtureRanker
from qgparse.store import load_triples, load_triples_file


ACCEPTANCE: list[str] = []


class Criterion:
    def __init__(self):
        self.detail = ""
        self.t0 = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.t0


@contextmanager
def criterion(name: str):
    """Record one PASS/FAIL line; failures are whatever raises inside the block."""
    c = Criterion()
    ok = False
    try:
        yield c
        ok = True
    finally:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {c.detail} [{c.elapsed:.1f}s]"
        ACCEPTANCE.append(line)
        print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


def toy_path(key: str) -> Path:
    return bundled(TOY_FILES[key])


@pytest.fixture(scope="session")
def toy_store():
    return load_triples_file(toy_path("kb"))


@pytest.fixture(scope="session")
def toy_records():
    return load_dataset(toy_path("dataset"))


@pytest.fixture(scope="session")
def toy_fixtures():
    return load_fixtures(toy_path("fixtures"))


@pytest.fixture()
def toy_providers(toy_fixtures):
    return Providers(FixtureScores(toy_fixtures), FixtureRanker.from_file(toy_path("ranker_fixtures")),
                     FixtureLookup.from_file(toy_path("lookup")), TypeDictionary.from_file(toy_path("type_dict")))


@pytest.fixture()
def config():
    return PipelineConfig()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


FIG1_KB = """\
dbr:Swinhoe's_Crake\tdbp:class\tdbr:Bird
dbr:Bird\tdbp:named_by\tdbr:Carl_Linnaeus
dbr:Carl_Linnaeus\trdf:type\tdbo:Person
"""


@pytest.fixture()
def crake_store():
    return load_triples(FIG1_KB)


@pytest.fixture()
def crake_structure():
    """class(0) - Swinhoe's Crake(1); class(0) - person(2); person(2) - Person type(3)."""
    nodes = [
        Node(0, 2, 3, NodeTag.VARIABLE, None, "class"),
        Node(1, 4, 6, NodeTag.ENTITY, "dbr:Swinhoe's_Crake", "Swinhoe's Crake"),
        Node(2, 10, 11, NodeTag.VARIABLE, None, "person"),
        Node(3, 10, 11, NodeTag.TYPE, "dbo:Person", "person"),
    ]
    return QueryGraphStructure.build(nodes, [(0, 1), (0, 2), (2, 3)], 2, QueryType.SELECT)


def fwd(p):
    return DirectedPredicate(p, Direction.FORWARD)


def rev(p):
    return DirectedPredicate(p, Direction.REVERSE)
