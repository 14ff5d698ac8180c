"""Two-stage query-graph semantic parser for knowledge-base question answering."""

from .errors import (ContractViolation, DecodeError, DisconnectedStructureError, LinkingError,
                     OracleGuardError, QGParseError, StageError, TripleParseError)
from .graph import (DirectedPredicate, Direction, EdgeBinding, Node, NodeTag, QueryGraph,
                    QueryGraphStructure, QueryType)
from .store import Triple, TripleStore, execute, load_triples, load_triples_file, match_pattern

__all__ = [
    "ContractViolation", "DecodeError", "DirectedPredicate", "Direction", "DisconnectedStructureError",
    "EdgeBinding", "LinkingError", "Node", "NodeTag", "OracleGuardError", "QGParseError",
    "QueryGraph", "QueryGraphStructure", "QueryType", "StageError", "Triple", "TripleParseError",
    "TripleStore", "execute", "load_triples", "load_triples_file", "match_pattern",
]
