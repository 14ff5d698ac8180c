"""Exception hierarchy shared by all stages."""


class QGParseError(Exception):
    pass


class ContractViolation(QGParseError, ValueError):
    """A precondition of an operation was not met by its caller."""


class TripleParseError(QGParseError):
    def __init__(self, line_no, line, reason):
        super().__init__(f"line {line_no}: {reason}: {line!r}")
        self.line_no = line_no
        self.line = line
        self.reason = reason


class DecodeError(QGParseError):
    pass


class LinkingError(QGParseError):
    """Lookup transport failed, or linking removed a node the query needs."""


class DisconnectedStructureError(QGParseError):
    pass


class OracleGuardError(QGParseError):
    pass


class StageError(QGParseError):
    """Failure of one pipeline stage; `stage` is one of parse, link, re, exec."""

    STAGES = ("parse", "link", "re", "exec")

    def __init__(self, stage, message, cause=None):
        if stage not in self.STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.cause = cause
