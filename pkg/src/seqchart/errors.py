"""Exception hierarchy shared across the package.

Structural problems found by validators are reported as ``Violation``
values, not exceptions; exceptions are reserved for contract breaches
(bad input documents, stepping an inconsistent configuration, and so on).
"""

from __future__ import annotations

from dataclasses import dataclass


class SeqchartError(Exception):
    """Base class for every error raised by this package."""


class ManifestSyntaxError(SeqchartError):
    """Manifest document is not well-formed text. Carries line/column."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class SchemaError(SeqchartError):
    """Well-formed document with an unknown or missing field."""

    def __init__(self, message: str, subject_id: str = ""):
        self.subject_id = subject_id
        super().__init__(message)


class ModelError(SeqchartError):
    """Document parses but breaks a content-model invariant."""

    def __init__(self, message: str, subject_id: str = ""):
        self.subject_id = subject_id
        super().__init__(message)


class IllFormedChart(SeqchartError):
    """A statechart operation was given a chart that fails check_chart."""


class InvalidConfiguration(SeqchartError):
    """A configuration is inconsistent with the chart it is used against."""


class InvalidEvent(SeqchartError):
    """An event carries a malformed payload (score out of range, missing state)."""


class ClockRegression(SeqchartError):
    """advance_clock was asked to move logical time backwards."""


class InvalidTree(SeqchartError):
    """The compiler was given an activity tree that fails validation."""


class InapplicableStrategy(SeqchartError):
    """A strategy has nothing to rewrite on the given chart."""


class PolicyError(SeqchartError):
    """A learner policy returned an event that is not currently enabled."""


class UnknownCourse(SeqchartError):
    """Session creation referenced a course id absent from the content directory."""


class InvalidStrategy(SeqchartError):
    """A strategy pipeline document names an unknown strategy or bad params."""


class SessionNotFound(SeqchartError):
    """No session with the given id."""


class SessionCompleted(SeqchartError):
    """An event was posted to a session that already reached completion."""


class EventNotEnabled(SeqchartError):
    """The posted external event is not enabled in the current configuration."""

    def __init__(self, message: str, available: list[str]):
        self.available = available
        super().__init__(message)


class CorruptLog(SeqchartError):
    """A session event log does not replay (an event was not enabled at its step)."""

    def __init__(self, session_id: str, line_no: int, message: str):
        self.session_id = session_id
        self.line_no = line_no
        super().__init__(f"session {session_id}, line {line_no}: {message}")


@dataclass(frozen=True)
class Violation:
    """One broken invariant: which node, which rule, and a readable message."""

    subject_id: str
    rule: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"[{self.rule}] {self.subject_id}: {self.message}"
