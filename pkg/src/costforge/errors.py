"""Exception hierarchy shared across the toolkit.

Every error raised by this package derives from CostForgeError so callers
can catch broadly at batch boundaries while inner code raises precisely.
"""

from __future__ import annotations


class CostForgeError(Exception):
    """Base class for all package errors."""


# --- structured output / tagged text ---

class MalformedTags(CostForgeError):
    """Model output does not contain exactly one well-formed
    <reasoning>...</reasoning> followed by one <answer>...</answer>."""


class ParseError(CostForgeError):
    """Structured-output text violates the canonical grammar.

    Carries 1-based line and column of the offending position.
    """

    def __init__(self, message: str, line: int, col: int = 1):
        super().__init__(f"{message} (line {line}, col {col})")
        self.line = line
        self.col = col


class KindMismatch(CostForgeError):
    """Content or schema contradicts the expected structure kind."""


class InvariantViolation(CostForgeError):
    """A value violates its construction invariants."""


# --- gateway ---

class MissingBinding(CostForgeError):
    """A template placeholder has no binding."""

    def __init__(self, name: str):
        super().__init__(f"missing binding: {name}")
        self.name = name


class BackendUnavailable(CostForgeError):
    """All retry attempts against a backend failed."""


class BudgetExceeded(CostForgeError):
    """The configured call budget for a gateway was exhausted."""


class ScriptExhausted(CostForgeError):
    """A scripted backend has no entry matching the rendered prompt."""


# --- pipeline ---

class UnparseableSelection(CostForgeError):
    """Structure-selection reply names no known structure kind."""


class EmptySchema(CostForgeError):
    """Schema-construction reply contains no attributes."""


class GenerationRejected(CostForgeError):
    """A generation could not be parsed; raw text is retained for refinement."""

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class JudgeUnparseable(CostForgeError):
    """A judge reply could not be parsed into the expected decision."""


# --- rewards ---

class ScoreOutOfRange(CostForgeError):
    """A judge emitted a score outside [0, 100]."""


class DomainError(CostForgeError):
    """A numeric input is outside its documented domain."""


class GroupTooSmall(CostForgeError):
    """Group-relative advantages need at least two rollouts."""


# --- dataset / records ---

class RecordError(CostForgeError):
    """A record line could not be decoded.

    Carries the 1-based line number within the record file.
    """

    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line


class SchemaVersionMismatch(CostForgeError):
    """A record carries an unsupported format version."""


# --- evaluation ---

class EmptyInput(CostForgeError):
    """Aggregation requires at least one record."""


# --- cli ---

class ConfigError(CostForgeError):
    """App configuration is missing or inconsistent."""
