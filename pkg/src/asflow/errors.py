"""Exception hierarchy shared by all asflow modules."""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "AsflowError",
    "Violation",
    "InvalidInstance",
    "ParseError",
    "SchemaVersionMismatch",
    "DomainError",
    "NotAttained",
    "MalformedRule",
    "ModelMismatch",
    "NotParallel",
    "NotTwoParallel",
    "HypothesesViolated",
    "EventBudgetExceeded",
    "NonLipschitzDetected",
]


class AsflowError(Exception):
    """Base class for every error raised by the package."""


# -- instances ---------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    """One failed instance check. ``code`` names the rule that failed."""

    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class InvalidInstance(AsflowError):
    """Raised by validation; carries every violation found, not just the first."""

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))

    @property
    def codes(self) -> set[str]:
        return {v.code for v in self.violations}


class ParseError(AsflowError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class SchemaVersionMismatch(ParseError):
    pass


# -- time series -------------------------------------------------------------

class DomainError(AsflowError, ValueError):
    """Evaluation point outside the function's domain."""


class NotAttained(AsflowError, ValueError):
    """Requested value lies outside the range of a monotone function."""


# -- strategies --------------------------------------------------------------

class MalformedRule(AsflowError, ValueError):
    pass


class ModelMismatch(AsflowError):
    pass


class NotParallel(AsflowError):
    pass


class NotTwoParallel(NotParallel):
    pass


class HypothesesViolated(AsflowError):
    pass


# -- engine ------------------------------------------------------------------

class EventBudgetExceeded(AsflowError, RuntimeError):
    pass


class NonLipschitzDetected(AsflowError, RuntimeError):
    pass
