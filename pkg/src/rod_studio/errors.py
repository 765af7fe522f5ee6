"""Error types raised by the engine.

Every failure the CLI can report is a `RodStudioError`; `to_dict()` is the
machine-readable object written to stderr before a non-zero exit.
"""

from typing import Any, Dict, Optional


class RodStudioError(ValueError):
    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    @property
    def code(self) -> str:
        return type(self).__name__

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.code, "message": self.message, **self.details}


class InvalidBox(RodStudioError):
    pass


class EmptyPhrase(RodStudioError):
    pass


class DegenerateBox(RodStudioError):
    pass


class LengthMismatch(RodStudioError):
    pass


class EmptyCandidates(RodStudioError):
    pass


class NoPositives(RodStudioError):
    pass


class AssignmentMismatch(RodStudioError):
    pass


class NonFiniteCost(RodStudioError):
    pass


class EmptyDataset(RodStudioError):
    pass


class InsufficientPool(RodStudioError):
    pass


class MissingPrediction(RodStudioError):
    def __init__(self, sample_id: str) -> None:
        super().__init__(f"No prediction for sample {sample_id!r}", id=sample_id)


class ParseError(RodStudioError):
    def __init__(self, message: str, line: int, path: Optional[str] = None) -> None:
        super().__init__(f"line {line}: {message}", line=line, path=path)
        self.line = line


class DuplicateId(RodStudioError):
    def __init__(self, sample_id: str, line: Optional[int] = None) -> None:
        super().__init__(f"Duplicate id {sample_id!r}", id=sample_id, line=line)


class DimensionMismatch(RodStudioError):
    def __init__(self, sample_id: str, expected: int, actual: int) -> None:
        super().__init__(
            f"Relevance map {sample_id!r} has {actual} values, expected {expected}",
            id=sample_id,
            expected=expected,
            actual=actual,
        )


class ConfigError(RodStudioError):
    pass
