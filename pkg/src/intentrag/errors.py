"""Exception hierarchy shared across the package.

Data/validation problems and provider (network / LLM) failures are kept in
separate branches so the CLI can map them to distinct exit codes.
"""

from __future__ import annotations


class IntentRagError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(IntentRagError):
    """An input violates a documented invariant or precondition."""


class DataFormatError(IntentRagError):
    """A data file could not be parsed."""

    def __init__(self, message: str, *, path: str | None = None,
                 line: int | None = None, field: str | None = None) -> None:
        self.path = path
        self.line = line
        self.field = field
        parts = [message]
        if field is not None:
            parts.append(f"field {field!r}")
        if line is not None:
            parts.append(f"line {line}")
        if path is not None:
            parts.append(f"in {path}")
        super().__init__(": ".join([parts[0], ", ".join(parts[1:])]) if parts[1:] else message)


class DimensionMismatchError(ValidationError):
    """Two vector operands (or a vector and an index) disagree on dimension."""


class IndexFormatError(IntentRagError):
    """An index file is corrupt or does not look like an index at all."""


class UnsupportedVersionError(IndexFormatError):
    """The index file declares a format version this build cannot read."""


class UndefinedMetricError(IntentRagError):
    """A metric was requested on inputs for which it is undefined (e.g. empty gold)."""


class ProviderError(IntentRagError):
    """Base class for embedding / LLM provider failures."""


class TransportError(ProviderError):
    """A remote call failed even after the bounded retry schedule."""


class ContractViolationError(ProviderError):
    """A backend answered, but the response violates the provider contract."""


class ScriptMissError(ProviderError):
    """A scripted mock received a prompt it has no canned response for."""


class GenerationFormatError(ProviderError):
    """LLM output could not be parsed even after one repair re-prompt."""

    def __init__(self, message: str, raw_output: str = "") -> None:
        self.raw_output = raw_output
        super().__init__(message)
