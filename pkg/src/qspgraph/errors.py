"""Exception hierarchy for the workbench.

Every error that crosses a module boundary derives from QspError so callers
(CLI, server, session engine) can convert failures to structured reports
without matching on bare ValueError.
"""

from __future__ import annotations


class QspError(Exception):
    """Base class for all workbench errors."""

    def payload(self) -> dict:
        """Machine-readable form of this error."""
        return {"error": type(self).__name__, "message": str(self)}


class UnitParseError(QspError):
    """Malformed unit text."""

    def __init__(self, text: str, position: int, message: str):
        super().__init__(f"{message} in unit {text!r} at position {position}")
        self.text = text
        self.position = position


class DimensionError(QspError):
    """Dimensional inconsistency in an expression or conversion."""


class ExprParseError(QspError):
    """Malformed rate expression."""

    def __init__(self, text: str, position: int, message: str):
        super().__init__(f"{message} in expression {text!r} at position {position}")
        self.text = text
        self.position = position


class ModelError(QspError):
    """Model-level invariant violation (dangling reference, duplicate id, ...)."""

    def __init__(self, message: str, site: str | None = None):
        super().__init__(message if site is None else f"{message} (at {site})")
        self.site = site


class GraphError(QspError):
    """Hypergraph-level invariant violation."""


class ReconstructionError(QspError):
    """Graph cannot be lowered back to a model."""

    def __init__(self, message: str, missing: list[str] | None = None):
        super().__init__(message)
        self.missing = missing or []


class SerializationError(QspError):
    """Graph cannot be canonically serialized (e.g. non-finite numbers)."""


class KbError(QspError):
    """Priors knowledge base failed its frozen-content contract."""


class IngestError(QspError):
    """Script parse failure with source position."""

    def __init__(self, message: str, line: int, column: int = 0):
        super().__init__(f"line {line}, col {column}: {message}")
        self.line = line
        self.column = column


class LoweringError(QspError):
    """Parsed script references an undeclared entity or is otherwise unloadable."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class CodegenError(QspError):
    """Emission refused; carries the blocking violation report when present."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class AssemblyError(QspError):
    """ODE system cannot be assembled from the graph."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class UnsupportedFeatureError(QspError):
    """Feature is representable but not simulatable in this version."""


class SimulationError(QspError):
    """Integration failure (NaN state, excessive negativity)."""


class StiffnessError(SimulationError):
    """Step size underflow; the system looks stiff for the explicit solver."""


class EditParseError(QspError):
    """Malformed edit script line."""

    def __init__(self, message: str, line: int, column: int = 0):
        super().__init__(f"line {line}, col {column}: {message}")
        self.line = line
        self.column = column


class ApplyError(QspError):
    """Edit application was rolled back; carries the violation report."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class OpenItemsError(QspError):
    """Edits cannot be applied while clarification items are open."""

    def __init__(self, item_ids: list[str]):
        super().__init__(f"open clarification items: {', '.join(item_ids)}")
        self.item_ids = item_ids


class PhaseError(QspError):
    """Session operation invoked in the wrong phase."""

    def __init__(self, expected: str, actual: str):
        super().__init__(f"operation requires phase {expected!r}, session is in {actual!r}")
        self.expected = expected
        self.actual = actual


class SessionError(QspError):
    """Session-level failure (missing version, corrupt store, cap exhausted)."""


class ProvenanceError(QspError):
    """Provenance chain is broken or hash-inconsistent."""
