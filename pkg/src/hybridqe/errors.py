"""Exception types shared across the engine."""


class HybridQEError(Exception):
    """Base class for all engine errors."""


class DimensionError(HybridQEError):
    """Vector dimensionality mismatch."""


class TypeMismatchError(HybridQEError):
    """Comparison between scalar values of differing types."""


class EmptyInputError(HybridQEError):
    """An operation that requires at least one element got none."""


class ParseError(HybridQEError):
    """Malformed input text (table file or SQL).

    Carries a position: row index for table files, line/column for SQL.
    """

    def __init__(self, message, line=None, column=None, row=None):
        pos = ""
        if row is not None:
            pos = f" (row {row})"
        elif line is not None:
            pos = f" (line {line}, column {column})"
        super().__init__(message + pos)
        self.line = line
        self.column = column
        self.row = row


class UnsupportedError(HybridQEError):
    """SQL construct outside the supported subset."""


class PlanError(HybridQEError):
    """Unresolvable column/table or malformed logical plan."""


class LoweringError(HybridQEError):
    """Logical operator with no physical counterpart."""


class ExecError(HybridQEError):
    """Runtime failure inside a physical stage."""


class ConfigError(HybridQEError):
    """Conflicting or invalid benchmark configuration."""
