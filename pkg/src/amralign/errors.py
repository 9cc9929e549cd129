"""Exception types shared across the toolkit."""


class AmrAlignError(Exception):
    """Base class for all toolkit errors."""


class PenmanParseError(AmrAlignError):
    """Malformed Penman text. Carries 1-based line/column of the offending token."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class TokenStreamError(AmrAlignError):
    """Subword token stream cannot be reconciled with its reference segments."""

    def __init__(self, message: str, offset: int = -1):
        if offset >= 0:
            message = f"{message} (character offset {offset})"
        super().__init__(message)
        self.offset = offset


class ContainerError(AmrAlignError):
    """Invalid or inconsistent AAM1 score-matrix container."""


class AlignmentFormatError(AmrAlignError):
    """Malformed alignment document."""

    def __init__(self, message: str, line: int = 0):
        if line:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class DegenerateInputError(AmrAlignError):
    """Statistic undefined for this input (constant vector, no nonzero differences, ...)."""
