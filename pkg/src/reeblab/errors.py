"""Exception hierarchy shared by every reeblab module."""


class ReeblabError(Exception):
    """Base class for all library errors."""


class DomainError(ReeblabError, ValueError):
    """An expression hit a pole, a log of a non-positive value, or overflowed.

    ``span`` is the (start, end) source offset of the offending AST node when
    the failure happened while evaluating parsed text.
    """

    def __init__(self, message, span=None):
        super().__init__(message)
        self.span = span


class DimensionError(ReeblabError, ValueError):
    pass


class SingularPointError(ReeblabError):
    pass


class PositionedError(ReeblabError):
    """Error that carries a 1-based line/column and a source span."""

    def __init__(self, message, line=1, column=1, span=None, path=None):
        self.message = message
        self.line = line
        self.column = column
        self.span = span if span is not None else (0, 0)
        self.path = path
        where = f"{path}: " if path else ""
        super().__init__(f"{where}line {line}, column {column}: {message}")


class ParseError(PositionedError):
    def __init__(self, message, line=1, column=1, span=None, expected=(), path=None):
        self.expected = tuple(expected)
        if self.expected:
            message = f"{message} (expected {', '.join(self.expected)})"
        super().__init__(message, line, column, span, path)


class CriticalMismatchError(ParseError):
    pass


class SchemaError(PositionedError):
    pass


class ValidationError(PositionedError):
    pass


# reeb-engine
class NearCriticalError(ReeblabError):
    pass


class DegenerateError(ReeblabError):
    pass


class OffLevelSetError(ReeblabError):
    pass


class MissingDecompositionError(ReeblabError):
    pass


class DegenerateThetaError(ReeblabError):
    pass


class OddOrderError(ReeblabError):
    pass


class NotAlmostConvexError(ReeblabError):
    pass


# flow-lab
class StepFailureError(ReeblabError):
    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


# orbit-hunter
class NoReturnError(ReeblabError):
    pass


class NewtonStallError(ReeblabError):
    pass


class InconclusiveError(ReeblabError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# gallery
class UnknownSystemError(ReeblabError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ParamError(ReeblabError, ValueError):
    pass


class CollisionError(ReeblabError):
    pass
