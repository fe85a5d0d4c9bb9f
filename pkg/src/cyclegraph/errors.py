"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so new errors should subclass one of the
three families below rather than ``Exception`` directly.
"""


class CycleGraphError(Exception):
    pass


class ValidationError(CycleGraphError, ValueError):
    """Bad user input: shapes, ranges, config keys."""


class ShapeError(ValidationError):
    pass


class ContractError(ValidationError):
    """An API was called outside its precondition."""


class FormatError(ValidationError):
    """A file on disk does not match the expected layout."""


class NumericsError(CycleGraphError, ArithmeticError):
    pass


class DegenerateNormals(ValidationError):
    """Too few distinct normal directions to identify a light."""
