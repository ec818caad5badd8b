"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class OrliczError(Exception):
    exit_code = 1


class ParameterError(OrliczError, ValueError):
    """Invalid parameter value or inadmissible parameter combination."""

    exit_code = 2


class DomainError(ParameterError):
    """Argument outside the domain of a function (e.g. negative t for an N-function)."""


class StructuralError(ParameterError):
    """Graph or measure violates a structural invariant (disconnected, bad node id)."""


class NumericalError(OrliczError, ArithmeticError):
    exit_code = 3


class InputError(OrliczError):
    """Malformed input data: unreadable files, infeasible marginals."""

    exit_code = 4
