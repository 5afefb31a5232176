"""Exception hierarchy shared by every killpar module."""


class KillparError(Exception):
    """Base class for all errors raised by killpar."""

    #: machine-readable category used by the CLI error JSON
    kind = "error"


class ExprError(KillparError):
    kind = "expression"


class ExprSyntaxError(ExprError):
    """Malformed expression text; ``offset`` is the UTF-8 byte offset."""

    kind = "syntax"

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    kind = "unknown_identifier"

    def __init__(self, name, offset=None):
        where = "" if offset is None else f" at offset {offset}"
        super().__init__(f"unknown identifier {name!r}{where}")
        self.name = name
        self.offset = offset


class DomainFault(ExprError, ArithmeticError):
    """Evaluation left the domain of an operation (log of a negative, 1/0, overflow)."""

    kind = "domain_fault"

    def __init__(self, message, subexpression=None):
        text = message if subexpression is None else f"{message} in {subexpression}"
        super().__init__(text)
        self.subexpression = subexpression


class GeometryError(KillparError):
    kind = "geometry"


class RegularityError(GeometryError):
    kind = "regularity"


class DomainExitError(GeometryError):
    kind = "domain_exit"


class PositivityError(GeometryError):
    kind = "positivity"


class SpecInconsistencyError(KillparError):
    kind = "spec_inconsistency"


class NonFiniteIntegrandError(KillparError):
    kind = "non_finite"


class IncompleteCurveError(KillparError):
    kind = "incomplete_curve"


class StepTooLargeError(KillparError):
    kind = "step_too_large"


class SpecFileError(KillparError):
    kind = "spec_file"
