"""Exception hierarchy.

``ValidationError`` covers bad inputs (files, formulas, bindings) and maps to
CLI exit code 2; ``ComputationError`` covers numerical failures and maps to
exit code 3. Each class carries a short machine-readable ``code``.
"""


class NetSurvError(Exception):
    code = "netsurv"


class ValidationError(NetSurvError, ValueError):
    code = "validation"


class ComputationError(NetSurvError, ArithmeticError):
    code = "computation"


class DomainError(ValidationError):
    code = "domain"


class FileFormatError(ValidationError):
    code = "file-format"


class UnsupportedAxisError(FileFormatError):
    code = "unsupported-axis"


class ArityError(ValidationError):
    code = "arity"


class UnknownCovariateError(ValidationError, KeyError):
    code = "unknown-value"

    def __init__(self, axis, value, available):
        self.axis = axis
        self.value = value
        self.available = tuple(available)
        super().__init__(
            f"unknown value {value!r} for axis {axis!r}; "
            f"available values: ({', '.join(map(str, self.available))})"
        )

    # KeyError.__str__ would repr() the message
    def __str__(self):
        return self.args[0]


class MissingColumnError(ValidationError):
    code = "missing-column"

    def __init__(self, column, available):
        self.column = column
        self.available = tuple(available)
        super().__init__(
            f"missing column {column!r}; "
            f"available columns: ({', '.join(self.available)})"
        )


class UnmatchedAxisError(ValidationError):
    code = "unmatched-axis"

    def __init__(self, axis, available):
        self.axis = axis
        self.available = tuple(available)
        super().__init__(
            f"rate table axis {axis!r} has no matching cohort column; "
            f"available columns: ({', '.join(self.available)}); "
            f"rename the column or pass an explicit binding"
        )


class FormulaSyntaxError(ValidationError):
    code = "formula-syntax"

    def __init__(self, message, text, position):
        self.text = text
        self.position = position
        super().__init__(f"{message} at position {position} in {text!r}")


class EmptyGroupError(ValidationError):
    code = "empty-group"


class GridMismatchError(ValidationError):
    code = "grid-mismatch"


class DivergentExpectationError(ComputationError):
    code = "divergent-expectation"
