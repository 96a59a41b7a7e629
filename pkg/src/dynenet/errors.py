"""Exception types shared across the pipeline."""


class DynENetError(Exception):
    """Base class for all package errors."""


class InputError(DynENetError):
    """Bad user input: files, schemas, arguments. CLI exit code 2."""


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(InputError):
    pass


class RangeError(InputError):
    pass


class MappingError(InputError):
    pass


class NumericError(DynENetError):
    """Non-finite data or a numerical failure. CLI exit code 3."""


class DegenerateColumn(NumericError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"degenerate (constant) column: {column}")


class DegenerateData(DynENetError):
    """Not enough usable data to fit a model; routed to the fallback predictor."""


class DegenerateResponse(DegenerateData):
    """The response has zero total sum of squares."""


class NotApplicable(DynENetError):
    """Requested analysis does not apply (e.g. heatmap for a fallback country)."""
