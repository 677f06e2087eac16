"""Exception hierarchy. The CLI maps :class:`DataError` to exit code 2."""


class DataError(ValueError):
    """Input data violates a precondition (bad file, too few samples, ...)."""


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class InsufficientDataError(DataError):
    pass


class SingularSystemError(DataError):
    pass


class UnitError(DataError):
    """Raised when an operation receives values in the wrong unit space."""
