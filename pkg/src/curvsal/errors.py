"""Exception types shared across the package."""


class CurvsalError(Exception):
    """Base class for all package errors."""


class ParameterError(CurvsalError, ValueError):
    """An argument is outside its allowed domain."""


class NumericDomainError(CurvsalError, ArithmeticError):
    """A computation left the real domain (e.g. complex eigenvalues)."""


class DegenerateGeometryError(CurvsalError, ValueError):
    pass


class MeshParseError(CurvsalError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class EmptyMeshError(CurvsalError, ValueError):
    pass


class EmptyFieldError(CurvsalError, ValueError):
    """A detector received an image with no usable foreground."""


class UndefinedScoreError(CurvsalError, ValueError):
    """A score is undefined for the given inputs (e.g. an empty point set)."""


class FormatError(CurvsalError, ValueError):
    """A file exists but its content cannot be parsed."""

    def __init__(self, message, path=None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
