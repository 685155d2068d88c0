from typing import Any, Dict, Optional


class DensmatError(Exception):
    """
    Base class for every error raised by densmat
    """

    exit_code = 1


class InvalidArgumentError(DensmatError, ValueError):
    """
    Bad hyperparameter, shape or range supplied by the caller
    """

    exit_code = 2


class DataError(DensmatError):
    """
    Dataset could not be read or parsed
    """

    exit_code = 3

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericFailureError(DensmatError):
    """
    A numerical routine diverged or produced a non-finite value
    """

    exit_code = 4

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = dict(diagnostics or {})
        if self.diagnostics:
            details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
            message = f"{message} ({details})"
        super().__init__(message)


class DegenerateEmbeddingError(NumericFailureError):
    """
    Raw RFF embedding has zero norm and cannot be normalized
    """


class ZeroEvidenceError(NumericFailureError):
    """
    Measurement collapse found no support for the query under the model
    """
