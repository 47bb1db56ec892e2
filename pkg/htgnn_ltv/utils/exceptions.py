"""Exception hierarchy and error formatting utilities."""

import logging
from typing import Any, Optional

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_DATA_ERROR = 2
EXIT_DIVERGENCE = 3


class HTGNNError(Exception):
    """Base class for every error raised by the package."""

    error_type = "error"


class DimensionError(HTGNNError):
    """Operand shapes are incompatible."""

    error_type = "dimension_error"

    def __init__(self, message: str, *shapes: tuple[int, ...]):
        self.shapes = shapes
        super().__init__(message)


class ContractError(HTGNNError):
    """A precondition of an operation was violated."""

    error_type = "contract_error"


class DomainError(HTGNNError):
    """A value lies outside the domain of a function (e.g. log of a negative number)."""

    error_type = "domain_error"


class IndexOutOfRangeError(HTGNNError, IndexError):
    """An embedding id or gather index is out of range."""

    error_type = "index_error"

    def __init__(self, message: str, offending: Optional[int] = None):
        self.offending = offending
        super().__init__(message)


class ConfigurationError(HTGNNError):
    """A configuration value is missing, unknown or inconsistent."""

    error_type = "configuration_error"


class DataError(HTGNNError):
    """A record violates the dataset schema or its invariants."""

    error_type = "data_error"

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(message)


class DatasetParseError(DataError):
    """A dataset line could not be parsed."""

    error_type = "parse_error"

    def __init__(self, message: str, line_number: int):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class MetricUndefinedError(HTGNNError):
    """A metric is undefined for the supplied inputs."""

    error_type = "metric_undefined"


class CheckpointError(HTGNNError):
    """A checkpoint is malformed or does not match the configuration."""

    error_type = "checkpoint_error"


class DivergenceError(HTGNNError):
    """Training produced a non-finite loss."""

    error_type = "divergence"

    def __init__(self, message: str, term: Optional[str] = None):
        self.term = term
        super().__init__(message)


def exit_code_for(error: BaseException) -> int:
    """Map an exception to a process exit code.

    Args:
        error: The exception raised by a command

    Returns:
        2 for data errors, 3 for numerical divergence, 1 otherwise
    """
    if isinstance(error, DataError):
        return EXIT_DATA_ERROR
    elif isinstance(error, DivergenceError):
        return EXIT_DIVERGENCE
    return EXIT_FAILURE


def format_error_response(error: BaseException, command: str) -> dict[str, Any]:
    """Format an error response based on the exception type.

    Args:
        error: The exception that occurred
        command: Name of the command that encountered the error

    Returns:
        JSON-serialisable error description
    """
    if isinstance(error, DatasetParseError):
        return _format_parse_error(error, command)
    elif isinstance(error, DataError):
        return _format_data_error(error, command)
    elif isinstance(error, DivergenceError):
        return _format_divergence_error(error, command)
    elif isinstance(error, HTGNNError):
        return _format_package_error(error, command)
    elif isinstance(error, FileNotFoundError):
        return _format_missing_file_error(error, command)
    else:
        return _format_generic_error(error, command)


def _format_parse_error(error: DatasetParseError, command: str) -> dict[str, Any]:
    """Format a dataset parse error, keeping the line number."""
    logger.error("Parse error in %s: %s", command, error)
    return {"error": str(error), "type": error.error_type, "line": error.line_number, "command": command}


def _format_data_error(error: DataError, command: str) -> dict[str, Any]:
    """Format a data error, naming the offending field when known."""
    logger.error("Data error in %s: %s", command, error)
    response: dict[str, Any] = {"error": str(error), "type": error.error_type, "command": command}
    if error.field is not None:
        response["field"] = error.field
    return response


def _format_divergence_error(error: DivergenceError, command: str) -> dict[str, Any]:
    """Format a divergence error with the term that went non-finite."""
    logger.error("Numerical divergence in %s: %s", command, error)
    return {"error": str(error), "type": error.error_type, "term": error.term, "command": command}


def _format_package_error(error: HTGNNError, command: str) -> dict[str, Any]:
    """Format any other package error."""
    logger.error("%s in %s: %s", type(error).__name__, command, error)
    return {"error": str(error), "type": error.error_type, "command": command}


def _format_missing_file_error(error: FileNotFoundError, command: str) -> dict[str, Any]:
    """Format a missing input file."""
    logger.error("Missing file in %s: %s", command, error)
    return {"error": f"File not found: {error.filename}", "type": "file_not_found", "command": command}


def _format_generic_error(error: BaseException, command: str) -> dict[str, Any]:
    """Format an unexpected error, logging the traceback."""
    logger.exception("Error executing %s: %s: %s", command, type(error).__name__, error)
    return {"error": str(error), "error_type": type(error).__name__, "command": command}
