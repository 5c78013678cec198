"""Exception hierarchy shared by every module.

Each class carries a ``category`` used by the command-line front end to
prefix messages (``ERROR:<category>:``) and to pick an exit code.
"""


class WorkbenchError(Exception):
    category = "error"


class ConfigError(WorkbenchError, ValueError):
    """Invalid configuration, shape mismatch or unsupported combination."""

    category = "config"


class DataError(WorkbenchError, ValueError):
    """Token ids or batches that violate their declared ranges."""

    category = "data"


class ParseError(WorkbenchError, ValueError):
    """Malformed spec or results file; ``line`` is 1-based when known."""

    category = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericError(WorkbenchError, ArithmeticError):
    """Non-finite values produced or consumed by a kernel."""

    category = "numeric"
