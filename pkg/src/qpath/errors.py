"""Exception types. The CLI maps each to a distinct exit code."""


class QPathError(Exception):
    exit_code = 1


class ConfigError(QPathError, ValueError):
    exit_code = 2


class ConvergenceError(QPathError):
    """Raised when the boundary-value solver finds no acceptable root."""

    exit_code = 3

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InsufficientStatisticsError(QPathError):
    exit_code = 4

    def __init__(self, message, count=0):
        super().__init__(message)
        self.count = count


class CalibrationError(QPathError):
    exit_code = 5


class RecordFormatError(QPathError, ValueError):
    """Malformed readout file. ``line`` is 1-based, counting the header."""

    exit_code = 6

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class OutputError(QPathError):
    """Output directory or file cannot be written."""

    exit_code = 7
