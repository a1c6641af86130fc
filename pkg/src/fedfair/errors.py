"""Exception types shared across the package."""


class FedFairError(Exception):
    """Base class for all package errors."""


class SchemaError(FedFairError):
    """Input file does not match its declared schema."""


class RowParseError(FedFairError):
    """A data row could not be parsed; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ConfigError(FedFairError):
    """A configuration value is invalid or inconsistent."""


class MetricUndefinedError(FedFairError):
    """A metric denominator is empty (e.g. an empty sensitive group)."""


class ProtocolError(FedFairError):
    """Client/server round produced an invalid state or message."""
