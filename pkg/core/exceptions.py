"""
Error hierarchy shared by every app.

Library code raises these; management commands turn them into
``CommandError`` with the matching return code (see ``exit_code_for``).
"""

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_IO = 3


class ContactNetError(ValueError):
    """Base class for all domain errors."""

    exit_code = EXIT_DATA


class ConfigurationError(ContactNetError):
    exit_code = EXIT_CONFIG


class DataError(ContactNetError):
    exit_code = EXIT_DATA


class OutOfRangeError(DataError):
    pass


class SelfContactError(DataError):
    pass


class PacketParseError(DataError):
    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class ProtocolViolation(PacketParseError):
    pass


class UnknownStationError(DataError):
    pass


class UnknownNodeError(DataError, KeyError):
    def __str__(self):
        # KeyError quotes its argument
        return str(self.args[0]) if self.args else ""


class InsufficientDataError(DataError):
    pass


class DegenerateDataError(DataError):
    pass


def exit_code_for(exc):
    if isinstance(exc, ContactNetError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_DATA
