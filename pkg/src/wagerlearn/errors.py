"""Exception hierarchy shared across the package."""


class WagerlearnError(Exception):
    """Base class for all package errors."""


class ParameterError(WagerlearnError, ValueError):
    """An algorithm or configuration parameter is out of its valid range."""


class DimensionError(WagerlearnError, ValueError):
    """Array lengths or shapes do not agree."""


class SizeError(WagerlearnError, ValueError):
    """An exact enumeration would exceed its budget."""


class MechanismContractError(WagerlearnError, ValueError):
    """A wagering mechanism returned payoffs that are not a valid distribution."""


class DataIntegrityError(WagerlearnError):
    """Input data is readable but contradicts itself."""


class ParseError(DataIntegrityError):
    """A row of an input file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyPanelError(DataIntegrityError):
    """No expert survived complete-panel filtering."""


class SimplexError(WagerlearnError, ValueError):
    """A learner produced a weight vector that is not a distribution."""


class OutputError(WagerlearnError, OSError):
    """Reading or writing a file failed; the message names the path."""
