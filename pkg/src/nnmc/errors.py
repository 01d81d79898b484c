"""Exception hierarchy shared by the library and the command-line front end.

Every error carries an integer ``code`` so the CLI can map it to an exit
status: 10-19 for domain errors, 20-29 for I/O problems.
"""


class NnmcError(Exception):
    code = 10


class RasterFormatError(NnmcError):
    code = 11


class ChainConfigError(NnmcError):
    code = 12


class SingularMatrixError(NnmcError):
    code = 13


class DivergenceError(NnmcError):
    code = 14


class StateSpaceTooLargeError(NnmcError):
    code = 15


class DimensionMismatchError(NnmcError, ValueError):
    code = 16


class DomainError(NnmcError, ValueError):
    """Point outside the operator domain, or a non-finite sample."""

    code = 17


class ModelFormatError(NnmcError):
    code = 18


class NnmcIOError(NnmcError, OSError):
    code = 20
