"""Exception types shared across the package."""


class QSVError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QSVError, ValueError):
    """Invalid static configuration (mesh size, tiling, block size, ...)."""


class ContractError(QSVError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class CapacityError(QSVError, MemoryError):
    """A request exceeds an enforced memory cap."""


class UnsupportedTermError(QSVError, ValueError):
    """A Hamiltonian term cannot be blocked into the requested block size."""


class FormatError(QSVError, ValueError):
    """A file does not follow the expected on-disk format."""


class NumericalError(QSVError, ArithmeticError):
    """A computed quantity is outside its mathematically valid range."""
