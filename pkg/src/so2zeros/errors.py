"""Exception hierarchy shared by all modules."""


class So2ZerosError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(So2ZerosError, ValueError):
    """Invalid distribution or experiment configuration."""


class ContractError(So2ZerosError, ValueError):
    """A caller violated an operation's precondition (shapes, metadata)."""


class DomainError(So2ZerosError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericError(So2ZerosError, ArithmeticError):
    """A numerical procedure failed to reach its accuracy target.

    ``detail`` carries whatever diagnostic the raising site has (a residual,
    a bracket, a boundary magnitude).
    """

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail


class DegeneracyError(NumericError):
    """Coincident or nearly coincident points make a covariance singular."""
