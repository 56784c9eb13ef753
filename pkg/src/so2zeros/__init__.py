"""Real zeros of random polynomials with binomial-square-root weights.

Modules:
    coefficients  coefficient laws and their characteristic functions
    weights       orthonormal value/derivative weight systems
    roots         batched real-root finding in the angle coordinate
    kacrice       semi-analytic zero densities by spectral inversion
    limit_field   the limiting Gaussian field and its correlation functions
    empirical     seeded Monte Carlo harness with mergeable estimates
    cli           the ``so2zeros`` command line
"""

__version__ = "0.1.0"

from .coefficients import get_distribution, resolve_distribution  # noqa: E402
from .errors import (  # noqa: E402
    ConfigurationError,
    ContractError,
    DegeneracyError,
    DomainError,
    NumericError,
    So2ZerosError,
)

__all__ = [
    "__version__",
    "get_distribution",
    "resolve_distribution",
    "So2ZerosError",
    "ConfigurationError",
    "ContractError",
    "DomainError",
    "NumericError",
    "DegeneracyError",
]
