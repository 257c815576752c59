"""Exception taxonomy shared across the package.

The CLI maps these onto its exit-status contract: usage/validation
problems exit 1, non-convergence exits 2, property violations exit 3.
"""


class QodeError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(QodeError, ValueError):
    """An input object violates a documented invariant."""


class NonErgodicChainError(ValidationError):
    """The behavior-policy chain has no reachable stationary distribution."""


class GenerationError(QodeError, RuntimeError):
    """Random-instance generation exhausted its retry budget."""


class CapacityError(QodeError, ValueError):
    """Problem instance exceeds a hard desk-scale limit."""


class NumericError(QodeError, ArithmeticError):
    """A computation produced NaN or diverged."""


class ConfigurationError(QodeError, ValueError):
    """Mutually inconsistent objects were combined (e.g. wrong norm weights)."""


class InadmissiblePError(QodeError, ValueError):
    """The requested even p does not make the scaled modulus contractive."""

    def __init__(self, message: str, min_even_p: int):
        super().__init__(message)
        self.min_even_p = min_even_p
