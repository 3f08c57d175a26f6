"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ContractViolation(ValueError):
    """Inputs are structurally inconsistent (shape, length, emptiness)."""


class ConfigurationError(ValueError):
    """A configuration object is internally inconsistent."""


class NumericFailure(RuntimeError):
    """A computation produced non-finite values and cannot continue."""
