"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid topology, game or experiment configuration."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class CapacityError(RuntimeError):
    """Profile space too large for exhaustive enumeration."""


class ContractViolation(ValueError):
    """A learning algorithm received input breaking its preconditions."""
