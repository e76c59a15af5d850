"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid input: bad distribution, inconsistent geometry, malformed config."""


class NumericalError(RuntimeError):
    """A quadrature or solver step failed to converge."""


class DivergenceError(RuntimeError):
    """A simulated queue exceeded the stability guard."""

    def __init__(self, message, epsilon=None, slot=None):
        super().__init__(message)
        self.epsilon = epsilon
        self.slot = slot


class ConfigError(ValueError):
    """Malformed experiment configuration: unknown or missing keys, bad types."""
