class NumericalError(RuntimeError):
    """The numerical scheme failed: divergence, non-finite values, or a policy
    that cannot be simulated."""


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""
