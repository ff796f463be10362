class ConfigError(ValueError):
    """Invalid configuration input (bad field value, malformed file, bad units)."""


class InfeasibleError(RuntimeError):
    """No feasible operating point exists for the requested targets."""
