"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (bad key, enum, range)."""


class ProtocolError(ValueError):
    """Experiment protocol violated (e.g. mismatched degradation seeds)."""


class DivergenceError(RuntimeError):
    """Optimization produced a non-finite loss or gradient."""
