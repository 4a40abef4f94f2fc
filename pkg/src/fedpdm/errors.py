"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A run or partition configuration is inconsistent or infeasible."""


class CorruptDataError(ValueError):
    """A data file or wire payload failed structural validation."""
