"""Error types shared across the package."""


class DegenerateInputError(ValueError):
    """An input is structurally valid but numerically unusable (all-zero durations, t=0, ...)."""


class WrongPhaseError(ValueError):
    """A stage/phase combination that cannot occur was passed in."""


class NoBackupTargetError(RuntimeError):
    """No eligible node can host a backup copy; the decision is dropped."""


class ConfigurationError(ValueError):
    """Inconsistent simulator or model configuration (zero nodes, dimension mismatch, ...)."""
