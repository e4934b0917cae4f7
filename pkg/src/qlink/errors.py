"""Exception types shared across the package."""

__all__ = [
    "QlinkError",
    "ConfigError",
    "NumericalInvariantError",
    "NonMixingError",
    "CodeConstructionError",
]


class QlinkError(Exception):
    """Base class for package-specific errors."""


class ConfigError(QlinkError):
    """Invalid experiment configuration.

    Carries the full list of violations so a caller can report them all at
    once instead of fixing fields one by one.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NumericalInvariantError(QlinkError):
    """A numerical invariant (trace preservation, unitarity, ...) failed."""


class NonMixingError(NumericalInvariantError):
    """A map required to be mixing has more than one peripheral eigenvalue."""


class CodeConstructionError(QlinkError):
    """A code construction could not be completed (e.g. too few points)."""
