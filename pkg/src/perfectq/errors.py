"""Exception types shared across the package."""


class PerfectQError(Exception):
    """Base class for all package errors."""


class ZeroMassInterval(PerfectQError):
    """Conditional sampling requested on an interval with zero probability mass."""


class DivergentTilt(PerfectQError):
    """Exponential tilt requested at a parameter where the MGF diverges."""


class NoRoot(PerfectQError):
    """No positive tilt root exists for the drift-adjusted walk.

    Typical causes: epsilon too large, or degenerate (deterministic)
    interarrival times.  Reduce epsilon or change the arrival family.
    """


class GuardViolation(PerfectQError):
    """The record-probability sandwich was evaluated outside its validity range."""


class IterationCap(PerfectQError):
    """An acceptance-rejection or first-passage loop hit its hard iteration cap."""


class UncertifiedTime(PerfectQError):
    """State reconstruction requested outside the certified window."""


class BlockBudgetExceeded(PerfectQError):
    """Coalescence was not detected within the configured block budget."""


class StateSpaceTooLarge(PerfectQError):
    """Product-form enumeration would exceed the state-count limit."""


class DegenerateBinning(PerfectQError):
    """Chi-square pooling left fewer than two usable bins."""


class ConfigError(PerfectQError):
    """Invalid or incomplete run configuration."""
