"""Exception types shared across the package."""


class MvBanditError(Exception):
    """Base class for package-specific errors."""


class NotPositiveDefinite(MvBanditError):
    """Cholesky factorization hit a pivot below the jitter floor."""


class InvalidParameter(MvBanditError, ValueError):
    """A distribution or algorithm parameter is outside its valid range."""


class InvalidObservation(MvBanditError, ValueError):
    """An observed context or reward is not finite."""


class NoObservations(MvBanditError):
    """A statistic was requested for an arm that has never been pulled."""


class PolicyStateError(MvBanditError):
    """A policy was asked to act before every arm had its first pull."""


class ConsistencyError(MvBanditError):
    """Internal bookkeeping drifted beyond tolerated rounding error."""


class ReplicationError(MvBanditError):
    """A replication failed; carries the replication index in the message."""


class ConfigError(MvBanditError, ValueError):
    """Experiment configuration failed validation."""
