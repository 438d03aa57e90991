"""Exception hierarchy.

Every error raised by this package derives from :class:`UxevalError`. The
three intermediate categories map onto the CLI exit codes: configuration
problems exit 1, data problems exit 2, oracle problems exit 3, anything
else exits 4.
"""

from __future__ import annotations


class UxevalError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class ConfigError(UxevalError):
    """The run was misconfigured (bad profile, bad explainer settings, ...)."""

    exit_code = 1


class DataError(UxevalError):
    """Input data violates an invariant."""

    exit_code = 2


class OracleError(UxevalError):
    """A model oracle could not answer a query."""

    exit_code = 3


# -- data ---------------------------------------------------------------

class EmptyDataset(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class NonFiniteValue(DataError):
    """A NaN or infinity was found; carries the offending instance and index."""

    def __init__(self, instance_id: int, index: int):
        super().__init__(f"non-finite value at instance {instance_id}, flat index {index}")
        self.instance_id = instance_id
        self.index = index


class CountMismatch(DataError):
    pass


class ShapeUnrescalable(DataError):
    pass


class MissingLabels(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class GroupSizeZero(DataError):
    pass


class ReferenceTooSmall(DataError):
    pass


class DegenerateSystem(DataError):
    """A least-squares system was singular; carries a condition diagnostic."""

    def __init__(self, message: str, condition: float = float("inf")):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


# -- configuration ------------------------------------------------------

class InvalidConfig(ConfigError):
    pass


class UnknownProfile(ConfigError):
    pass


class WeightsNotNormalized(ConfigError):
    pass


class TooManyFeatures(ConfigError):
    pass


class PatchTooLarge(ConfigError):
    pass


class ExplainerNotReRunnable(ConfigError):
    pass


# -- oracles ------------------------------------------------------------

class NotDifferentiable(OracleError):
    pass


class OracleRequired(OracleError):
    pass


class OracleTimeout(OracleError):
    pass


class OracleProtocol(OracleError):
    pass


class IoError(UxevalError):
    """Report files could not be written."""
