"""Errors raised by the cell model library.

Every error carries a machine-readable ``code`` so front ends can report the
failure class without parsing messages.
"""


class CacException(Exception):
    """Base error of the admission-control library."""

    code = "cac"


class ContractViolation(CacException):
    """A caller broke an operation precondition."""

    code = "contract"


class InfeasibleRebalance(CacException):
    """The requested occupancy does not fit even at the profile floors."""

    code = "infeasible_rebalance"


class DegenerateChain(CacException):
    """A birth-death chain cannot be solved with the given rates."""

    code = "degenerate_chain"


class NumericalFailure(CacException):
    """A solver did not reach the required accuracy."""

    code = "numerical_failure"


class StateSpaceTooLarge(CacException):
    """The exact state space grew beyond the configured cap."""

    code = "cap_exceeded"

    def __init__(self, count: int, cap: int):
        """Record how many states were reached before giving up."""

        super().__init__(f"State space too large: {count} states reached, cap is {cap}")
        self.count = count
        self.cap = cap


class NoSampleError(CacException):
    """A simulation has an empty measurement window."""

    code = "no_sample"


class ConfigError(CacException):
    """Invalid experiment configuration."""

    code = "config"


class ConfigFileMissing(ConfigError):
    """Configuration file does not exist."""

    code = "config.missing_file"


class ConfigSchemaError(ConfigError):
    """Configuration document does not match the schema."""

    code = "config.schema"


class ConfigInvariantError(ConfigError):
    """Configuration values break a model invariant."""

    code = "config.invariant"


class InvariantValueError(ValueError):
    """Validator failure tagged so schema and invariant problems can be told apart."""

    code = "invariant"
