"""Exception vocabulary shared across the package."""


class ProbeTimeError(Exception):
    """Base class for all package-specific errors."""


class NoData(ProbeTimeError):
    """An operation received an empty input where at least one item is required."""


class DuplicateCheckpoint(ProbeTimeError):
    """Two evaluation records claim the same checkpoint step."""


class ParseError(ProbeTimeError):
    """Malformed file content. The message carries line/field context."""

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        ctx = []
        if line is not None:
            ctx.append(f"line {line}")
        if field is not None:
            ctx.append(f"field '{field}'")
        if ctx:
            message = f"{message} ({', '.join(ctx)})"
        super().__init__(message)
        self.line = line
        self.field = field


class ConfigError(ProbeTimeError):
    """Invalid or inconsistent configuration. The message names the offending key."""


class ContractViolation(ProbeTimeError):
    """A caller broke a documented precondition."""


class CapabilityError(ProbeTimeError):
    """A backend was asked for a capability it does not advertise."""


class DataError(ProbeTimeError):
    """A dataset violates the task's labelling scheme."""


class SkipSignal(ProbeTimeError):
    """Raised when a single probe item cannot be scored (e.g. out-of-vocabulary
    token); evaluators catch it and count the item as skipped."""


class UndefinedThreshold(ProbeTimeError):
    """Relative thresholds are meaningless for a series whose maximum is <= 0."""


class InsufficientOverlap(ProbeTimeError):
    """Two series share fewer than two checkpoint steps."""


class SmoothedInputError(ProbeTimeError):
    """A smoothed series was passed to a metric that is defined on raw data only."""
