"""Exception types shared across the toolkit."""


class ImmunetError(Exception):
    """Base class for every toolkit error."""


class ConfigError(ImmunetError):
    """Invalid configuration, scenario, or command usage."""


class DomainViolationError(ImmunetError):
    """A categorical value fell outside its declared finite domain."""


class SignalRangeError(ImmunetError):
    """A signal value fell outside [0, signal_max]."""

    def __init__(self, channel: str, value: float, signal_max: float):
        self.channel = channel
        self.value = value
        self.signal_max = signal_max
        super().__init__(
            f"signal channel '{channel}' value {value!r} outside [0, {signal_max}]"
        )


class TraceOrderError(ImmunetError):
    """Trace records are not sorted by tick."""


class LifecycleError(ImmunetError):
    """A cell operation was applied in the wrong lifecycle state."""


class UntrainableModelError(ImmunetError):
    """Training saturated a domain, leaving an empty complement set."""


class TraceParseError(ImmunetError):
    """Malformed trace or model file. Carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class ProtocolError(ImmunetError):
    """Invalid wire message. `reason` is the short token echoed in ERR replies."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)
