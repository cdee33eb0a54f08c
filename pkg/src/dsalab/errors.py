"""Exception types shared across the package."""


class DsaError(Exception):
    """Base class for all package-specific errors."""


class ActionOutOfRange(DsaError):
    pass


class SubsetOutOfRange(DsaError):
    pass


class AllocationOverflow(DsaError):
    """More transmitting PUs than channels (cannot happen when K_p <= N)."""


class ShapeMismatch(DsaError):
    pass


class ActionIndexOutOfRange(DsaError):
    pass


class UnknownState(DsaError):
    """Raised when the observation pair does not determine the network state."""


class NoFeasibleSteps(DsaError):
    """Relative throughput is undefined: no feasible step in the window."""


class LengthMismatch(DsaError):
    pass


class UnsupportedGeometry(DsaError):
    """The analytic machinery requires an even channel count and subsets of 2."""


class ConfigError(DsaError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(ConfigError):
    def __init__(self, message, key=None):
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key
