"""Exception hierarchy shared by all modules."""


class EtcError(Exception):
    """Base class for every error raised by etcsim."""

    reason = "error"


class ArgumentError(EtcError, ValueError):
    reason = "argument"


class DimensionError(ArgumentError):
    reason = "dimension"


class DomainError(EtcError, ValueError):
    """A gain function was evaluated at a negative argument."""

    reason = "domain"


class GainRangeError(EtcError, ValueError):
    """Inverse requested outside the validated range of a gain."""

    reason = "range"


class SlopeEstimationError(EtcError, ArithmeticError):
    reason = "slope_estimation"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SmallGainError(EtcError):
    reason = "small_gain"

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class SynthesisError(EtcError):
    reason = "synthesis"

    def __init__(self, message, level=None, witness=None):
        super().__init__(message)
        self.level = level
        self.witness = witness


class CalibrationError(EtcError):
    reason = "calibration"

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class UnboundedIntervalError(EtcError):
    reason = "unbounded_interval"


class SimulationDivergence(EtcError):
    reason = "divergence"

    def __init__(self, message, t_last=None):
        super().__init__(message)
        self.t_last = t_last


class ConfigError(EtcError):
    reason = "parse"
