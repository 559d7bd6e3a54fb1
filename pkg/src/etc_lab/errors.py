"""Exception hierarchy for etc_lab."""


class EtcLabError(Exception):
    """Base class for all library errors."""


class DomainError(EtcLabError, ValueError):
    """An argument lies outside the domain of an operation."""


class InfeasibleTargetError(DomainError):
    """The requested event-based gain ``mu_d`` does not exceed ``mu``."""


class InfeasibleCertificateError(DomainError):
    """``B1`` or ``B3`` is non-positive, so no positive dwell estimate exists."""


class UnsupportedExponentError(DomainError):
    """The Lp exponent is outside the range supported by the analytic bounds."""


class InconsistentBoundsError(EtcLabError):
    """Derived quantities violate ``a*c < B1`` or ``b*c <= B3``."""


class UnachievableFloorError(DomainError):
    """A requested inter-event floor exceeds the largest achievable value."""


class UnknownPresetError(EtcLabError, KeyError):
    pass


class DivergenceError(EtcLabError, ArithmeticError):
    """The closed loop produced a non-finite state."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class ConfigError(EtcLabError, ValueError):
    pass
