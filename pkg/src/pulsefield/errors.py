"""Exception hierarchy shared by all modules."""


class PulsefieldError(Exception):
    """Base class for every error raised by the package."""


# configuration / input validation
class ConfigError(PulsefieldError, ValueError):
    pass


class InvalidPhaseResponse(PulsefieldError, ValueError):
    pass


class NotNormalized(PulsefieldError, ValueError):
    pass


class NonPositiveDensity(PulsefieldError, ValueError):
    pass


class GridMismatch(PulsefieldError, ValueError):
    pass


class HypothesisViolated(PulsefieldError, ValueError):
    pass


class ConstraintViolated(PulsefieldError, ValueError):
    pass


class CompatibilityViolated(PulsefieldError, ValueError):
    pass


class NotAffine(PulsefieldError, ValueError):
    pass


# numerical failures
class QuadratureFailure(PulsefieldError, RuntimeError):
    pass


class RootFindFailed(PulsefieldError, RuntimeError):
    pass


class IntegrationFailure(PulsefieldError, RuntimeError):
    pass


class BracketFailure(PulsefieldError, RuntimeError):
    pass


class NoSteadyState(PulsefieldError, RuntimeError):
    pass


class InsufficientHistory(PulsefieldError, RuntimeError):
    pass


class DegenerateDistance(PulsefieldError, ValueError):
    pass


class InapplicableBound(PulsefieldError, ValueError):
    def __init__(self, message, reasons=None):
        super().__init__(message)
        self.reasons = dict(reasons or {})


class BlowUpDetected(PulsefieldError):
    """Raised by a single step when the boundary root drops below the blow-up threshold."""

    def __init__(self, n_tilde: float, tau: float):
        super().__init__(f"firing rate diverges: step root {n_tilde:.3e} at tau={tau:.6f}")
        self.n_tilde = n_tilde
        self.tau = tau
